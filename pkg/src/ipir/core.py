"""Exact probability primitives, message storage, and shared configuration.

All probability values are `fractions.Fraction`. The privacy requirements
checked elsewhere in the package are exact equalities (zero mutual
information), so probability-critical paths never touch floating point;
floats appear only in human-readable reporting.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .errors import (
    DistributionError,
    InvalidParams,
    NegativeEntry,
    SumNotOne,
)

Rational = Fraction

ONE = Fraction(1)
ZERO = Fraction(0)


def parse_rational(text: str | int) -> Fraction:
    """Parse "a/b", "a", or an int into an exact Fraction."""
    if isinstance(text, int):
        return Fraction(text)
    return Fraction(str(text).strip())


def format_rational(value: Fraction) -> str:
    """Render a Fraction as "a/b" (or "a" when the denominator is 1)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def approx(value: Fraction, digits: int = 4) -> str:
    """Human-readable "a/b (≈x.xxxx)" rendering used in reports."""
    return f"{format_rational(value)} (≈{float(value):.{digits}f})"


@dataclass(frozen=True)
class JointDistribution:
    """Joint law p(S, X) over [K] x [K]; ``table[s][x]`` = p(S=s, X=x).

    Indices are 0-based throughout the package.
    """

    K: int
    table: tuple[tuple[Fraction, ...], ...]

    def p_s(self, s: int) -> Fraction:
        return sum(self.table[s], ZERO)

    def support(self) -> tuple[int, ...]:
        """Indices s with p(S=s) > 0."""
        return tuple(s for s in range(self.K) if self.p_s(s) > 0)

    def to_json_dict(self) -> dict:
        return {"K": self.K, "p": [[format_rational(v) for v in row] for row in self.table]}

    @classmethod
    def from_json_dict(cls, data: dict) -> "JointDistribution":
        rows = [[parse_rational(v) for v in row] for row in data["p"]]
        return validate_joint(rows)


@dataclass(frozen=True)
class ConditionalMatrix:
    """Rows of p(X=x | S=s); ``rows[s][x]``. Unsupported s are flagged, not fatal.

    ``support`` lists the s values whose rows are meaningful (p(S=s) > 0 in
    the joint the matrix came from, or all rows when built directly).
    """

    K: int
    rows: tuple[tuple[Fraction, ...], ...]
    support: tuple[int, ...]

    def full_support(self) -> bool:
        return len(self.support) == self.K

    @classmethod
    def from_rows(cls, rows) -> "ConditionalMatrix":
        """Build from explicit row-stochastic rows (all rows supported)."""
        K = len(rows)
        frozen = []
        for s, row in enumerate(rows):
            row = tuple(Fraction(v) for v in row)
            if len(row) != K:
                raise DistributionError(f"row {s} has {len(row)} entries, expected {K}")
            if any(v < 0 for v in row):
                raise NegativeEntry(f"row {s} has a negative entry")
            total = sum(row, ZERO)
            if total != 1:
                raise SumNotOne(total, 1 - total)
            frozen.append(row)
        return cls(K=K, rows=tuple(frozen), support=tuple(range(K)))


def validate_joint(raw) -> JointDistribution:
    """Validate a square matrix of rationals as a joint distribution.

    Raises NegativeEntry or SumNotOne (with the exact deficit); degenerate
    but consistent inputs (rows of zeros) are accepted.
    """
    K = len(raw)
    table = []
    for s, row in enumerate(raw):
        if len(row) != K:
            raise DistributionError(f"matrix not square: row {s} has {len(row)} entries, expected {K}")
        frozen = tuple(Fraction(v) for v in row)
        for x, v in enumerate(frozen):
            if v < 0:
                raise NegativeEntry(f"entry ({s}, {x}) = {v} is negative")
        table.append(frozen)
    total = sum((v for row in table for v in row), ZERO)
    if total != 1:
        raise SumNotOne(total, 1 - total)
    return JointDistribution(K=K, table=tuple(table))


def conditional_from_joint(joint: JointDistribution) -> ConditionalMatrix:
    """Divide each supported row of the joint by its mass p(S=s).

    Rows with p(S=s) = 0 are excluded from ``support`` and left as zeros.
    """
    rows = []
    support = []
    for s in range(joint.K):
        mass = joint.p_s(s)
        if mass > 0:
            rows.append(tuple(v / mass for v in joint.table[s]))
            support.append(s)
        else:
            rows.append(tuple(ZERO for _ in range(joint.K)))
    return ConditionalMatrix(K=joint.K, rows=tuple(rows), support=tuple(support))


def capacity_cost(n_servers: int, k: int) -> Fraction:
    """Optimal normalized download cost for retrieving one of k messages
    from n_servers replicas: 1 + 1/N + ... + 1/N^(k-1), exactly."""
    if n_servers < 2:
        raise InvalidParams(f"need at least 2 servers, got {n_servers}")
    if k < 1:
        raise InvalidParams(f"need at least 1 message, got {k}")
    return sum((Fraction(1, n_servers**j) for j in range(k)), ZERO)


@dataclass(frozen=True)
class MessageStore:
    """K messages of exactly L bits each, replicated at every server."""

    K: int
    L: int
    data: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.data) != self.K:
            raise InvalidParams(f"expected {self.K} messages, got {len(self.data)}")
        for m, bits in enumerate(self.data):
            if len(bits) != self.L:
                raise InvalidParams(f"message {m} has {len(bits)} bits, expected {self.L}")
            if any(b not in (0, 1) for b in bits):
                raise InvalidParams(f"message {m} contains non-bit values")

    def bit(self, msg: int, pos: int) -> int:
        return self.data[msg][pos]

    @classmethod
    def random(cls, K: int, L: int, rng: random.Random) -> "MessageStore":
        data = tuple(tuple(rng.randrange(2) for _ in range(L)) for _ in range(K))
        return cls(K=K, L=L, data=data)


@dataclass(frozen=True)
class SystemConfig:
    """System-wide parameters: server count, message count and length, seed.

    L must be a multiple of N^K so the retrieval sub-scheme works for every
    subset size without per-retrieval padding.
    """

    N: int
    K: int
    L: int
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise InvalidParams(f"need at least 2 servers, got {self.N}")
        if self.K < 1:
            raise InvalidParams(f"need at least 1 message, got {self.K}")
        if self.L < 1 or self.L % (self.N**self.K) != 0:
            raise InvalidParams(
                f"L={self.L} must be a positive multiple of N^K={self.N ** self.K}"
            )


def default_length(n_servers: int, k_messages: int) -> int:
    """Smallest valid message length for (N, K): N^K bits."""
    return n_servers**k_messages


def fork_rng(seed: int, *labels) -> random.Random:
    """Derive an independent named random stream from a master seed.

    Streams are identified by their label path, so components can draw
    randomness concurrently without changing each other's results.
    """
    tag = ":".join([str(seed), *map(str, labels)]).encode()
    digest = hashlib.blake2b(tag, digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


class WeightedSampler:
    """Exact sampler over (value, Fraction-weight) pairs summing to 1.

    A uniform integer below the common denominator is compared against
    cumulative numerators, so no float bias enters.
    """

    def __init__(self, items):
        items = list(items)
        if not items:
            raise InvalidParams("nothing to sample from")
        self.denominator = lcm(*[w.denominator for _, w in items])
        self.values = []
        self.thresholds = []
        acc = 0
        for value, weight in items:
            acc += weight.numerator * (self.denominator // weight.denominator)
            self.values.append(value)
            self.thresholds.append(acc)
        if acc != self.denominator:
            raise DistributionError(
                f"weights sum to {Fraction(acc, self.denominator)}, expected 1"
            )

    def draw(self, rng: random.Random):
        pick = rng.randrange(self.denominator)
        for value, threshold in zip(self.values, self.thresholds):
            if pick < threshold:
                return value
        raise AssertionError("unreachable")


def sample_weighted(rng: random.Random, items) -> object:
    """Draw once from (value, Fraction-weight) pairs whose weights sum to 1."""
    return WeightedSampler(items).draw(rng)


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
