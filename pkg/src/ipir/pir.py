"""Capacity-achieving multi-server retrieval over a subset of messages.

Implements the iterative one-singleton-per-message, side-information-reusing
query construction: in round i, each server is asked (N-1)^(i-1) XOR-sums
for every i-subset of the retrieval subset. Sums containing the desired
message pair one fresh desired bit with an (i-1)-sum of other messages that
some *other* server already answered verbatim, so the desired bit is
recovered with a single XOR. Sums without the desired message consume fresh
bits. Every bit position of every message is used at most once globally,
per-message positions are scrambled by private uniform permutations drawn
fresh per retrieval, and emitted combos are sorted, so the per-server query
distribution is the same whichever subset member is desired.

Messages longer than one block run the construction independently per block
of N^k bits with independent permutations.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import combinations, permutations, product

from .errors import (
    BlockMismatch,
    DesiredNotInSubset,
    InconsistentAnswers,
    InvalidParams,
    OutOfRange,
)
from .core import MessageStore


@dataclass(frozen=True)
class SchemeParams:
    n_servers: int
    subset: tuple[int, ...]  # absolute message indices, ascending
    k: int
    block: int  # N^k bits
    blocks: int
    L: int

    def per_server_length(self) -> int:
        return self.blocks * (self.n_servers**self.k - 1) // (self.n_servers - 1)


def pir_setup(n_servers: int, subset, L: int) -> SchemeParams:
    subset = tuple(sorted(set(subset)))
    if n_servers < 2:
        raise InvalidParams(f"need at least 2 servers, got {n_servers}")
    if not subset:
        raise InvalidParams("retrieval subset is empty")
    if any(m < 0 for m in subset):
        raise InvalidParams(f"negative message index in {subset}")
    k = len(subset)
    block = n_servers**k
    if L < 1 or L % block != 0:
        raise BlockMismatch(f"L={L} is not a positive multiple of N^k={block}")
    return SchemeParams(
        n_servers=n_servers, subset=subset, k=k, block=block, blocks=L // block, L=L
    )


@dataclass(frozen=True)
class PirKey:
    """Per (subset position, block): a private permutation of bit positions."""

    perms: tuple[tuple[tuple[int, ...], ...], ...]

    @classmethod
    def random(cls, params: SchemeParams, rng: random.Random) -> "PirKey":
        perms = []
        for _ in range(params.k):
            rows = []
            for _ in range(params.blocks):
                row = list(range(params.block))
                rng.shuffle(row)
                rows.append(tuple(row))
            perms.append(tuple(rows))
        return cls(perms=tuple(perms))


def enumerate_keys(params: SchemeParams):
    """All keys of the scheme; (block!)^(k * blocks) of them."""
    pools = [
        list(permutations(range(params.block)))
        for _ in range(params.k * params.blocks)
    ]
    for combo in product(*pools):
        perms = tuple(
            tuple(combo[j * params.blocks + b] for b in range(params.blocks))
            for j in range(params.k)
        )
        yield PirKey(perms=perms)


def key_count(params: SchemeParams) -> int:
    return math.factorial(params.block) ** (params.k * params.blocks)


@dataclass(frozen=True)
class PirQuery:
    """Canonical query for one server: sorted XOR-combos of (msg, bit) pairs."""

    server: int
    combos: tuple[tuple[tuple[int, int], ...], ...]


@dataclass(frozen=True)
class PirAnswer:
    server: int
    bits: tuple[int, ...]


def _block_plan(params: SchemeParams, desired_pos: int, key: PirKey, block: int):
    """Generation-order combos per server plus the desired-bit decode plan.

    Decode entries are (position, server, combo, side_server, side_combo);
    singleton entries carry no side combo.
    """
    n_servers, k, subset = params.n_servers, params.k, params.subset
    offset = block * params.block
    streams = [iter(key.perms[j][block]) for j in range(k)]
    per_server: list[list] = [[] for _ in range(n_servers)]
    decode = []
    side_pool: dict[tuple, list[list]] = {}

    for n in range(n_servers):
        for j in range(k):
            pos = next(streams[j]) + offset
            combo = ((subset[j], pos),)
            per_server[n].append(combo)
            if j == desired_pos:
                decode.append((pos, n, combo, None, None))
            else:
                side_pool.setdefault((j,), [[] for _ in range(n_servers)])[n].append(combo)

    others = [j for j in range(k) if j != desired_pos]
    for size in range(2, k + 1):
        new_pool: dict[tuple, list[list]] = {}
        for n in range(n_servers):
            for side_type in sorted(side_pool):
                for m in range(n_servers):
                    if m == n:
                        continue
                    for side_combo in side_pool[side_type][m]:
                        pos = next(streams[desired_pos]) + offset
                        combo = tuple(sorted(side_combo + ((subset[desired_pos], pos),)))
                        per_server[n].append(combo)
                        decode.append((pos, n, combo, m, side_combo))
            for group in combinations(others, size):
                for _ in range((n_servers - 1) ** (size - 1)):
                    combo = tuple(
                        sorted((subset[j], next(streams[j]) + offset) for j in group)
                    )
                    per_server[n].append(combo)
                    new_pool.setdefault(group, [[] for _ in range(n_servers)])[n].append(combo)
        side_pool = new_pool

    return per_server, decode


def _plans(params: SchemeParams, desired: int, key: PirKey):
    if desired not in params.subset:
        raise DesiredNotInSubset(f"desired {desired} not in subset {params.subset}")
    desired_pos = params.subset.index(desired)
    per_server: list[list] = [[] for _ in range(params.n_servers)]
    decode = []
    for block in range(params.blocks):
        block_combos, block_decode = _block_plan(params, desired_pos, key, block)
        for n in range(params.n_servers):
            per_server[n].extend(block_combos[n])
        decode.extend(block_decode)
    return per_server, decode


def build_queries(params: SchemeParams, desired: int, key: PirKey) -> list[PirQuery]:
    """Deterministic canonical queries for (params, desired, key)."""
    per_server, _ = _plans(params, desired, key)
    return [
        PirQuery(server=n, combos=tuple(sorted(per_server[n])))
        for n in range(params.n_servers)
    ]


def pir_query(
    params: SchemeParams, desired: int, rng: random.Random
) -> tuple[list[PirQuery], PirKey]:
    """Draw a fresh key and build the N queries for the desired message."""
    if desired not in params.subset:
        raise DesiredNotInSubset(f"desired {desired} not in subset {params.subset}")
    key = PirKey.random(params, rng)
    return build_queries(params, desired, key), key


def query_pattern(params: SchemeParams, query: PirQuery):
    """Positional-equivalence class of a query.

    The key applies an independent uniform permutation to every
    (message, block) cell, so bit positions within a cell are exchangeable:
    the observable law of a query is the law of its pattern times a uniform
    assignment of distinct positions. Replacing each position by its
    first-appearance rank within its cell therefore loses nothing when
    comparing query distributions, while shrinking the support enough for
    sampled comparisons to resolve.
    """
    ranks: dict[tuple[int, int], dict[int, int]] = {}
    pattern = []
    for combo in query.combos:
        out = []
        for msg, pos in combo:
            cell = (msg, pos // params.block)
            seen = ranks.setdefault(cell, {})
            if pos not in seen:
                seen[pos] = len(seen)
            out.append((msg, cell[1], seen[pos]))
        pattern.append(tuple(out))
    return tuple(pattern)


def pir_answer(query: PirQuery, store: MessageStore) -> PirAnswer:
    """XOR-evaluate each combo against the store; deterministic."""
    data = store.data
    K, L = store.K, store.L
    bits = []
    for combo in query.combos:
        acc = 0
        for msg, pos in combo:
            if not (0 <= msg < K) or not (0 <= pos < L):
                raise OutOfRange(f"combo references ({msg}, {pos})")
            acc ^= data[msg][pos]
        bits.append(acc)
    return PirAnswer(server=query.server, bits=tuple(bits))


def answer_length(query: PirQuery) -> int:
    return len(query.combos)


def _decode_with_plan(
    answers: list[PirAnswer], queries: list[PirQuery], decode, L: int
) -> tuple[int, ...]:
    lookup = []
    for query, answer in zip(queries, answers):
        if len(answer.bits) != len(query.combos):
            raise InconsistentAnswers(
                f"server {query.server} answered {len(answer.bits)} bits "
                f"for {len(query.combos)} combos"
            )
        lookup.append(dict(zip(query.combos, answer.bits)))
    bits = [0] * L
    for pos, n, combo, side_server, side_combo in decode:
        value = lookup[n][combo]
        if side_combo is not None:
            value ^= lookup[side_server][side_combo]
        bits[pos] = value
    return tuple(bits)


def pir_decode(
    answers: list[PirAnswer], key: PirKey, params: SchemeParams, desired: int
) -> tuple[int, ...]:
    """Recover all L bits of the desired message; zero error by construction."""
    per_server, decode = _plans(params, desired, key)
    queries = [
        PirQuery(server=n, combos=tuple(sorted(per_server[n])))
        for n in range(params.n_servers)
    ]
    return _decode_with_plan(answers, queries, decode, params.L)


@dataclass
class PirSession:
    """One retrieval's state: key, canonical queries, and the decode plan.

    Avoids re-deriving the query plan at decode time; behaviour is identical
    to pir_query followed by pir_decode.
    """

    params: SchemeParams
    desired: int
    key: PirKey
    queries: list[PirQuery]
    _decode: list

    def decode(self, answers: list[PirAnswer]) -> tuple[int, ...]:
        return _decode_with_plan(answers, self.queries, self._decode, self.params.L)


def open_session(params: SchemeParams, desired: int, rng: random.Random) -> PirSession:
    if desired not in params.subset:
        raise DesiredNotInSubset(f"desired {desired} not in subset {params.subset}")
    key = PirKey.random(params, rng)
    per_server, decode = _plans(params, desired, key)
    queries = [
        PirQuery(server=n, combos=tuple(sorted(per_server[n])))
        for n in range(params.n_servers)
    ]
    return PirSession(params=params, desired=desired, key=key, queries=queries, _decode=decode)
