"""Obfuscation-set policies p(U | X, S).

A policy maps the pair (private request s, current request x) to a random
subset u of message indices that always contains x and whose marginal law
is identical for every s, so observing u reveals nothing about s. Two
constructors are provided:

* an exact linear program minimizing the expected retrieval cost
  E[C(N, |U|)] over all valid policies (optimal, exponential in K), and
* a polynomial-time greedy construction driven by the sorted-likelihood
  profile of p(x|s), which guarantees P(|U| <= i) >= sum of the first i
  size weights (and therefore a matching cost bound) without solving the LP.

Subsets are encoded as K-bit masks; bit x set means message x is in the set.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    ConditionalMatrix,
    JointDistribution,
    capacity_cost,
    conditional_from_joint,
    format_rational,
    parse_rational,
    sample_weighted,
)
from .errors import (
    ConstructionFailed,
    PartialSupport,
    TooLarge,
    UnsupportedPair,
)
from .simplex import minimize

ZERO = Fraction(0)
ONE = Fraction(1)

DEFAULT_LP_CAP = 6


def mask_of(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def indices_of(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def full_mask(K: int) -> int:
    return (1 << K) - 1


@dataclass(frozen=True)
class LikelihoodProfile:
    """Sorted-likelihood profile of a conditional matrix.

    ``order[x]`` lists the rows s by increasing p(x|s) (ties by smaller s).
    ``rank_sums[j-1]`` is the sum over x of the j-th smallest likelihood;
    ``unit_rank`` is the largest j whose rank sum is still <= 1; and
    ``size_weights[j-1]`` is the guaranteed probability weight for
    obfuscation sets of size j.
    """

    K: int
    order: tuple[tuple[int, ...], ...]
    rank_sums: tuple[Fraction, ...]
    unit_rank: int
    size_weights: tuple[Fraction, ...]


def likelihood_profile(cond: ConditionalMatrix) -> LikelihoodProfile:
    if not cond.full_support():
        raise PartialSupport(
            f"profile needs all {cond.K} rows, got support {cond.support}"
        )
    K = cond.K
    order = tuple(
        tuple(sorted(range(K), key=lambda s: (cond.rows[s][x], s))) for x in range(K)
    )
    rank_sums = tuple(
        sum((cond.rows[order[x][j]][x] for x in range(K)), ZERO) for j in range(K)
    )
    unit_rank = max(j + 1 for j in range(K) if rank_sums[j] <= 1)
    weights = []
    for j in range(1, K + 1):
        if j <= unit_rank:
            prev = rank_sums[j - 2] if j >= 2 else ZERO
            weights.append(rank_sums[j - 1] - prev)
        elif j == unit_rank + 1:
            weights.append(ONE - rank_sums[unit_rank - 1])
        else:
            weights.append(ZERO)
    return LikelihoodProfile(
        K=K,
        order=order,
        rank_sums=rank_sums,
        unit_rank=unit_rank,
        size_weights=tuple(weights),
    )


@dataclass(frozen=True)
class ObfuscationPolicy:
    """Sparse conditional law p(U=u | X=x, S=s); absent entries are zero.

    Keys are (s, x, mask). Invariants (checked by validate_policy): every
    stored mask contains x, probabilities at each supported (s, x) sum to 1,
    and the marginal P(U=u | S=s) is the same for every supported s.
    """

    K: int
    entries: dict[tuple[int, int, int], Fraction]

    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted({(s, x) for s, x, _ in self.entries}))

    def at(self, s: int, x: int) -> list[tuple[int, Fraction]]:
        """(mask, probability) choices at one (s, x) pair, mask-ascending."""
        found = [
            (mask, p) for (es, ex, mask), p in self.entries.items() if es == s and ex == x
        ]
        return sorted(found)

    def subset_marginal(self, cond: ConditionalMatrix, s: int) -> dict[int, Fraction]:
        """P(U=u | S=s) for one supported s."""
        out: dict[int, Fraction] = {}
        for (es, x, mask), p in self.entries.items():
            if es == s:
                w = cond.rows[s][x] * p
                if w != 0:
                    out[mask] = out.get(mask, ZERO) + w
        return out

    def size_marginal(self, cond: ConditionalMatrix) -> tuple[Fraction, ...]:
        """P(|U| = j) for j = 1..K, computed at the first supported s.

        Identical for every supported s whenever the policy is valid.
        """
        s = cond.support[0]
        sizes = [ZERO] * self.K
        for mask, w in self.subset_marginal(cond, s).items():
            sizes[mask.bit_count() - 1] += w
        return tuple(sizes)

    def to_json_dict(self) -> dict:
        entries = [
            {"s": s, "x": x, "u": list(indices_of(mask)), "p": format_rational(p)}
            for (s, x, mask), p in sorted(self.entries.items())
        ]
        return {"K": self.K, "entries": entries}

    @classmethod
    def from_json_dict(cls, data: dict) -> "ObfuscationPolicy":
        entries: dict[tuple[int, int, int], Fraction] = {}
        for item in data["entries"]:
            p = parse_rational(item["p"])
            if p != 0:
                entries[(item["s"], item["x"], mask_of(item["u"]))] = p
        return cls(K=data["K"], entries=entries)


def trivial_policy(K: int) -> ObfuscationPolicy:
    """The always-feasible policy that hides every request in the full set."""
    mask = full_mask(K)
    return ObfuscationPolicy(
        K=K, entries={(s, x, mask): ONE for s in range(K) for x in range(K)}
    )


def greedy_policy(cond: ConditionalMatrix) -> ObfuscationPolicy:
    """Poly(K) constructive policy meeting the size-weight guarantee.

    Works in rounds c = 1..unit_rank. Round c moves, for every column i, the
    increment between the c-th and (c-1)-th smallest likelihood of i onto a
    subset of size at most c: rows ranked >= c contribute the mass at x = i,
    while each lower-ranked row hides the same mass behind a companion
    column chosen to have enough residual budget left. A final capped round
    places the leftover per-row mass on subsets of size at most
    unit_rank + 1. Every row receives identical per-fragment mass for the
    same subset, so the subset marginal P(U|S=s) is constant in s by
    construction, and the cumulative size law dominates the size weights.
    """
    if not cond.full_support():
        raise PartialSupport(
            f"greedy construction needs all {cond.K} rows, got support {cond.support}"
        )
    profile = likelihood_profile(cond)
    K = cond.K
    order = profile.order
    sigma = profile.unit_rank
    leftover = ONE - profile.rank_sums[sigma - 1]
    last_round = sigma + 1 if leftover > 0 else sigma
    # increment[c-1][i]: fresh mass column i contributes in round c; the
    # round sigma+1 increments are capped so they sum to the per-row
    # leftover budget, keeping every subset at size <= sigma + 1
    increments = []
    for c in range(1, last_round + 1):
        row = []
        for i in range(K):
            high = cond.rows[order[i][c - 1]][i]
            low = cond.rows[order[i][c - 2]][i] if c >= 2 else ZERO
            row.append(high - low)
        if c == sigma + 1:
            budget = leftover
            for i in range(K):
                row[i] = min(row[i], budget)
                budget -= row[i]
        increments.append(row)
    # rank_of[l][s]: 1-based rank of row s in column l's order
    rank_of = [[0] * K for _ in range(K)]
    for l in range(K):
        for j, s in enumerate(order[l]):
            rank_of[l][s] = j + 1

    residual = [list(row) for row in cond.rows]
    assigned: dict[tuple[int, int, int], Fraction] = {}

    def future_self_use(s: int, l: int, c: int, i: int) -> Fraction:
        # mass column l will still place at row s via its own (x = l)
        # assignments in rounds not yet applied at this decision point
        total = ZERO
        for cc in range(c, last_round + 1):
            if rank_of[l][s] >= cc and (cc > c or l > i):
                total += increments[cc - 1][l]
        return total

    def place(c: int, i: int, amount: Fraction) -> None:
        """Move ``amount`` of column i's round-c increment, splitting into
        fragments when a single companion lacks the headroom."""
        remaining = amount
        while remaining > 0:
            members = {i}
            placement = []  # (row s, column to charge)
            fragment = remaining
            for j in range(1, c):
                s = order[i][j - 1]
                best_l = None
                best_headroom = None
                for l in range(K):
                    if l == i:
                        continue
                    headroom = residual[s][l] - future_self_use(s, l, c, i)
                    if headroom <= 0:
                        continue
                    if best_headroom is None or headroom > best_headroom:
                        best_headroom = headroom
                        best_l = l
                if best_l is None:
                    raise ConstructionFailed(
                        f"no companion with residual headroom left at row {s} "
                        f"in round {c} for column {i}"
                    )
                members.add(best_l)
                placement.append((s, best_l))
                fragment = min(fragment, best_headroom)
            for j in range(c, K + 1):
                placement.append((order[i][j - 1], i))
            mask = mask_of(members)
            for s, col in placement:
                if residual[s][col] < fragment:
                    raise ConstructionFailed(
                        f"residual underflow at row {s}, column {col} in round {c}"
                    )
            for s, col in placement:
                residual[s][col] -= fragment
                key = (s, col, mask)
                assigned[key] = assigned.get(key, ZERO) + fragment
            remaining -= fragment

    for c in range(1, last_round + 1):
        for i in range(K):
            if increments[c - 1][i] > 0:
                place(c, i, increments[c - 1][i])

    if any(v != 0 for row in residual for v in row):
        raise ConstructionFailed("construction ended with nonzero residual mass")

    entries = {
        (s, x, mask): joint_mass / cond.rows[s][x]
        for (s, x, mask), joint_mass in assigned.items()
        if joint_mass != 0
    }
    return ObfuscationPolicy(K=K, entries=entries)


@dataclass(frozen=True)
class LpInstance:
    """Explicit LP over the decision variables p(u|x,s), x in u.

    Equality rows are normalizations (one per (s, x) with s supported) and
    marginal-matching rows against the first supported s (one per other
    supported s and non-empty subset). Non-negativity is implicit.
    """

    K: int
    n_servers: int
    support: tuple[int, ...]
    variables: tuple[tuple[int, int, int], ...]  # (s, x, mask)
    costs: tuple[Fraction, ...]
    rows: tuple[tuple[Fraction, ...], ...]
    rhs: tuple[Fraction, ...]


def build_lp(
    joint: JointDistribution, n_servers: int, cap: int = DEFAULT_LP_CAP
) -> LpInstance:
    if joint.K > cap:
        raise TooLarge(f"K={joint.K} exceeds the LP cap {cap}")
    K = joint.K
    cond = conditional_from_joint(joint)
    support = cond.support
    variables = []
    costs = []
    for s in support:
        for x in range(K):
            for mask in range(1, 1 << K):
                if mask >> x & 1:
                    variables.append((s, x, mask))
                    costs.append(joint.table[s][x] * capacity_cost(n_servers, mask.bit_count()))
    index = {v: j for j, v in enumerate(variables)}
    n = len(variables)

    rows = []
    rhs = []
    for s in support:
        for x in range(K):
            row = [ZERO] * n
            for mask in range(1, 1 << K):
                if mask >> x & 1:
                    row[index[(s, x, mask)]] = ONE
            rows.append(row)
            rhs.append(ONE)
    ref = support[0]
    for s in support[1:]:
        for mask in range(1, 1 << K):
            row = [ZERO] * n
            for x in indices_of(mask):
                row[index[(s, x, mask)]] += cond.rows[s][x]
                row[index[(ref, x, mask)]] -= cond.rows[ref][x]
            rows.append(row)
            rhs.append(ZERO)

    return LpInstance(
        K=K,
        n_servers=n_servers,
        support=support,
        variables=tuple(variables),
        costs=tuple(costs),
        rows=tuple(tuple(r) for r in rows),
        rhs=tuple(rhs),
    )


def solve_lp(instance: LpInstance) -> ObfuscationPolicy:
    """Vertex-optimal policy for the instance, in exact rationals."""
    solution = minimize(instance.costs, instance.rows, instance.rhs)
    # the full-set policy is always feasible, so the LP cannot be infeasible
    # or unbounded for well-formed instances
    if solution.status != "optimal":
        raise ConstructionFailed(f"LP solve ended with status {solution.status}")
    entries = {
        var: value
        for var, value in zip(instance.variables, solution.x)
        if value != 0
    }
    return ObfuscationPolicy(K=instance.K, entries=entries)


@dataclass(frozen=True)
class ValidationReport:
    support_ok: bool
    normalization_ok: bool
    independence_ok: bool
    witness: tuple | None = None

    @property
    def all_ok(self) -> bool:
        return self.support_ok and self.normalization_ok and self.independence_ok


def validate_policy(policy: ObfuscationPolicy, joint: JointDistribution) -> ValidationReport:
    """Exact check of the three policy invariants against a joint law.

    The first failing check records a witness: (s, x, u) for support or
    normalization, (s, s_ref, u) for a marginal mismatch.
    """
    cond = conditional_from_joint(joint)
    witness = None

    support_ok = True
    for (s, x, mask), p in sorted(policy.entries.items()):
        if not (mask >> x & 1) or p < 0:
            support_ok = False
            witness = witness or ("support", s, x, indices_of(mask))
            break

    normalization_ok = True
    for s in cond.support:
        for x in range(policy.K):
            if cond.rows[s][x] == 0:
                continue
            total = sum((p for (es, ex, _), p in policy.entries.items() if es == s and ex == x), ZERO)
            if total != 1:
                normalization_ok = False
                witness = witness or ("normalization", s, x, total)
                break
        if not normalization_ok:
            break

    independence_ok = True
    if cond.support:
        ref = cond.support[0]
        ref_marginal = policy.subset_marginal(cond, ref)
        for s in cond.support[1:]:
            marginal = policy.subset_marginal(cond, s)
            for mask in sorted(set(ref_marginal) | set(marginal)):
                if ref_marginal.get(mask, ZERO) != marginal.get(mask, ZERO):
                    independence_ok = False
                    witness = witness or ("independence", s, ref, indices_of(mask))
                    break
            if not independence_ok:
                break

    return ValidationReport(
        support_ok=support_ok,
        normalization_ok=normalization_ok,
        independence_ok=independence_ok,
        witness=witness,
    )


def expected_cost(
    policy: ObfuscationPolicy, joint: JointDistribution, n_servers: int
) -> Fraction:
    """E[C(N, |U|)] under the joint law and the policy."""
    total = ZERO
    for (s, x, mask), p in policy.entries.items():
        weight = joint.table[s][x]
        if weight != 0:
            total += weight * p * capacity_cost(n_servers, mask.bit_count())
    return total


def sample_subset(
    policy: ObfuscationPolicy, s: int, x: int, rng: random.Random
) -> tuple[int, ...]:
    """Draw a subset for requests (s, x); always contains x."""
    choices = policy.at(s, x)
    if not choices:
        raise UnsupportedPair(f"policy has no entries at (s={s}, x={x})")
    mask = sample_weighted(rng, choices)
    return indices_of(mask)
