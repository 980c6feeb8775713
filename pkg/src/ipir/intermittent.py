"""The two-request protocol: one private and one correlated non-private
retrieval, with exact download accounting.

The private request always runs the full-K retrieval scheme (its cost is
the capacity cost C(N, K) with no room for improvement). The non-private
request samples an obfuscation subset from a policy and runs the same
scheme over that subset, paying C(N, |u|).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .core import (
    JointDistribution,
    MessageStore,
    SystemConfig,
    WeightedSampler,
    capacity_cost,
    fork_rng,
)
from .errors import InconsistentAnswers
from .obfuscation import (
    LikelihoodProfile,
    ObfuscationPolicy,
    expected_cost,
    indices_of,
    sample_subset,
)
from . import pir

ZERO = Fraction(0)


@dataclass(frozen=True)
class CostReport:
    """Normalized download costs: per-server downloaded bits / L."""

    per_server: tuple[Fraction, ...]
    total: Fraction
    bound: Fraction | None = None


def local_transport(store: MessageStore):
    """In-process query/answer exchange against a store."""

    def exchange(queries):
        return [pir.pir_answer(q, store) for q in queries]

    return exchange


@dataclass
class RetrievalRecord:
    """One full retrieval: subset, queries, answers, decoded message, cost."""

    desired: int
    subset: tuple[int, ...]
    queries: list
    answers: list
    decoded: tuple[int, ...]
    cost: CostReport


@dataclass
class TwoRequestTranscript:
    s: int
    x: int
    u: tuple[int, ...]
    private: RetrievalRecord
    nonprivate: RetrievalRecord


@dataclass
class TwoRequestReport:
    n_servers: int
    K: int
    L: int
    trials: int
    cost_s: CostReport
    cost_x_expected: Fraction
    cost_x_empirical: Fraction
    bound: Fraction | None
    samples: list = field(default_factory=list)  # (s, x, subset) per trial
    transcripts: list | None = None


def _run_retrieval(desired, subset, config, store, rng, transport) -> RetrievalRecord:
    params = pir.pir_setup(config.N, subset, config.L)
    session = pir.open_session(params, desired, rng)
    answers = transport(session.queries)
    decoded = session.decode(answers)
    per_server = tuple(
        Fraction(pir.answer_length(q), config.L) for q in session.queries
    )
    cost = CostReport(per_server=per_server, total=sum(per_server, ZERO))
    return RetrievalRecord(
        desired=desired,
        subset=params.subset,
        queries=session.queries,
        answers=answers,
        decoded=decoded,
        cost=cost,
    )


def retrieve_private(
    s: int, config: SystemConfig, store: MessageStore, rng: random.Random, transport=None
) -> RetrievalRecord:
    """Retrieve W_s over all K messages; normalized cost exactly C(N, K)."""
    transport = transport or local_transport(store)
    return _run_retrieval(s, range(config.K), config, store, rng, transport)


def retrieve_nonprivate(
    x: int,
    s: int,
    policy: ObfuscationPolicy,
    config: SystemConfig,
    store: MessageStore,
    rng: random.Random,
    transport=None,
) -> RetrievalRecord:
    """Sample the obfuscation subset for (s, x), then retrieve W_x over it."""
    transport = transport or local_transport(store)
    subset = sample_subset(policy, s, x, rng)
    return _run_retrieval(x, subset, config, store, rng, transport)


def guaranteed_cost_bound(profile: LikelihoodProfile, n_servers: int) -> Fraction:
    """Cost of the worst size law the construction guarantee permits:
    sum of size_weights[j] * C(N, j+1)."""
    return sum(
        (
            w * capacity_cost(n_servers, j + 1)
            for j, w in enumerate(profile.size_weights)
            if w != 0
        ),
        ZERO,
    )


def run_two_request(
    joint: JointDistribution,
    policy: ObfuscationPolicy,
    config: SystemConfig,
    store: MessageStore,
    trials: int,
    transport=None,
    keep_transcripts: bool = False,
    bound: Fraction | None = None,
    private_each_trial: bool = True,
) -> TwoRequestReport:
    """Monte-Carlo over (S, X) ~ joint; all randomness flows from config.seed.

    Every trial runs the obfuscated retrieval end to end (sample the subset,
    query, answer, decode, count bits). The private retrieval has a
    deterministic cost, so ``private_each_trial=False`` executes it once per
    distinct s instead of once per trial; results are unchanged because only
    the non-private cost is a statistic.
    """
    transport = transport or local_transport(store)
    pair_sampler = WeightedSampler(
        ((s, x), joint.table[s][x])
        for s in range(joint.K)
        for x in range(joint.K)
        if joint.table[s][x] != 0
    )
    subset_samplers = {
        (s, x): WeightedSampler(policy.at(s, x)) for s, x in policy.pairs()
    }
    params_cache: dict[tuple[int, ...], pir.SchemeParams] = {}

    def params_for(subset) -> pir.SchemeParams:
        key = tuple(subset)
        found = params_cache.get(key)
        if found is None:
            found = pir.pir_setup(config.N, key, config.L)
            params_cache[key] = found
        return found

    full_params = params_for(range(config.K))
    expected = expected_cost(policy, joint, config.N)

    private_cost = None
    private_seen: set[int] = set()
    bits_x_total = 0
    samples = []
    transcripts = [] if keep_transcripts else None
    for trial in range(trials):
        # one named stream per trial, consumed in a fixed order: request
        # pair, private key, subset draw, non-private key
        trial_rng = fork_rng(config.seed, "trial", trial)
        s, x = pair_sampler.draw(trial_rng)

        if private_each_trial or keep_transcripts or s not in private_seen:
            private_session = pir.open_session(full_params, s, trial_rng)
            private_answers = transport(private_session.queries)
            if private_session.decode(private_answers) != store.data[s]:
                raise InconsistentAnswers(f"trial {trial}: private decode mismatch")
            private_bits = [pir.answer_length(q) for q in private_session.queries]
            private_cost = CostReport(
                per_server=tuple(Fraction(b, config.L) for b in private_bits),
                total=Fraction(sum(private_bits), config.L),
            )
            private_seen.add(s)

        mask = subset_samplers[(s, x)].draw(trial_rng)
        subset_params = params_for(indices_of(mask))
        session = pir.open_session(subset_params, x, trial_rng)
        answers = transport(session.queries)
        if session.decode(answers) != store.data[x]:
            raise InconsistentAnswers(f"trial {trial}: non-private decode mismatch")
        bits_x = sum(pir.answer_length(q) for q in session.queries)
        bits_x_total += bits_x
        samples.append((s, x, subset_params.subset))
        if keep_transcripts:
            per_server = tuple(
                Fraction(pir.answer_length(q), config.L) for q in session.queries
            )
            transcripts.append(
                TwoRequestTranscript(
                    s=s,
                    x=x,
                    u=subset_params.subset,
                    private=RetrievalRecord(
                        desired=s,
                        subset=full_params.subset,
                        queries=private_session.queries,
                        answers=private_answers,
                        decoded=store.data[s],
                        cost=private_cost,
                    ),
                    nonprivate=RetrievalRecord(
                        desired=x,
                        subset=subset_params.subset,
                        queries=session.queries,
                        answers=answers,
                        decoded=store.data[x],
                        cost=CostReport(
                            per_server=per_server, total=Fraction(bits_x, config.L)
                        ),
                    ),
                )
            )

    return TwoRequestReport(
        n_servers=config.N,
        K=config.K,
        L=config.L,
        trials=trials,
        cost_s=private_cost
        if private_cost is not None
        else CostReport(per_server=(), total=capacity_cost(config.N, config.K)),
        cost_x_expected=expected,
        cost_x_empirical=Fraction(bits_x_total, config.L * trials) if trials else ZERO,
        bound=bound,
        samples=samples,
        transcripts=transcripts,
    )
