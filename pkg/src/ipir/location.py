"""Online location-privacy mechanism over a Markov mobility model.

At private times the user retrieves content for the true location through
the full-K scheme (the subset is constant, so nothing leaks). At other
times the mechanism treats the tracked joint posterior of (current
location, latest private location) given the realized subset history as the
correlation law, solves for an obfuscation policy on the spot, samples a
subset containing the true location, retrieves over it, and conditions the
posterior on the realized subset. Policy construction guarantees the
released subset is exactly independent of the latest private location given
the history, which by the Markov structure protects every earlier private
location as well.

Posterior tracking is the standard exact forward recursion; everything is
Fraction arithmetic so the per-step independence checks are equalities,
not approximations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    MessageStore,
    SystemConfig,
    WeightedSampler,
    capacity_cost,
    conditional_from_joint,
    format_rational,
    fork_rng,
    parse_rational,
    validate_joint,
)
from .errors import (
    DegeneratePosterior,
    DistributionError,
    InvalidParams,
    InconsistentAnswers,
    ScheduleMismatch,
)
from .obfuscation import (
    DEFAULT_LP_CAP,
    ObfuscationPolicy,
    build_lp,
    greedy_policy,
    solve_lp,
    trivial_policy,
)
from . import audit
from . import pir
from .intermittent import local_transport

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class MobilityModel:
    """First-order Markov chain on [K]: initial law and transition matrices.

    ``transitions`` holds one row-stochastic matrix for a time-invariant
    chain, or one matrix per step t -> t+1 for a time-variant chain.
    """

    K: int
    pi0: tuple[Fraction, ...]
    transitions: tuple[tuple[tuple[Fraction, ...], ...], ...]
    time_variant: bool = False

    def __post_init__(self):
        if len(self.pi0) != self.K:
            raise DistributionError(f"pi0 has {len(self.pi0)} entries, expected {self.K}")
        if any(v < 0 for v in self.pi0):
            raise DistributionError("pi0 has a negative entry")
        if sum(self.pi0, ZERO) != 1:
            raise DistributionError("pi0 does not sum to 1")
        if not self.transitions:
            raise DistributionError("no transition matrix given")
        for matrix in self.transitions:
            if len(matrix) != self.K:
                raise DistributionError("transition matrix is not K x K")
            for row in matrix:
                if len(row) != self.K or any(v < 0 for v in row):
                    raise DistributionError("bad transition row")
                if sum(row, ZERO) != 1:
                    raise DistributionError("transition row does not sum to 1")

    def transition_at(self, t: int):
        if not self.time_variant:
            return self.transitions[0]
        if t >= len(self.transitions):
            raise InvalidParams(f"no transition matrix for step {t}")
        return self.transitions[t]

    @classmethod
    def build(cls, pi0, transitions, time_variant=None) -> "MobilityModel":
        K = len(pi0)
        pi = tuple(Fraction(v) for v in pi0)
        mats = tuple(
            tuple(tuple(Fraction(v) for v in row) for row in matrix)
            for matrix in transitions
        )
        if time_variant is None:
            time_variant = len(mats) > 1
        return cls(K=K, pi0=pi, transitions=mats, time_variant=time_variant)

    def to_json_dict(self) -> dict:
        mats = [
            [[format_rational(v) for v in row] for row in matrix]
            for matrix in self.transitions
        ]
        return {
            "K": self.K,
            "pi0": [format_rational(v) for v in self.pi0],
            "transitions": mats if self.time_variant else mats[0],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MobilityModel":
        pi0 = [parse_rational(v) for v in data["pi0"]]
        raw = data["transitions"]
        # a single matrix is a list of rows of scalars; a sequence of
        # matrices nests one level deeper
        if raw and isinstance(raw[0][0], list):
            mats = [[[parse_rational(v) for v in row] for row in m] for m in raw]
            return cls.build(pi0, mats, time_variant=True)
        mats = [[[parse_rational(v) for v in row] for row in raw]]
        return cls.build(pi0, mats, time_variant=False)


@dataclass(frozen=True)
class PrivacySchedule:
    """Horizon and the set of time instants whose location is private."""

    horizon: int
    private: frozenset[int]

    def __post_init__(self):
        if self.horizon < 0:
            raise InvalidParams("horizon must be nonnegative")
        if not self.private:
            raise InvalidParams("the private set is empty; nothing to protect")
        if any(t < 0 or t > self.horizon for t in self.private):
            raise InvalidParams("private instants must lie in [0, horizon]")
        if 0 not in self.private:
            raise InvalidParams(
                "the first instant must be private; use normalized() to shift time"
            )

    @classmethod
    def normalized(cls, horizon: int, private) -> "PrivacySchedule":
        """Shift time so the first private instant becomes t = 0."""
        private = sorted(set(private))
        if not private:
            raise InvalidParams("the private set is empty; nothing to protect")
        shift = private[0]
        return cls(
            horizon=horizon - shift, private=frozenset(t - shift for t in private)
        )

    def is_private(self, t: int) -> bool:
        return t in self.private


def latest_private(t: int, schedule: PrivacySchedule) -> int:
    """Most recent private instant at or before t."""
    return max(i for i in schedule.private if i <= t)


@dataclass(frozen=True)
class PosteriorState:
    """Tracked joint law of (current location, latest private location)
    given the realized subset history; ``joint[a][b]`` = P(X_t=a, X_tau=b)."""

    t: int
    tau: int
    joint: tuple[tuple[Fraction, ...], ...]
    history: tuple[tuple[int, ...], ...] = ()

    def current_marginal(self) -> tuple[Fraction, ...]:
        return tuple(sum(row, ZERO) for row in self.joint)

    def private_marginal(self) -> tuple[Fraction, ...]:
        K = len(self.joint)
        return tuple(
            sum((self.joint[a][b] for a in range(K)), ZERO) for b in range(K)
        )


def initial_posterior(model: MobilityModel) -> PosteriorState:
    joint = tuple(
        tuple(model.pi0[a] if a == b else ZERO for b in range(model.K))
        for a in range(model.K)
    )
    return PosteriorState(t=0, tau=0, joint=joint)


def advance_posterior(
    state: PosteriorState, model: MobilityModel, schedule: PrivacySchedule
) -> PosteriorState:
    """Push the tracked joint from time t to t+1 under the Markov kernel.

    If t+1 is private the new pair collapses to the diagonal of the
    pushforward marginal; otherwise the private coordinate rides along
    unchanged while the current coordinate moves one step.
    """
    K = model.K
    t1 = state.t + 1
    trans = model.transition_at(state.t)
    if schedule.is_private(t1):
        marg = [ZERO] * K
        for a in range(K):
            for b in range(K):
                w = state.joint[a][b]
                if w != 0:
                    for a1 in range(K):
                        marg[a1] += w * trans[a][a1]
        joint = tuple(
            tuple(marg[a1] if a1 == b else ZERO for b in range(K)) for a1 in range(K)
        )
        return PosteriorState(t=t1, tau=t1, joint=joint, history=state.history)
    new_tau = state.t if schedule.is_private(state.t) else state.tau
    joint = [[ZERO] * K for _ in range(K)]
    for a in range(K):
        for b in range(K):
            w = state.joint[a][b]
            if w != 0:
                row = trans[a]
                for a1 in range(K):
                    joint[a1][b] += w * row[a1]
    return PosteriorState(
        t=t1, tau=new_tau, joint=tuple(tuple(r) for r in joint), history=state.history
    )


def condition_posterior(
    state: PosteriorState, policy: ObfuscationPolicy, subset_mask: int
) -> PosteriorState:
    """Condition the tracked joint on a realized subset and renormalize."""
    K = len(state.joint)
    conditioned = [[ZERO] * K for _ in range(K)]
    total = ZERO
    for a in range(K):
        for b in range(K):
            w = state.joint[a][b]
            if w != 0:
                p = policy.entries.get((b, a, subset_mask), ZERO)
                if p != 0:
                    conditioned[a][b] = w * p
                    total += w * p
    if total == 0:
        raise DegeneratePosterior(
            f"step {state.t}: realized subset has zero tracked probability"
        )
    subset = tuple(i for i in range(K) if subset_mask >> i & 1)
    return PosteriorState(
        t=state.t,
        tau=state.tau,
        joint=tuple(tuple(v / total for v in row) for row in conditioned),
        history=state.history + (subset,),
    )


def policy_for_posterior(
    joint_matrix,
    n_servers: int,
    solver: str = "lp",
    lp_cap: int = DEFAULT_LP_CAP,
) -> tuple[ObfuscationPolicy, str]:
    """Build the step policy from a posterior joint over (current, private).

    ``joint_matrix[a][b]`` = P(current=a, private=b). The private coordinate
    plays the correlated-request role, so the law handed to the optimizer is
    the transpose. Returns the policy and which constructor produced it.
    """
    K = len(joint_matrix)
    law = validate_joint(
        [[joint_matrix[a][b] for a in range(K)] for b in range(K)]
    )
    if solver == "lp":
        if K <= lp_cap:
            return solve_lp(build_lp(law, n_servers, cap=lp_cap)), "lp"
        solver = "greedy"
    if solver == "greedy":
        cond = conditional_from_joint(law)
        if cond.full_support():
            return greedy_policy(cond), "greedy"
        if K <= lp_cap:
            return solve_lp(build_lp(law, n_servers, cap=lp_cap)), "lp"
        return trivial_policy(K), "trivial"
    raise InvalidParams(f"unknown solver {solver!r}")


@dataclass
class StepRecord:
    t: int
    private: bool
    x: int
    subset: tuple[int, ...]
    queries: list
    answers: list
    decoded: tuple[int, ...]
    cost: Fraction
    online_privacy_bits: float
    online_privacy_zero: bool
    solver: str


def step_private(
    state: PosteriorState,
    x_t: int,
    model: MobilityModel,
    schedule: PrivacySchedule,
    config: SystemConfig,
    store: MessageStore,
    rng: random.Random,
    transport=None,
) -> tuple[StepRecord, PosteriorState]:
    """Private step: full-K retrieval; posterior passes through, then advances."""
    if not schedule.is_private(state.t):
        raise ScheduleMismatch(f"t={state.t} is not private")
    transport = transport or local_transport(store)
    subset = tuple(range(config.K))
    params = pir.pir_setup(config.N, subset, config.L)
    session = pir.open_session(params, x_t, rng)
    answers = transport(session.queries)
    decoded = session.decode(answers)
    if decoded != store.data[x_t]:
        raise InconsistentAnswers(f"step {state.t}: decode mismatch")
    record = StepRecord(
        t=state.t,
        private=True,
        x=x_t,
        subset=subset,
        queries=session.queries,
        answers=answers,
        decoded=decoded,
        cost=capacity_cost(config.N, config.K),
        online_privacy_bits=0.0,
        online_privacy_zero=True,  # the subset is a constant
        solver="none",
    )
    conditioned = PosteriorState(
        t=state.t,
        tau=state.tau,
        joint=state.joint,
        history=state.history + (subset,),
    )
    if state.t < schedule.horizon:
        return record, advance_posterior(conditioned, model, schedule)
    return record, conditioned


def step_nonprivate(
    state: PosteriorState,
    x_t: int,
    x_tau: int,
    model: MobilityModel,
    schedule: PrivacySchedule,
    config: SystemConfig,
    store: MessageStore,
    rng: random.Random,
    solver: str = "lp",
    lp_cap: int = DEFAULT_LP_CAP,
    transport=None,
) -> tuple[StepRecord, PosteriorState]:
    """Non-private step: solve a policy for the tracked posterior, sample the
    subset around the true location, retrieve, condition, advance.

    ``x_tau`` is the true latest private location, known to the user.
    """
    if schedule.is_private(state.t):
        raise ScheduleMismatch(f"t={state.t} is private")
    transport = transport or local_transport(store)
    policy, used = policy_for_posterior(state.joint, config.N, solver, lp_cap)

    check = audit.audit_online_privacy(state, policy)
    subset_mask = WeightedSampler(policy.at(x_tau, x_t)).draw(rng)
    subset = tuple(i for i in range(config.K) if subset_mask >> i & 1)

    params = pir.pir_setup(config.N, subset, config.L)
    session = pir.open_session(params, x_t, rng)
    answers = transport(session.queries)
    decoded = session.decode(answers)
    if decoded != store.data[x_t]:
        raise InconsistentAnswers(f"step {state.t}: decode mismatch")

    new_state = condition_posterior(state, policy, subset_mask)

    record = StepRecord(
        t=state.t,
        private=False,
        x=x_t,
        subset=subset,
        queries=session.queries,
        answers=answers,
        decoded=decoded,
        cost=capacity_cost(config.N, len(subset)),
        online_privacy_bits=check.checks[0].bits,
        online_privacy_zero=check.passed,
        solver=used,
    )
    if state.t < schedule.horizon:
        return record, advance_posterior(new_state, model, schedule)
    return record, new_state


@dataclass
class TraceReport:
    K: int
    n_servers: int
    horizon: int
    solver: str
    trace: tuple[int, ...]
    steps: list[StepRecord]
    total_cost: Fraction

    def all_private_zero(self) -> bool:
        return all(step.online_privacy_zero for step in self.steps)

    def all_decoded(self, store: MessageStore) -> bool:
        return all(step.decoded == store.data[step.x] for step in self.steps)


def sample_trace(
    model: MobilityModel, horizon: int, rng: random.Random
) -> tuple[int, ...]:
    values = list(range(model.K))
    x = WeightedSampler(zip(values, model.pi0)).draw(rng)
    trace = [x]
    for t in range(horizon):
        row = model.transition_at(t)[x]
        x = WeightedSampler(
            ((v, w) for v, w in zip(values, row) if w != 0)
        ).draw(rng)
        trace.append(x)
    return tuple(trace)


def simulate(
    model: MobilityModel,
    schedule: PrivacySchedule,
    config: SystemConfig,
    store: MessageStore,
    solver: str = "lp",
    lp_cap: int = DEFAULT_LP_CAP,
    transport=None,
    trace: tuple[int, ...] | None = None,
) -> TraceReport:
    """Run the mechanism over a sampled (or given) trace; deterministic in
    config.seed."""
    if model.K != config.K or store.K != config.K:
        raise InvalidParams("location count mismatch between model, store, and config")
    if trace is None:
        trace = sample_trace(model, schedule.horizon, fork_rng(config.seed, "trace"))
    if len(trace) != schedule.horizon + 1:
        raise InvalidParams(f"trace length {len(trace)} != horizon + 1")

    state = initial_posterior(model)
    steps: list[StepRecord] = []
    total = ZERO
    for t in range(schedule.horizon + 1):
        rng = fork_rng(config.seed, "step", t)
        if schedule.is_private(t):
            record, state = step_private(
                state, trace[t], model, schedule, config, store, rng, transport
            )
        else:
            record, state = step_nonprivate(
                state,
                trace[t],
                trace[latest_private(t, schedule)],
                model,
                schedule,
                config,
                store,
                rng,
                solver,
                lp_cap,
                transport,
            )
        steps.append(record)
        total += record.cost
    return TraceReport(
        K=config.K,
        n_servers=config.N,
        horizon=schedule.horizon,
        solver=solver,
        trace=trace,
        steps=steps,
        total_cost=total,
    )
