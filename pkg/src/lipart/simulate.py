"""Event-driven simulation of partition-valued processes.

Continuous-time chains draw candidate events from a Poisson process at
rate ``total_mass`` and discard draws that act as the identity on the
working level (thinning).  The same event stream drives ``simulate_ct``
and ``simulate_flow``, so under a shared seed the flow applied to the
initial state reproduces the chain exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import DomainError
from .measures import (
    ArrayMeasure,
    OperatorRateMeasure,
    RankedSimplexPoint,
    SelfSimilar,
    SimplexDistribution,
    nonidentity_mass,
    sample_ranked_paintbox,
)
from .operators import ColumnArray, PartitionOperator, array_apply, op_apply, op_identity, op_multiply
from .partitions import LabeledPartition, SetPartition, blocks, restrict, restrict_set

State = Union[LabeledPartition, SetPartition]
Jump = Union[PartitionOperator, ColumnArray, None]

STOCHASTIC_TOL = 1e-9


def child_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _replicate(args):
    fn, seed, index = args
    return fn(child_rng(seed, index))


def run_replicates(fn: Callable[[np.random.Generator], object], seed: int, reps: int, workers: int = 1) -> list:
    """Run ``fn`` once per replicate stream; results ordered by replicate index.

    With ``workers > 1`` the replicates run in a process pool, so ``fn``
    must be picklable (a module-level function or a partial of one).
    """
    jobs = [(fn, seed, i) for i in range(reps)]
    if workers <= 1 or reps <= 1:
        return [_replicate(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate, jobs, chunksize=max(1, reps // (4 * workers))))


# -- trajectories -----------------------------------------------------------


@dataclass(frozen=True)
class Event:
    time: float
    jump: Jump
    state: State


@dataclass
class Trajectory:
    """Piecewise-constant path: ``initial`` until the first event, then each event's state."""

    n: int
    k: int
    initial: State
    events: list[Event] = field(default_factory=list)
    t_max: float = math.inf
    applications: int = 0
    discrete: bool = False

    def __post_init__(self):
        for a, b in zip(self.events, self.events[1:]):
            if not b.time > a.time:
                raise DomainError("event times must be strictly increasing")

    @property
    def times(self) -> list[float]:
        return [e.time for e in self.events]

    @property
    def states(self) -> list[State]:
        return [self.initial] + [e.state for e in self.events]

    @property
    def final(self) -> State:
        return self.events[-1].state if self.events else self.initial

    def state_at(self, t: float) -> State:
        state = self.initial
        for e in self.events:
            if e.time > t:
                break
            state = e.state
        return state

    def sojourns(self) -> Iterator[tuple[State, float, bool]]:
        """(state, holding time, ended by a jump) for each visit, the last one censored at t_max."""
        t0, state = 0.0, self.initial
        for e in self.events:
            yield state, e.time - t0, True
            t0, state = e.time, e.state
        if math.isfinite(self.t_max):
            yield state, self.t_max - t0, False

    def to_records(self) -> list[dict]:
        out = []
        for e in self.events:
            rec = {"t": repr(float(e.time)) if not self.discrete else str(int(e.time)), "state": e.state.text()}
            if e.jump is not None:
                rec["op"] = e.jump.text()
            out.append(rec)
        return out


@dataclass
class FlowTrajectory:
    n: int
    k: int
    events: list[tuple[float, PartitionOperator]] = field(default_factory=list)
    t_max: float = math.inf

    def composed_at(self, t: float) -> PartitionOperator:
        out = op_identity(self.n, self.k)
        for time, op in self.events:
            if time > t:
                break
            out = op
        return out


def _is_identity(jump, n: int) -> bool:
    return jump.is_identity()


def _apply(jump, lam: LabeledPartition) -> LabeledPartition:
    if isinstance(jump, ColumnArray):
        return array_apply(jump, lam)
    return op_apply(jump, lam)


def _check_rate(mu: OperatorRateMeasure, n: int, t_max: float) -> float:
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    nonidentity_mass(mu, n)
    return float(mu.total_mass)


def event_stream(mu: OperatorRateMeasure, n: int, t_max: float, rng: np.random.Generator) -> Iterator[tuple[float, Jump]]:
    """Atoms (time, jump) of the thinned Poisson stream on [0, t_max]."""
    rate = _check_rate(mu, n, t_max)
    if rate == 0:
        return
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t > t_max:
            return
        jump = mu.sample(n, rng)
        if not _is_identity(jump, n):
            yield t, jump


def _check_initial(lam0: LabeledPartition, n: int, k: int) -> None:
    if lam0.n != n or lam0.k != k:
        raise DomainError(f"initial state must be a {k}-partition of [{n}]")


def simulate_ct(
    mu: OperatorRateMeasure, n: int, lam0: LabeledPartition, t_max: float, rng: np.random.Generator
) -> Trajectory:
    """Continuous-time chain at level n; only state changes are recorded."""
    _check_initial(lam0, n, mu.k)
    traj = Trajectory(n, mu.k, lam0, t_max=t_max)
    state = lam0
    for t, jump in event_stream(mu, n, t_max, rng):
        traj.applications += 1
        new = _apply(jump, state)
        if new != state:
            traj.events.append(Event(t, jump, new))
            state = new
    return traj


def simulate_flow(mu: OperatorRateMeasure, n: int, t_max: float, rng: np.random.Generator) -> FlowTrajectory:
    """The composed operator flow, updated as new @ composed at every non-identity atom."""
    if not mu.operator_valued:
        raise DomainError("flows need an operator-valued measure")
    flow = FlowTrajectory(n, mu.k, t_max=t_max)
    composed = op_identity(n, mu.k)
    for t, op in event_stream(mu, n, t_max, rng):
        composed = op_multiply(op, composed)
        flow.events.append((t, composed))
    return flow


def simulate_dt(
    mu: OperatorRateMeasure,
    lam0: LabeledPartition,
    steps: int,
    rng: np.random.Generator | None = None,
    operators: Iterable[Jump] | None = None,
) -> Trajectory:
    """Iterated random maps: every step is recorded, identity steps included.

    ``operators`` replays a given stream instead of sampling from ``mu``.
    """
    if mu.total_mass != 1:
        raise DomainError("discrete-time chains need a probability measure (total_mass = 1)")
    if steps < 1:
        raise DomainError("steps must be a positive integer")
    n = lam0.n
    _check_initial(lam0, n, mu.k)
    if operators is None:
        if rng is None:
            raise DomainError("need a random stream or an operator stream")
        operators = (mu.sample(n, rng) for _ in range(steps))
    traj = Trajectory(n, mu.k, lam0, t_max=steps, discrete=True)
    state = lam0
    for step, jump in zip(range(1, steps + 1), operators):
        state = _apply(jump, state)
        traj.events.append(Event(step, jump, state))
        traj.applications += 1
    return traj


def iterate_maps(jumps: Sequence[Jump], lam0: LabeledPartition) -> list[LabeledPartition]:
    """The states F_m(...F_1(lam0)) for m = 0..len(jumps)."""
    out = [lam0]
    for jump in jumps:
        out.append(_apply(jump, out[-1]))
    return out


def simulate_selfsimilar(
    nu: SimplexDistribution, n: int, pi0: SetPartition, t_max: float, rng: np.random.Generator, total_mass=1
) -> Trajectory:
    """Fragment-and-relabel process on partitions with at most k blocks.

    Each event splits every block by its own ranked paintbox, tags the pieces
    with a uniform permutation of [k] and merges pieces sharing a tag.
    """
    k = nu.k
    if len(pi0) > k:
        raise DomainError(f"initial partition has {len(pi0)} blocks, more than k = {k}")
    if pi0.n != n:
        raise DomainError(f"initial partition must be over [{n}]")
    mu = SelfSimilar(nu, total_mass)
    traj = Trajectory(n, k, pi0, t_max=t_max)
    state = pi0
    for t, op in event_stream(mu, n, t_max, rng):
        traj.applications += 1
        new = blocks(op_apply(op, state.as_labeled(k)))
        if new != state:
            traj.events.append(Event(t, op, new))
            state = new
    return traj


def restrict_trajectory(traj: Trajectory, m: int) -> Trajectory:
    """The path restricted to [m], with events that are invisible at [m] dropped."""

    def cut(state):
        return restrict_set(state, m) if isinstance(state, SetPartition) else restrict(state, m)

    out = Trajectory(m, traj.k, cut(traj.initial), t_max=traj.t_max, discrete=traj.discrete)
    state = out.initial
    for e in traj.events:
        new = cut(e.state)
        if new != state or traj.discrete:
            out.events.append(Event(e.time, None, new))
            state = new
    return out


def project_blocks(traj: Trajectory) -> Trajectory:
    """Forget labels along a labeled path, dropping events that only relabel."""
    out = Trajectory(traj.n, traj.k, blocks(traj.initial), t_max=traj.t_max, discrete=traj.discrete)
    state = out.initial
    for e in traj.events:
        new = blocks(e.state)
        if new != state or traj.discrete:
            out.events.append(Event(e.time, e.jump, new))
            state = new
    return out


COUNTEREXAMPLE_S0 = (Fraction(2, 3), Fraction(1, 3))


def simulate_counterexample(
    m: int,
    N: int,
    t_max: float,
    rng: np.random.Generator,
    s0: Sequence = COUNTEREXAMPLE_S0,
    initial: SetPartition | None = None,
    max_events: int | None = None,
) -> tuple[Trajectory, Trajectory]:
    """A chain on partitions of [N] whose restriction to [m] is not Markov.

    From the one-block state it jumps at rate 2 to a ranked paintbox draw
    with masses ``s0``; from any other state it jumps at rate 1 back to the
    one-block state.  The one-block partition of [N] stands in for the
    one-block partition of the integers.  Returns the full path and its
    restriction to [m].
    """
    if not 1 <= m < N:
        raise DomainError("need 1 <= m < N")
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    ranked = RankedSimplexPoint(tuple(sorted(s0, reverse=True)))
    one = SetPartition.one(N)
    state = sample_ranked_paintbox(ranked, N, rng) if initial is None else initial
    traj = Trajectory(N, len(ranked.s), state, t_max=t_max)
    t = 0.0
    while max_events is None or len(traj.events) < max_events:
        trivial = state == one
        t += rng.exponential(0.5 if trivial else 1.0)
        if t > t_max:
            break
        new = sample_ranked_paintbox(ranked, N, rng) if trivial else one
        traj.applications += 1
        if new != state:
            traj.events.append(Event(t, None, new))
            state = new
    if max_events is not None and len(traj.events) >= max_events:
        traj.t_max = traj.events[-1].time
    return traj, restrict_trajectory(traj, m)


# -- frequencies ------------------------------------------------------------


def _check_weights(w: Sequence, what: str) -> None:
    if any(x < 0 for x in w):
        raise DomainError(f"{what} has a negative entry")
    if abs(float(sum(w)) - 1) > STOCHASTIC_TOL:
        raise DomainError(f"{what} does not sum to 1")


@dataclass(frozen=True)
class SimplexPoint:
    weights: tuple

    def __post_init__(self):
        _check_weights(self.weights, "simplex point")

    @property
    def k(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.weights])


@dataclass(frozen=True)
class StochasticMatrix:
    """Column-stochastic k x k matrix; ``entries[i][j]`` is row i, column j."""

    entries: tuple[tuple, ...]

    def __post_init__(self):
        k = len(self.entries)
        if any(len(r) != k for r in self.entries):
            raise DomainError("stochastic matrix must be square")
        for j in range(k):
            _check_weights([r[j] for r in self.entries], f"column {j + 1}")

    @property
    def k(self) -> int:
        return len(self.entries)

    @classmethod
    def identity(cls, k: int) -> StochasticMatrix:
        return cls(tuple(tuple(Fraction(int(i == j)) for j in range(k)) for i in range(k)))

    def as_array(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.entries])

    def __matmul__(self, d: SimplexPoint) -> SimplexPoint:
        if d.k != self.k:
            raise DomainError(f"matrix has k={self.k}, point has k={d.k}")
        return SimplexPoint(tuple(sum((a * b for a, b in zip(row, d.weights)), Fraction(0)) for row in self.entries))


def frequency(lam: LabeledPartition) -> SimplexPoint:
    """Class proportions #(class j)/n."""
    if lam.n < 1:
        raise DomainError("frequency needs n >= 1")
    return SimplexPoint(tuple(Fraction(s, lam.n) for s in lam.sizes))


def operator_frequency(op: PartitionOperator) -> StochasticMatrix:
    """Entry proportions #(M_ij)/n; each column sums to 1 exactly."""
    return StochasticMatrix(tuple(tuple(Fraction(e.bit_count(), op.n) for e in row) for row in op.entries))


def simplex_chain(matrices: Sequence[StochasticMatrix], d0: SimplexPoint) -> list[SimplexPoint]:
    """D_m = S_m ... S_1 D_0 for m = 0..len(matrices)."""
    out = [d0]
    for s in matrices:
        out.append(s @ out[-1])
    return out


# -- semigroup --------------------------------------------------------------


def _terminal_value(mu, n, lam0, t, g, rng):
    return g(simulate_ct(mu, n, lam0, t, rng).final)


class _Terminal:
    def __init__(self, mu, n, lam0, t, g):
        self.args = (mu, n, lam0, t, g)

    def __call__(self, rng):
        return _terminal_value(*self.args, rng)


def estimate_semigroup(
    mu: OperatorRateMeasure,
    n: int,
    lam0: LabeledPartition,
    t: float,
    g: Callable[[LabeledPartition], float],
    reps: int,
    seed: int = 0,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of E g(state at time t) and its standard error."""
    if reps < 1:
        raise DomainError("reps must be at least 1")
    if t == 0:
        return float(g(lam0)), 0.0
    values = np.array(run_replicates(_Terminal(mu, n, lam0, t, g), seed, reps, workers), dtype=float)
    err = float(values.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    return float(values.mean()), err
