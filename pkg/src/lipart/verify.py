"""Exact rate oracles and statistical checks of simulated paths.

Oracles work in rational arithmetic.  Statistical checks return a
``TestReport`` whose verdict is "pass", "fail" or "inconclusive".
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import CapacityError, DomainError
from .measures import (
    LEVEL_LIMIT,
    OperatorRateMeasure,
    SelfSimilar,
    SimplexDistribution,
    exact_level_map_measure,
    exact_level_measure,
    point,
    ranked_paintbox_prob,
    sample_labeled_paintbox,
)
from .operators import ColumnArray, MapTable, is_strongly_lipschitz, op_apply, op_relabel
from .partitions import (
    LabeledPartition,
    Permutation,
    SetPartition,
    all_set_partitions,
    blocks,
    enumerate_partitions,
    relabel,
    restrict_set,
)
from .simulate import Trajectory, child_rng, project_blocks, restrict_trajectory, run_replicates, simulate_ct


@dataclass
class RateTable:
    """Off-diagonal jump rates; pairs with zero rate are left out."""

    n: int
    k: int
    rates: dict = field(default_factory=dict)
    stderr: dict | None = None
    exposure: dict | None = None

    def __post_init__(self):
        for (a, b), r in self.rates.items():
            if a == b:
                raise DomainError("rate tables carry no diagonal entries")
            if r < 0:
                raise DomainError("rates must be non-negative")

    def outflow(self, state) -> Fraction | float:
        return sum((r for (a, _), r in self.rates.items() if a == state), 0)

    def row(self, state) -> dict:
        return {b: r for (a, b), r in self.rates.items() if a == state}

    def __len__(self):
        return len(self.rates)


@dataclass
class TestReport:
    name: str
    statistic: float
    threshold: float
    pvalue: float | None
    samples: int
    verdict: str
    details: str = ""

    __test__ = False

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_record(self) -> dict:
        def num(x):
            if x is None:
                return None
            x = float(x)
            return x if math.isfinite(x) else repr(x)

        return {
            "name": self.name,
            "statistic": num(self.statistic),
            "threshold": num(self.threshold),
            "pvalue": num(self.pvalue),
            "samples": int(self.samples),
            "verdict": self.verdict,
            "details": self.details,
        }


def tv_distance(p: Mapping | Sequence, q: Mapping | Sequence) -> float:
    """Half the L1 distance between two finite distributions."""
    if not isinstance(p, Mapping):
        p = dict(enumerate(p))
    if not isinstance(q, Mapping):
        q = dict(enumerate(q))
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(x, 0) - q.get(x, 0)) for x in keys)


# -- exact oracles ----------------------------------------------------------


def _check_level(k: int, n: int) -> None:
    if (k**n) ** 2 > LEVEL_LIMIT:
        raise CapacityError(f"{k}**{n} states are too many for a full rate table")


def rate_oracle_product(n: int, k: int, nus: Sequence[SimplexDistribution], total_mass=1) -> RateTable:
    """Q_n(lam, lam') = mass * prod_i P{paintbox of nu_i on class i of lam reproduces lam' there}."""
    if len(nus) != k:
        raise DomainError(f"need {k} column laws, got {len(nus)}")
    _check_level(k, n)
    atoms = [nu.atoms() for nu in nus]
    if any(a is None for a in atoms):
        raise DomainError("rate oracles need point or discrete simplex laws")
    states = list(enumerate_partitions(n, k))
    rates = {}
    for lam in states:
        for new in states:
            if new == lam:
                continue
            q = Fraction(total_mass)
            for i, cls_mask in enumerate(lam.masks):
                if not cls_mask:
                    continue
                counts = [(cls_mask & c).bit_count() for c in new.masks]
                factor = Fraction(0)
                for s, w in atoms[i]:
                    term = w
                    for sj, c in zip(s, counts):
                        term *= sj**c
                    factor += term
                q *= factor
            if q:
                rates[(lam, new)] = q
    return RateTable(n, k, rates)


def _falling(k: int, j: int) -> int:
    return math.perm(k, j) if j <= k else 0


def rate_oracle_selfsimilar(n: int, k: int, nu: SimplexDistribution, total_mass=1) -> RateTable:
    """Q_n(pi, pi') = k^(#pi' falling) * prod_b rho^b(pi'|b) / k^(#pi'|b falling) on partitions with <= k blocks."""
    atoms = nu.atoms()
    if atoms is None:
        raise DomainError("rate oracles need point or discrete simplex laws")
    states = list(all_set_partitions(n, k))
    if len(states) ** 2 > LEVEL_LIMIT:
        raise CapacityError("too many set partitions for a full rate table")
    ranked = [(tuple(sorted(s, reverse=True)), w) for s, w in atoms]
    rates = {}
    for pi in states:
        for new in states:
            if new == pi:
                continue
            q = Fraction(total_mass) * _falling(k, len(new))
            for b in pi.blocks:
                sizes = [(b & c).bit_count() for c in new.blocks]
                sizes = [x for x in sizes if x]
                rho = sum((w * ranked_paintbox_prob(s, sizes) for s, w in ranked), Fraction(0))
                q *= rho / _falling(k, len(sizes))
            if q:
                rates[(pi, new)] = q
    return RateTable(n, k, rates)


def exact_generator(mu: OperatorRateMeasure, n: int) -> RateTable:
    """Jump rates at level n obtained by pushing the exact level measure through every state."""
    k = mu.k
    _check_level(k, n)
    rates: dict = defaultdict(Fraction)
    if mu.operator_valued:
        weighted = exact_level_measure(mu, n)
        for lam in enumerate_partitions(n, k):
            for op, w in weighted:
                new = op_apply(op, lam)
                if new != lam:
                    rates[(lam, new)] += w
    else:
        for table, w in exact_level_map_measure(mu, n).items():
            for lam, new in table.items():
                if new != lam:
                    rates[(lam, new)] += w
    return RateTable(n, k, {key: r for key, r in rates.items() if r})


def selfsimilar_enumeration(n: int, k: int, nu: SimplexDistribution, total_mass=1) -> RateTable:
    """Set-partition jump rates from the exact law of the per-block paintbox and permutation steps."""
    mu = SelfSimilar(nu, total_mass)
    weighted = exact_level_measure(mu, n)
    rates: dict = defaultdict(Fraction)
    for pi in all_set_partitions(n, k):
        start = pi.as_labeled(k)
        for op, w in weighted:
            new = blocks(op_apply(op, start))
            if new != pi:
                rates[(pi, new)] += w
    return RateTable(n, k, {key: r for key, r in rates.items() if r})


# -- empirical rates --------------------------------------------------------


def empirical_rates(trajectories: Sequence[Trajectory]) -> RateTable:
    """Counts over exposure: rate(a -> b) = #(a -> b) / total time spent in a."""
    if not trajectories:
        raise DomainError("need at least one trajectory")
    n, k = trajectories[0].n, trajectories[0].k
    if any(t.n != n or t.k != k for t in trajectories):
        raise DomainError("trajectories must share n and k")
    counts: Counter = Counter()
    exposure: dict = defaultdict(float)
    for traj in trajectories:
        if traj.discrete:
            raise DomainError("empirical rates need continuous-time paths")
        state = traj.initial
        for s, hold, jumped in traj.sojourns():
            exposure[s] += hold
        for e in traj.events:
            counts[(state, e.state)] += 1
            state = e.state
    rates = {}
    err = {}
    for (a, b), c in counts.items():
        rates[(a, b)] = c / exposure[a]
        err[(a, b)] = math.sqrt(c) / exposure[a]
    return RateTable(n, k, rates, err, dict(exposure))


def compare_rates(empirical: RateTable, exact: RateTable, z: float = 3.0, name: str = "rates") -> TestReport:
    """Entrywise check |empirical - exact| <= z * sqrt(exact / exposure) over visited states."""
    exposure = empirical.exposure or {}
    worst = 0.0
    worst_pair = None
    checked = 0
    for a, time in exposure.items():
        if time <= 0:
            continue
        targets = set(exact.row(a)) | set(empirical.row(a))
        for b in targets:
            q = float(exact.rates.get((a, b), 0))
            r = float(empirical.rates.get((a, b), 0.0))
            checked += 1
            if q == 0:
                score = math.inf if r > 0 else 0.0
            else:
                score = abs(r - q) / math.sqrt(q / time)
            if score > worst:
                worst, worst_pair = score, (a, b)
    detail = "" if worst_pair is None else f"worst pair {worst_pair[0]} -> {worst_pair[1]}"
    return TestReport(name, worst, z, None, checked, "pass" if worst <= z else "fail", detail)


# -- consistency ------------------------------------------------------------


def uniform_start(n: int, k: int):
    """Initial-state sampler drawing i.i.d. uniform labels (an exchangeable law)."""
    return partial(_uniform_start, n, k)


def _uniform_start(n, k, rng):
    return sample_labeled_paintbox(point(*([Fraction(1, k)] * k)), n, rng)


def _restricted_run(mu, n, m, horizon, initial, rng):
    lam0 = initial if isinstance(initial, LabeledPartition) else initial(rng)
    traj = simulate_ct(mu, n, lam0, horizon, rng)
    return [restrict_trajectory(traj, mm) for mm in m]


def _restricted_runs(mu, n, ms, reps, horizon, seed, initial, workers):
    if initial is None:
        initial = uniform_start(n, mu.k)
    fn = partial(_restricted_run, mu, n, ms, horizon, initial)
    runs = run_replicates(fn, seed, reps, workers)
    return {mm: [r[i] for r in runs] for i, mm in enumerate(ms)}


def kernel_check(paths: Sequence[Trajectory], exact: RateTable, name: str, min_exits: int = 30) -> TestReport:
    """Compare jump distributions (TV against a 3-sigma multinomial band) and exit rates (3-sigma Poisson)."""
    jumps: dict = defaultdict(Counter)
    exposure: dict = defaultdict(float)
    for traj in paths:
        state = traj.initial
        for s, hold, _ in traj.sojourns():
            exposure[s] += hold
        for e in traj.events:
            jumps[state][e.state] += 1
            state = e.state
    worst_ratio, worst_tv, worst_band = 0.0, 0.0, 0.0
    failures = []
    checked = 0
    for a, time in sorted(exposure.items(), key=lambda x: x[0].text()):
        q = float(exact.outflow(a))
        count = sum(jumps[a].values())
        expected = q * time
        if expected == 0:
            if count:
                failures.append(f"{a}: {count} exits where none are possible")
            continue
        if abs(count - expected) > 3 * math.sqrt(expected):
            failures.append(f"{a}: {count} exits, expected {expected:.1f}")
        if count < min_exits:
            continue
        checked += 1
        p = {b: float(r) / q for b, r in exact.row(a).items()}
        phat = {b: c / count for b, c in jumps[a].items()}
        tv = tv_distance(phat, p)
        band = 0.5 * sum(3 * math.sqrt(pb * (1 - pb) / count) for pb in p.values())
        ratio = tv / band if band > 0 else (0.0 if tv == 0 else math.inf)
        if ratio > 1:
            failures.append(f"{a}: TV {tv:.4f} above band {band:.4f}")
        if ratio >= worst_ratio:
            worst_ratio, worst_tv, worst_band = ratio, tv, band
    if checked == 0 and not failures:
        return TestReport(name, 0.0, 0.0, None, 0, "inconclusive", "no state had enough exits")
    verdict = "fail" if failures else "pass"
    return TestReport(name, worst_tv, worst_band, None, sum(len(t.events) for t in paths), verdict, "; ".join(failures))


def consistency_test(
    mu: OperatorRateMeasure,
    n: int,
    m: int | Sequence[int],
    reps: int,
    horizon: float,
    seed: int = 0,
    initial=None,
    workers: int = 1,
) -> TestReport | list[TestReport]:
    """Level-n paths restricted to [m] against the exact level-m generator.

    Passing a sequence of m values reuses the same level-n paths and
    returns one report per value.
    """
    ms = [m] if isinstance(m, int) else list(m)
    if any(not 1 <= mm < n for mm in ms):
        raise DomainError("need 1 <= m < n")
    exacts = {mm: exact_generator(mu, mm) for mm in ms}
    paths = _restricted_runs(mu, n, ms, reps, horizon, seed, initial, workers)
    reports = [
        kernel_check(paths[mm], exacts[mm], f"consistency[{mu.variant} n={n} m={mm}]") for mm in ms
    ]
    return reports[0] if isinstance(m, int) else reports


# -- exchangeability --------------------------------------------------------


def exact_exchangeability(mu: OperatorRateMeasure, n: int, sigma: Permutation) -> bool:
    """Invariance of the exact level-n measure under relabeling by sigma, in rational arithmetic."""
    if mu.operator_valued:
        law = dict(exact_level_measure(mu, n))
        moved: dict = defaultdict(Fraction)
        for op, w in law.items():
            moved[op_relabel(op, sigma)] += w
        return law == dict(moved)
    table_law = exact_level_map_measure(mu, n)
    moved = defaultdict(Fraction)
    for t, w in table_law.items():
        moved[t.conjugate(sigma)] += w
    return table_law == dict(moved)


def _terminal(mu, n, horizon, initial, rng):
    return simulate_ct(mu, n, initial(rng), horizon, rng).final


def exchangeability_test(
    mu: OperatorRateMeasure,
    n: int,
    sigma: Permutation,
    reps: int,
    horizon: float,
    seed: int = 0,
    alpha: float = 0.01,
    exact: bool | None = None,
    workers: int = 1,
) -> TestReport:
    """Chi-square comparison of the time-horizon law of the state and of its relabeling by sigma.

    Two independent replicate sets are drawn from an exchangeable initial
    law; the second set is relabeled.  When the level-n measure is small
    enough the exact invariance is checked too.
    """
    k = mu.k
    if k**n > 4096:
        raise CapacityError("state space too large for a histogram comparison")
    if sigma.n != n:
        raise DomainError(f"sigma must permute [{n}]")
    notes = []
    exact_ok = True
    if exact is None:
        exact = mu.exact
    if exact:
        try:
            exact_ok = exact_exchangeability(mu, n, sigma)
            notes.append(f"exact invariance {'holds' if exact_ok else 'fails'}")
        except CapacityError:
            notes.append("exact check skipped (capacity)")
    fn = partial(_terminal, mu, n, horizon, uniform_start(n, k))
    first = run_replicates(fn, seed, reps, workers)
    second = run_replicates(fn, seed + 1, reps, workers)
    a = Counter(first)
    b = Counter(relabel(lam, sigma) for lam in second)
    keys = sorted(set(a) | set(b), key=lambda x: x.text())
    if len(keys) < 2:
        pvalue, stat = 1.0, 0.0
    else:
        table = np.array([[a.get(x, 0) for x in keys], [b.get(x, 0) for x in keys]])
        stat, pvalue, _, _ = stats.chi2_contingency(table)
    verdict = "pass" if exact_ok and pvalue >= alpha else "fail"
    notes.append(f"{len(keys)} states observed")
    return TestReport(
        f"exchangeability[{mu.variant} n={n} sigma={sigma.images}]",
        float(stat),
        alpha,
        float(pvalue),
        2 * reps,
        verdict,
        "; ".join(notes),
    )


# -- strong Lipschitz support -----------------------------------------------


def _table_of(draw, n: int, k: int) -> MapTable:
    if isinstance(draw, ColumnArray):
        return MapTable.from_function(draw, n, k)
    return MapTable.from_operator(draw)


def strong_support_check(mu: OperatorRateMeasure, n: int, draws: int = 1000, seed: int = 0) -> TestReport:
    """Fraction of sampled maps whose level-n table is not strongly Lipschitz; pass iff zero."""
    k = mu.k
    if k**n > 4096:
        raise CapacityError("level too large for table extraction")
    rng = child_rng(seed, 0)
    failures = 0
    for _ in range(draws):
        if not is_strongly_lipschitz(_table_of(mu.sample(n, rng), n, k)):
            failures += 1
    frac = failures / draws
    return TestReport(
        f"strong_support[{mu.variant} n={n}]",
        frac,
        0.0,
        None,
        draws,
        "pass" if failures == 0 else "fail",
        f"{failures} of {draws} draws not strongly Lipschitz",
    )


# -- Markov violation probe -------------------------------------------------


def _one_block_sojourns(traj: Trajectory, m: int) -> list[float]:
    if isinstance(traj.initial, LabeledPartition):
        traj = project_blocks(traj)
    target = SetPartition.one(m)
    out = []
    for i, (state, hold, ended) in enumerate(traj.sojourns()):
        # the first visit may be left-censored by the start of the run
        if i > 0 and ended and state == target:
            out.append(hold)
    return out


def markov_violation_probe(
    full: Trajectory | None, restricted: Trajectory, m: int, alpha: float = 0.05, min_sojourns: int = 20
) -> TestReport:
    """Memorylessness test for the holding time of the restricted chain in its one-block state.

    In a Markov chain the holding time in a state is exponential, so the
    overshoot beyond a threshold has the same law as a fresh holding time.
    Completed visits are split alternately into a reference sample and a
    test sample.  The threshold is the reference median, and overshoots of
    test visits longer than it are compared with the reference sample by a
    two-sample Kolmogorov-Smirnov test.  "fail" means memorylessness
    (hence the Markov property) is rejected at level ``alpha``.
    """
    if restricted.n != m:
        raise DomainError(f"restricted path is over [{restricted.n}], expected [{m}]")
    if full is not None:
        expected = restrict_trajectory(full, m)
        if expected.states != restricted.states:
            raise DomainError("restricted path is not the restriction of the full path")
    holds = _one_block_sojourns(restricted, m)
    fresh = np.array(holds[0::2])
    later = np.array(holds[1::2])
    name = f"markov_probe[m={m}]"
    if fresh.size < min_sojourns:
        return TestReport(name, 0.0, alpha, None, len(holds), "inconclusive", f"only {len(holds)} completed visits")
    tau = float(np.median(fresh))
    overshoot = later[later > tau] - tau
    if overshoot.size < min_sojourns:
        return TestReport(name, 0.0, alpha, None, len(holds), "inconclusive", f"only {overshoot.size} overshoots")
    res = stats.ks_2samp(fresh, overshoot)
    verdict = "fail" if res.pvalue < alpha else "pass"
    detail = (
        f"{fresh.size} reference visits (mean {fresh.mean():.4f}), "
        f"{overshoot.size} overshoots past {tau:.4f} (mean {overshoot.mean():.4f})"
    )
    return TestReport(name, float(res.statistic), alpha, float(res.pvalue), len(holds), verdict, detail)
