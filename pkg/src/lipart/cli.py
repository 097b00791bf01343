"""Command-line front end: ``lipart simulate|verify|freq``.

Every output stream is JSON lines and starts with a header carrying the
canonical config and its SHA-256 hash.  Output depends only on the config
and the seed, never on the worker count.

Exit codes: 0 success, 1 a test failed, 2 usage or config error,
3 capacity guard hit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from fractions import Fraction
from functools import partial

from .errors import CapacityError, ConfigurationError, DomainError, InvariantError
from .measures import (
    OperatorRateMeasure,
    ProductColumns,
    as_number,
    measure_from_spec,
    measure_to_spec,
    point,
    sample_labeled_paintbox,
)
from .operators import (
    op_apply,
    op_cyclic,
    op_from_coag,
    op_identity,
    op_multiply,
    op_relabel,
    op_transpose,
    operator_space,
    parse_operator,
)
from .partitions import (
    LabeledPartition,
    Permutation,
    SetPartition,
    coag,
    distance_exponent,
    enumerate_partitions,
    parse_labeled,
    parse_set_partition,
    relabel,
)
from .simulate import (
    child_rng,
    frequency,
    operator_frequency,
    run_replicates,
    simplex_chain,
    simulate_counterexample,
    simulate_ct,
    simulate_dt,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3
SUITES = ("algebra", "rates", "consistency", "exchangeability", "support", "counterexample")

DEFAULT_MEASURE = {
    "variant": "product_columns",
    "k": 2,
    "parameters": {"nu": {"kind": "point", "s": ["1/2", "1/2"]}},
    "total_mass": "1",
}


class UsageError(Exception):
    pass


# -- config -----------------------------------------------------------------


def _load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config!r}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config!r} is not valid JSON: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigurationError("config must be a JSON object")
    for key in ("seed", "n", "k", "t_max", "steps", "reps", "suite", "m"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _field(cfg: dict, name: str, kind, default=None, required=False):
    if name not in cfg:
        if required:
            raise ConfigurationError(f"missing field {name!r}")
        return default
    val = cfg[name]
    try:
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise ValueError
            return int(val)
        if kind is float:
            out = float(val)
            if out != out:
                raise ValueError
            return out
    except (TypeError, ValueError):
        raise ConfigurationError(f"field {name!r} must be {kind.__name__}, got {val!r}") from None
    return val


def _measure(cfg: dict) -> OperatorRateMeasure:
    spec = cfg.get("measure", DEFAULT_MEASURE)
    if not isinstance(spec, dict):
        raise ConfigurationError("field 'measure' must be an object")
    mu = measure_from_spec(spec)
    if "k" in cfg and int(cfg["k"]) != mu.k:
        raise ConfigurationError(f"field 'k' is {cfg['k']} but the measure has k = {mu.k}")
    return mu


def _initial_sampler(text: str, n: int, k: int):
    """A fixed state, or "paintbox:<p1,...,pk>" / "paintbox:uniform" for a random one."""
    if text.startswith("paintbox:"):
        body = text[len("paintbox:") :]
        if body == "uniform":
            s = [Fraction(1, k)] * k
        else:
            s = [as_number(x) for x in body.split(",")]
        nu = point(*s)
        if nu.k != k:
            raise ConfigurationError(f"field 'initial' paintbox has {nu.k} weights, expected {k}")
        return partial(_paintbox_start, nu, n)
    try:
        lam = parse_labeled(text, k)
    except (DomainError, InvariantError) as exc:
        raise ConfigurationError(f"field 'initial': {exc}") from None
    if lam.n != n:
        raise ConfigurationError(f"field 'initial' has {lam.n} elements, expected n = {n}")
    return lam


def _paintbox_start(nu, n, rng):
    return sample_labeled_paintbox(nu, n, rng)


def _header(cmd: str, cfg: dict) -> dict:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "type": "header",
        "command": cmd,
        "config": json.loads(canonical),
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
    }


def _emit(out, rec: dict) -> None:
    out.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _num(x) -> str:
    return repr(float(x))


# -- simulate ---------------------------------------------------------------


def _sim_setup(cfg: dict):
    mu = _measure(cfg)
    cfg["measure"] = measure_to_spec(mu)
    seed = _field(cfg, "seed", int, required=True)
    n = _field(cfg, "n", int, required=True)
    if n < 1:
        raise ConfigurationError("field 'n' must be at least 1")
    k = mu.k
    cfg["k"] = k
    reps = _field(cfg, "reps", int, 1)
    if reps < 1:
        raise ConfigurationError("field 'reps' must be at least 1")
    init = _field(cfg, "initial", str, "paintbox:uniform")
    cfg["initial"] = init
    steps = _field(cfg, "steps", int)
    t_max = _field(cfg, "t_max", float)
    mode = cfg.get("mode", "dt" if steps is not None and t_max is None else "ct")
    if mode not in ("ct", "dt"):
        raise ConfigurationError("field 'mode' must be 'ct' or 'dt'")
    if mode == "ct" and (t_max is None or t_max <= 0):
        raise ConfigurationError("field 't_max' must be a positive number in continuous time")
    if mode == "dt" and (steps is None or steps < 1):
        raise ConfigurationError("field 'steps' must be a positive integer in discrete time")
    cfg["mode"] = mode
    return mu, seed, n, reps, _initial_sampler(init, n, k), mode, t_max, steps


def _one_run(mu, n, initial, mode, t_max, steps, rng):
    lam0 = initial if isinstance(initial, LabeledPartition) else initial(rng)
    if mode == "ct":
        return simulate_ct(mu, n, lam0, t_max, rng)
    return simulate_dt(mu, lam0, steps, rng)


def cmd_simulate(cfg: dict, out, workers: int = 1) -> int:
    mu, seed, n, reps, initial, mode, t_max, steps = _sim_setup(cfg)
    _emit(out, _header("simulate", cfg))
    runs = run_replicates(partial(_one_run, mu, n, initial, mode, t_max, steps), seed, reps, workers)
    for i, traj in enumerate(runs):
        _emit(out, {"type": "replicate", "rep": i, "initial": traj.initial.text()})
        for rec in traj.to_records():
            _emit(out, {"type": "event", "rep": i, **rec})
    return EXIT_OK


def cmd_freq(cfg: dict, out, workers: int = 1) -> int:
    mu, seed, n, reps, initial, mode, t_max, steps = _sim_setup(cfg)
    _emit(out, _header("freq", cfg))
    runs = run_replicates(partial(_one_run, mu, n, initial, mode, t_max, steps), seed, reps, workers)
    for i, traj in enumerate(runs):
        d0 = frequency(traj.initial)
        if mode == "dt" and mu.operator_valued:
            pred = simplex_chain([operator_frequency(e.jump) for e in traj.events], d0)
        else:
            pred = None
        for j, state in enumerate(traj.states):
            obs = frequency(state)
            rec = {"type": "freq", "rep": i, "observed": [_num(x) for x in obs.weights]}
            if mode == "dt":
                rec["step"] = j
            else:
                rec["t"] = _num(0.0 if j == 0 else traj.events[j - 1].time)
            if pred is not None:
                rec["predicted"] = [_num(x) for x in pred[j].weights]
                rec["gap"] = _num(max(abs(a - b) for a, b in zip(obs.weights, pred[j].weights)))
            _emit(out, rec)
    return EXIT_OK


# -- verify -----------------------------------------------------------------


def _algebra_suite(cfg: dict) -> list[dict]:
    """Exhaustive exact identities at small n; fast enough for a smoke run."""
    from .verify import TestReport

    reports = []

    def record(name, failures, checked):
        reports.append(
            TestReport(name, failures, 0, None, checked, "pass" if failures == 0 else "fail").to_record()
        )

    m = parse_operator("{2,3},{2,4,5,6};{1,4,5,6},{1,3}", 6)
    lam = LabeledPartition.from_classes([{1, 3, 4, 5}, {2, 6}], 6)
    record("worked_example_apply", int(op_apply(m, lam).classes != (frozenset({2, 3, 6}), frozenset({1, 4, 5}))), 1)
    bad = coag(parse_set_partition("1356/2/47/8"), parse_set_partition("135/24")) != parse_set_partition("134567/28")
    record("worked_example_coag", int(bad), 1)
    pi = parse_set_partition("123/45/678/9")
    img = op_apply(op_from_coag(parse_set_partition("12/34"), 9, 4), pi.as_labeled(4))
    record("worked_example_coag_operator", int(img.text() != "111112222"), 1)

    k = 2
    fails = checked = 0
    for n in (1, 2):
        ops = list(operator_space(n, k))
        for a in ops:
            for b in ops:
                ab = op_multiply(a, b)
                for c in ops:
                    checked += 1
                    fails += op_multiply(ab, c) != op_multiply(a, op_multiply(b, c))
    record("associativity", fails, checked)

    fails = checked = 0
    for n in (1, 2, 3):
        states = list(enumerate_partitions(n, k))
        for op in operator_space(n, k):
            for x in states:
                for y in states:
                    checked += 1
                    fails += distance_exponent(op_apply(op, x), op_apply(op, y)) < distance_exponent(x, y)
    record("lipschitz_monotone", fails, checked)

    fails = checked = 0
    for n in (1, 2, 3, 4):
        for lam_ in enumerate_partitions(n, 3):
            cyc = op_cyclic(lam_)
            checked += 1
            fails += op_multiply(cyc, op_transpose(cyc)) != op_identity(n, 3)
    record("cyclic_orthogonal", fails, checked)

    fails = checked = 0
    for n in (1, 2, 3):
        states = list(enumerate_partitions(n, k))
        for sigma in Permutation.all(n):
            for op in operator_space(n, k):
                for x in states:
                    checked += 1
                    fails += relabel(op_apply(op, x), sigma) != op_apply(op_relabel(op, sigma), relabel(x, sigma))
    record("relabel_equivariance", fails, checked)
    return reports


def _reps(cfg, default):
    return _field(cfg, "reps", int, default)


def _verify_suite(name: str, cfg: dict, workers: int) -> list[dict]:
    from . import verify as V
    from .measures import Cyclic, OneColumn, SelfSimilar

    seed = _field(cfg, "seed", int, required=True)
    if name == "algebra":
        return _algebra_suite(cfg)
    mu = _measure(cfg)
    n = _field(cfg, "n", int, 2)
    if name == "rates":
        reps = _reps(cfg, 2000)
        horizon = _field(cfg, "t_max", float, 1.0)
        if isinstance(mu, ProductColumns) and all(nu.exact for nu in mu.columns):
            exact = V.rate_oracle_product(n, mu.k, mu.columns, mu.total_mass)
        else:
            exact = V.exact_generator(mu, n)
        start = V.uniform_start(n, mu.k)
        trajs = run_replicates(partial(_ct_from, mu, n, start, horizon), seed, reps, workers)
        return [V.compare_rates(V.empirical_rates(trajs), exact, name=f"rates[{mu.variant} n={n}]").to_record()]
    if name == "consistency":
        n = max(n, 2)
        m = _field(cfg, "m", int, n - 1)
        rep = V.consistency_test(mu, n, m, _reps(cfg, 2000), _field(cfg, "t_max", float, 1.0), seed, workers=workers)
        return [rep.to_record()]
    if name == "exchangeability":
        out = []
        for sigma in Permutation.all(n):
            if sigma == Permutation.identity(n):
                continue
            rep = V.exchangeability_test(mu, n, sigma, _reps(cfg, 2000), _field(cfg, "t_max", float, 1.0), seed, workers=workers)
            out.append(rep.to_record())
        return out
    if name == "support":
        return [V.strong_support_check(mu, n, _reps(cfg, 500), seed).to_record()]
    if name == "counterexample":
        m = _field(cfg, "m", int, 2)
        big = _field(cfg, "N", int, 200)
        events = _field(cfg, "events", int, 20000)
        full, restricted = simulate_counterexample(m, big, float("inf"), child_rng(seed, 0), max_events=events)
        probe = V.markov_violation_probe(full, restricted, m)
        rejected = probe.pvalue is not None and probe.pvalue < 0.01
        rec = probe.to_record()
        rec["name"] = f"counterexample_rejected[m={m} N={big}]"
        rec["threshold"] = 0.01
        rec["verdict"] = "pass" if rejected else "fail"
        rec["details"] = "restricted chain is not Markov (probe rejects); " + rec["details"]
        return [rec]
    raise UsageError(f"unknown suite {name!r}")


def _ct_from(mu, n, start, horizon, rng):
    return simulate_ct(mu, n, start(rng), horizon, rng)


def cmd_verify(cfg: dict, out, workers: int = 1) -> int:
    suite = cfg.get("suite", "all")
    if suite != "all" and suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    _field(cfg, "seed", int, required=True)
    if "measure" in cfg:
        cfg["measure"] = measure_to_spec(_measure(cfg))
    _emit(out, _header("verify", cfg))
    status = EXIT_OK
    for name in SUITES if suite == "all" else (suite,):
        for rec in _verify_suite(name, cfg, workers):
            _emit(out, {"type": "report", "suite": name, **rec})
            if rec["verdict"] == "fail":
                status = EXIT_FAIL
    return status


def cmd_apply(text: str, out) -> int:
    """One-shot ``<operator>;<state>``: the last ';'-separated piece is the state."""
    head, sep, state = text.rpartition(";")
    if not sep:
        raise UsageError("--apply needs '<operator>;<state>'")
    try:
        lam = parse_labeled(state)
        op = parse_operator(head, lam.n)
        lam = parse_labeled(state, op.k)
        result = op_apply(op, lam)
    except (DomainError, InvariantError) as exc:
        raise ConfigurationError(f"--apply: {exc}") from None
    out.write(f"state={result.text()}\n")
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipart", description="Simulate and verify partition-valued Markov processes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "write trajectories as JSON lines"),
        ("verify", "run verification suites"),
        ("freq", "write class-frequency paths and their stochastic-matrix predictions"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--t-max", dest="t_max", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--out", default="-", help="output path, '-' for stdout")
        p.add_argument("--workers", type=int, default=1)
        if name == "verify":
            p.add_argument("--suite", choices=SUITES + ("all",))
            p.add_argument("--m", type=int)
        if name == "simulate":
            p.add_argument("--apply", help="one-shot '<operator>;<state>' application")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = sys.stdout
    close = False
    try:
        if getattr(args, "apply", None):
            return cmd_apply(args.apply, out)
        cfg = _load_config(args)
        if args.out != "-":
            out = open(args.out, "w")
            close = True
        handler = {"simulate": cmd_simulate, "verify": cmd_verify, "freq": cmd_freq}[args.command]
        return handler(cfg, out, max(1, args.workers))
    except (ConfigurationError, UsageError, DomainError, InvariantError) as exc:
        print(f"lipart: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"lipart: capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    finally:
        if close:
            out.close()


if __name__ == "__main__":
    sys.exit(main())
