"""Command-line entry point.

Every subcommand writes a machine-readable result (to ``--out`` or stdout) and
a short human summary on stderr. Exit status: 0 success, 1 a check failed,
2 usage error.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .. import densities as dens
from .. import mechanisms as mech
from .. import statistics as st
from .. import tuning
from ..tuning import Mechanism, TestConfig
from . import experiment as ex
from . import report, seeds

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; keys use flag names."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def _common(p: argparse.ArgumentParser, *, reps=True):
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--null", default="uniform:0,1",
                   help="uniform:a,b | normal | beta:a,b | cauchy:a | pareto:a,k | exp:lambda "
                        "| spiky:L0 | slowvary:A")
    p.add_argument("--mechanism", default="ni", help="ni or interactive")
    p.add_argument("--n", type=int, default=2000, help="sample size per phase")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--L", type=float, default=20.0, help="Hoelder constant of the alternatives")
    p.add_argument("--ch", type=float, default=1.0, help="bandwidth constant")
    p.add_argument("--bulk", default="auto", help="auto | full | interval:a,b")
    p.add_argument("--seed", type=int, default=0, help="64-bit master seed")
    p.add_argument("--out", help="result file (default: stdout)")
    if reps:
        p.add_argument("--reps", type=int, default=500)


def _alt_args(p):
    p.add_argument("--delta", type=float, default=None,
                   help="perturbation size of the alternative (omit for data from the null)")
    p.add_argument("--signs", default="alternating", help="ones | alternating | seed:K")


def _threshold_args(p):
    p.add_argument("--thresholds", choices=["closed-form", "calibrated"], default="closed-form")
    p.add_argument("--calib-reps", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldpgof",
                                 description="Goodness-of-fit testing under local differential privacy.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("privatize", help="privatize a sample and write the released batches")
    _common(p, reps=False)
    _alt_args(p)
    p.add_argument("--input", help="file with one observation per line (default: simulate)")
    p.add_argument("--format", choices=["csv", "bin"], default="csv")

    p = sub.add_parser("test", help="run one test")
    _common(p, reps=False)
    _alt_args(p)
    _threshold_args(p)
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("risk", help="estimate type-I/type-II error rates")
    _common(p)
    _alt_args(p)
    _threshold_args(p)

    p = sub.add_parser("radius", help="bisect for the separation radius at one n")
    _common(p)
    _threshold_args(p)
    p.add_argument("--signs", default="alternating")

    p = sub.add_parser("rates", help="radius over an n grid and the fitted rate exponent")
    _common(p)
    _threshold_args(p)
    p.set_defaults(thresholds="calibrated", L=ex.RATE_L)
    p.add_argument("--signs", default="alternating")
    p.add_argument("--grid", type=int, default=8, help="number of grid points n = 2^k")
    p.add_argument("--start-exp", type=int, default=10, help="smallest k")

    p = sub.add_parser("audit", help="privacy audit of every channel")
    _common(p, reps=False)

    p = sub.add_parser("moments", help="Monte Carlo moment checks of the statistics")
    _common(p)
    p.set_defaults(reps=1000, n=1000)
    _alt_args(p)
    ap.subcommands = sub.choices
    return ap


def parse_args(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            values = read_config_file(args.config)
        except UsageError as e:
            ap.error(str(e))
        sub = ap.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            ap.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = ap.parse_args(argv)
    return args


def make_config(a) -> TestConfig:
    return TestConfig(n=a.n, alpha=a.alpha, beta=a.beta, L=a.L, gamma=a.gamma,
                      mechanism=Mechanism.parse(a.mechanism))


def make_spec(a, delta=None, reps=1) -> ex.ExperimentSpec:
    dens.parse_density(a.null)
    return ex.ExperimentSpec(make_config(a), a.null, delta=delta,
                             signs=getattr(a, "signs", "alternating"), reps=reps,
                             master_seed=a.seed, c_h=a.ch, bulk=a.bulk,
                             thresholds=getattr(a, "thresholds", "closed-form"),
                             calib_reps=getattr(a, "calib_reps", 2000))


def _emit(a, text: str, binary: bytes | None = None):
    if a.out:
        path = Path(a.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        if binary is not None:
            path.write_bytes(binary)
        else:
            path.write_text(text)
    elif binary is None:
        sys.stdout.write(text)


def _say(msg: str):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_privatize(a) -> int:
    spec = make_spec(a, a.delta)
    ctx = ex.Context(spec, spec.pipeline(), math.nan, math.nan)
    pipe = ctx.pipe
    n = a.n
    rd, rn = seeds.trial_streams(a.seed, seeds.ARM_NULL if a.delta is None else seeds.ARM_ALT, 0, 0)
    if a.input:
        X = np.loadtxt(a.input, dtype=float, ndmin=1)
        if X.size < pipe.split * n:
            raise UsageError(f"input has {X.size} observations; the {pipe.config.mechanism.value} "
                             f"protocol needs {pipe.split} * n = {pipe.split * n}")
    else:
        X = ctx.density(a.delta).sample(pipe.split * n, rd)
    p = pipe.params
    batches = {}
    if pipe.config.mechanism is Mechanism.NI:
        batches["kernel"] = mech.ni_kernel_privatize(X[:n], pipe.part, pipe.kernel, p, rn)
    else:
        first = mech.int_bin_privatize(X[:n], pipe.part, p, rn)
        batches["bins"] = first
        batches["clipped"] = mech.int_second_round(X[n:2 * n], pipe.part,
                                                   mech.estimate_phat(first), pipe.p0, p, rn)
    batches["tail"] = mech.rr_tail_privatize(X[-n:], pipe.part.B, p, rn)
    out = Path(a.out or "ldpgof_batches")
    out.mkdir(parents=True, exist_ok=True)
    for name, b in batches.items():
        if a.format == "csv":
            (out / f"{name}.csv").write_text(mech.batch_to_csv_text(b))
        else:
            with open(out / f"{name}.bin", "wb") as fh:
                mech.write_batch_binary(b, fh)
    _say(f"wrote {', '.join(batches)} batches ({a.format}) to {out}/")
    return EXIT_OK


def cmd_test(a) -> int:
    spec = make_spec(a, a.delta)
    ctx = ex.Context.prepare(spec)
    o = ex.run_trial(spec, a.trial, ctx)
    d = o.to_dict()
    d.update(null=a.null, n=a.n, alpha=a.alpha, gamma=a.gamma, delta=a.delta, seed=a.seed,
             trial=a.trial, thresholds=a.thresholds)
    _emit(a, report.dumps(d))
    _say(f"{o.mechanism}: main={o.stat_main:.4g} (t1={o.t1:.4g}) tail={o.stat_tail:.4g} "
         f"(t2={o.t2:.4g}) -> {'reject' if o.reject else 'accept'}")
    return EXIT_OK


def cmd_risk(a) -> int:
    spec = make_spec(a, a.delta, a.reps)
    ctx = ex.Context.prepare(spec)
    r = ex.estimate_risk(spec, ctx)
    l1 = ex.l1_of_delta(ctx.pipe, a.delta) if a.delta is not None else 0.0
    _emit(a, report.risk_csv([report.risk_row(spec, r, l1)]))
    lo, hi = r.type1.interval
    msg = f"type I {r.type1.value:.3f} [{lo:.3f}, {hi:.3f}]"
    if r.type2 is None:
        msg += ", type II not applicable (data from the null)"
    else:
        lo, hi = r.type2.interval
        msg += f", type II {r.type2.value:.3f} [{lo:.3f}, {hi:.3f}]"
    _say(msg + f" over {a.reps} trials")
    return EXIT_OK


def cmd_radius(a) -> int:
    spec = make_spec(a, 0.0, a.reps)
    res = ex.estimate_radius(spec)
    _emit(a, report.dumps(report.radius_dict(res)))
    _say(f"{res.label}: {res.l1_distance:.4g} (status {res.status})")
    return EXIT_OK


def cmd_rates(a) -> int:
    make_config(a)
    dens.parse_density(a.null)
    if a.grid < 4:
        raise UsageError("--grid must be at least 4: the rate fit needs 4 uncensored points")
    ns = ex.rate_grid(a.grid, a.start_exp)
    results, fit = ex.run_rates(a.null, a.mechanism, ns, alpha=a.alpha, beta=a.beta,
                                gamma=a.gamma, L=a.L, reps=a.reps, master_seed=a.seed,
                                thresholds=a.thresholds, calib_reps=a.calib_reps, c_h=a.ch,
                                bulk=a.bulk, signs=a.signs,
                                progress=lambda r: _say(f"n={r.n}: {r.l1_distance:.4g} ({r.status})"))
    _emit(a, report.rates_csv(results))
    if a.out:
        Path(a.out).with_suffix(".fit.json").write_text(report.dumps(report.fit_dict(fit)))
    if fit is None:
        _say("rate fit unavailable: fewer than 4 uncensored grid points")
        return EXIT_FAIL
    _say(f"{ex.RADIUS_LABEL}: slope {fit.slope:.3f} +- {fit.slope_se:.3f} "
         f"(closed-form exponent {fit.theoretical_exponent:.3f})")
    return EXIT_OK


def cmd_audit(a) -> int:
    cfg = make_config(a)
    null = dens.parse_density(a.null)
    part = tuning.design_partition(null, cfg, a.ch, a.bulk)
    p = mech.PrivacyParams.from_alpha(cfg.alpha, cfg.n)
    k = ex.KERNELS["boxcar"]()
    out = {"alpha": cfg.alpha, "e_alpha": math.exp(cfg.alpha)}
    ok = True
    checks = {
        "kernel_laplace": lambda: mech.audit_laplace_grid(part, k, p),
        "tail_bits": lambda: mech.audit_rr("TAIL_BITS", p, part.N),
        "interactive": lambda: max(mech.audit_laplace_grid(part, None, p),
                                   mech.audit_rr("CLIPPED_BITS", p, part.N)),
    }
    for name, fn in checks.items():
        try:
            out[name] = fn()
        except mech.PrivacyViolation as e:
            out[name] = str(e)
            ok = False
    out["tail_bits_outputs"] = mech.audit_rr_outputs("TAIL_BITS", p, part.N)
    out["passed"] = ok
    _emit(a, report.dumps(out))
    for name in checks:
        _say(f"{name}: {out[name]}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_moments(a) -> int:
    cfg = make_config(a)
    null = dens.parse_density(a.null)
    pipe = ex.TestPipeline.build(cfg, null, a.ch, a.bulk)
    f = null if a.delta is None else pipe.alternative(a.delta, a.signs, a.seed)
    rng = seeds.generator(a.seed, seeds.ARM_NULL if a.delta is None else seeds.ARM_ALT, 0, 0)
    if cfg.mechanism is Mechanism.NI:
        main = st.moment_oracle_S(f, null, pipe.part, pipe.kernel, cfg, a.reps, rng)
    else:
        main = st.moment_oracle_D(f, null, pipe.part, cfg, a.reps, rng)
    tail = st.moment_oracle_T(f, null, pipe.part.B, cfg, a.reps, rng)
    reports = [main, tail]
    _emit(a, report.dumps([r.to_dict() for r in reports]))
    for r in reports:
        _say(f"{r.statistic}: " + ", ".join(f"{c.name} {'ok' if c.passed else 'FAIL'}"
                                            for c in r.checks))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


COMMANDS = {"privatize": cmd_privatize, "test": cmd_test, "risk": cmd_risk,
            "radius": cmd_radius, "rates": cmd_rates, "audit": cmd_audit, "moments": cmd_moments}


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    t0 = time.time()
    try:
        code = COMMANDS[args.command](args)
    except (UsageError, ValueError) as e:
        print(f"ldpgof {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _say(f"[{args.command} finished {time.strftime('%Y-%m-%d %H:%M:%S')} in {time.time() - t0:.1f}s]")
    return code


if __name__ == "__main__":
    sys.exit(main())
