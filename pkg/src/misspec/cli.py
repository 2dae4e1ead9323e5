"""Command-line front end.

Subcommands::

    misspec run --preset example2 --seed 42 --out out/
    misspec limit-sample --law quadratic --delta 1 --gamma 1 --count 1000
    misspec kl-scan --preset cusp-kl-scan
    misspec presets

Exit status: 0 success, 1 a gating target failed, 2 bad arguments or
config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import io
from .errors import (
    BoundaryMinimizerError,
    ConfigError,
    InvalidSpecError,
    MisspecError,
    NonUniqueMinimizerError,
    UnknownNameError,
)
from .experiments import MIN_GATING_N, Scenario, preset, presets, run_scenario
from .functionals import deterministic_profile, necessary_condition_residual
from .limit_laws import ArgmaxLawSpec, sample_argmax_detail, MAX_HIT_RATE
from .signals import ChangePoint

log = logging.getLogger("misspec")

EXIT_OK, EXIT_TARGET, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
OVERRIDE_KEYS = ("seed", "N", "ladder", "steps")


class UsageError(Exception):
    pass


def _out_dir(args) -> str:
    # explicit --out wins, then MISSPEC_OUT, then the working directory
    if args.out:
        return args.out
    return os.environ.get("MISSPEC_OUT") or "."


def _parse_ladder(text: str | None):
    if text is None:
        return None
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--ladder must be comma-separated numbers, got {text!r}") from None


def load_config(filename: str) -> tuple[Scenario, dict]:
    """Read a JSON run config; returns the scenario and the run options.

    Accepts a bare scenario (as written to ``config.json`` by ``run``) or an
    object with ``scenario`` (a preset name or a scenario object) plus
    optional ``seed``, ``N``, ``ladder``, ``steps``, ``output`` and
    ``emit_paths``.
    """
    try:
        with open(filename) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{filename}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{filename}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{filename}: top level must be an object")
    options = {}
    if "truth" in d:
        body = d
    else:
        extra = set(d) - {"scenario", "output", "emit_paths", *OVERRIDE_KEYS}
        if extra:
            raise ConfigError(f"{filename}: unknown field(s) {', '.join(sorted(extra))}")
        if "scenario" not in d:
            raise ConfigError(f"{filename}: field 'scenario' is missing")
        body = d["scenario"]
        options = {k: d[k] for k in ("output", "emit_paths") if k in d}
        options["overrides"] = {k: d[k] for k in OVERRIDE_KEYS if k in d}
    try:
        if isinstance(body, str):
            scen = preset(body)
        elif isinstance(body, dict):
            scen = Scenario.from_dict(body)
        else:
            raise ConfigError("field 'scenario' must be a preset name or an object")
        ov = options.get("overrides", {})
        if ov:
            scen = scen.with_overrides(
                seed=ov.get("seed"), N=ov.get("N"),
                ladder=None if ov.get("ladder") is None else tuple(float(e) for e in ov["ladder"]),
                steps=ov.get("steps"))
    except (ConfigError, InvalidSpecError, UnknownNameError, TypeError, ValueError) as exc:
        raise ConfigError(f"{filename}: {_msg(exc)}") from None
    return scen, options


def _msg(exc: BaseException) -> str:
    return exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)


def _scenario(args) -> tuple[Scenario, dict]:
    if bool(args.preset) == bool(args.config):
        raise UsageError("give exactly one of --preset or --config")
    if args.preset:
        scen, options = preset(args.preset), {}
    else:
        scen, options = load_config(args.config)
    try:
        scen = scen.with_overrides(seed=args.seed, N=args.N, ladder=_parse_ladder(args.ladder),
                                   steps=args.n)
    except InvalidSpecError as exc:
        raise UsageError(str(exc)) from None
    return scen, options


def cmd_run(args) -> int:
    scen, options = _scenario(args)
    outdir = args.out or options.get("output") or os.environ.get("MISSPEC_OUT") or "."
    emit = args.emit_paths or bool(options.get("emit_paths", False))
    print(f"scenario {scen.name}: regime {scen.regime}, rate exponent {scen.exponent}, "
          f"N={scen.N}, seed={scen.seed}")
    if scen.N < MIN_GATING_N:
        print("low-N: targets not evaluated")
    report = run_scenario(scen, threads=args.threads, emit_paths=os.path.join(outdir, "paths") if emit else None,
                          progress=print)
    report.write(outdir)
    with open(os.path.join(outdir, "config.json"), "w") as fh:
        fh.write(io.dumps(scen.to_dict()))
    with open(os.path.join(outdir, "timing.json"), "w") as fh:
        fh.write(io.dumps({"wall_clock_seconds": report.wall_clock, "threads": args.threads}))
    for name, fit in report.slopes.items():
        print(f"slope[{name}] = {fit['slope']:.4f} +/- {fit['stderr']:.4f}")
    for name, t in report.targets.items():
        state = "not evaluated" if not t["evaluated"] else ("pass" if t["passed"] else "FAIL")
        soft = " (soft)" if t["soft"] else ""
        val = "-" if t["value"] is None else (f"{t['value']:.6g}" if isinstance(t["value"], float) else t["value"])
        print(f"target {name}{soft}: {state} value={val} threshold={t['threshold']}")
    print(f"wrote {os.path.join(outdir, 'report.json')} in {report.wall_clock:.1f}s")
    return EXIT_OK if report.passed else EXIT_TARGET


def cmd_limit_sample(args) -> int:
    law = args.law
    if law == "quadratic":
        spec = ArgmaxLawSpec.quadratic(args.delta, args.gamma, truncation=args.U, step=args.eta)
    elif law == "power":
        spec = ArgmaxLawSpec.power(args.kappa, truncation=args.U, step=args.eta)
    else:
        spec = ArgmaxLawSpec.linear_cp(args.delta, truncation=args.U, step=args.eta)
    outdir = _out_dir(args)
    os.makedirs(outdir, exist_ok=True)
    sample = sample_argmax_detail(spec, args.seed, args.count)
    print(f"truncation U={spec.truncation:.6g} step={spec.step:.6g}; "
          f"truncation hits {sample.hits}/{args.count} (rate {sample.hit_rate:.6f})")
    fname = os.path.join(outdir, "samples.csv")
    io.write_csv(fname, ["u"], ((v,) for v in sample.values))
    print(f"wrote {args.count} samples to {fname}")
    if sample.hits > 0 and sample.hits >= MAX_HIT_RATE * args.count:
        print("error: truncation too small (hit rate >= 0.1%)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_kl_scan(args) -> int:
    scen, _ = _scenario(args)
    grid = scen.profile_grid
    outdir = _out_dir(args)
    try:
        prof = deterministic_profile(scen.assumed, scen.truth, scen.theta0, scen.window, grid)
    except BoundaryMinimizerError as exc:
        print(f"regime: boundary minimizer ({exc.side}) -- {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NonUniqueMinimizerError as exc:
        print(f"regime: non-unique minimizer -- {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    os.makedirs(outdir, exist_ok=True)
    fname = os.path.join(outdir, "phi_scan.csv")
    io.write_csv(fname, ["theta", "phi"], zip(prof.tab_theta, prof.tab_phi))
    print(f"theta_hat = {io.format_float(prof.theta_hat)}")
    label = "cusp: limit law out of scope" if scen.regime == "cusp-vs-smooth" else prof.regime.label
    print(f"regime: {label}")
    print(f"curvature oracle: {prof.regime.coarse:.6g} (h=1e-2), {prof.regime.fine:.6g} (h=1e-3)")
    if isinstance(scen.assumed, ChangePoint):
        res = necessary_condition_residual(scen.assumed, scen.truth, scen.theta0, prof.theta_hat)
        print(f"midpoint residual: {res:.3e}")
    else:
        print("midpoint residual: not applicable")
    print(f"minorant kappa: {prof.minorant_kappa:.6g}")
    print(f"wrote {fname}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, s in presets().items():
        print(f"{name:24s} {s.regime:16s} {s.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="misspec", description="Misspecified small-noise estimation lab")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--preset")
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--N", type=int, help="replications per noise level")
        sp.add_argument("--ladder", help="comma-separated noise levels, decreasing")
        sp.add_argument("--n", type=int, help="time-grid steps (default: per-rung rule)")
        sp.add_argument("--out", help="output directory (default: $MISSPEC_OUT or .)")

    r = sub.add_parser("run", help="run a Monte Carlo scenario")
    scenario_args(r)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--emit-paths", action="store_true", help="dump the first path of each noise level")
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("limit-sample", help="sample an argmax limit law")
    ls.add_argument("--law", choices=("quadratic", "power", "linear-cp"), required=True)
    ls.add_argument("--delta", type=float, default=1.0)
    ls.add_argument("--gamma", type=float, default=1.0)
    ls.add_argument("--kappa", type=float, default=1.0)
    ls.add_argument("--U", type=float, help="truncation half-width")
    ls.add_argument("--eta", type=float, help="lattice step")
    ls.add_argument("--count", type=int, default=1000)
    ls.add_argument("--seed", type=int, default=0)
    ls.add_argument("--out")
    ls.set_defaults(func=cmd_limit_sample)

    kl = sub.add_parser("kl-scan", help="tabulate phi and locate its minimizer")
    scenario_args(kl)
    kl.set_defaults(func=cmd_kl_scan)

    pr = sub.add_parser("presets", help="list presets")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, UnknownNameError, InvalidSpecError) as exc:
        print(f"error: {_msg(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except MisspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
