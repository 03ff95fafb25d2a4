"""Command-line interface.

Subcommands: ``estimate``, ``simulate``, ``rates``, ``validate-noise``.
Exit codes: 0 success, 1 usage, 2 assumption violation, 3 numerical guard.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness, io, selector
from .errors import ConfigurationError, DeconError, InvalidArgumentError
from .noise import NoiseModel, validate_assumptions
from .spectral import save_grid_function, write_csv
from .structure import Partition, default_family, set_partitions

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_GUARD = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_p(text) -> float:
    if isinstance(text, (int, float)):
        p = float(text)
    elif str(text).strip().lower() in ("inf", "infinity", "oo"):
        p = float("inf")
    else:
        try:
            p = float(Fraction(str(text).strip()))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid loss index {text!r}") from None
    if not p > 1:
        raise argparse.ArgumentTypeError("p must be in (1, inf]")
    return p


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float("inf") if s.strip().lower() == "inf" else float(Fraction(s.strip()))
            for s in str(text).split(",")]


def _family(spec, d: int):
    """``all``, ``full`` or a path to a file with one partition per line."""
    if isinstance(spec, list):
        return default_family(d, "explicit", spec)
    if spec in ("all", "full", "full-only"):
        return default_family(d, spec)
    path = Path(spec)
    if not path.is_file():
        raise InvalidArgumentError(f"--partitions: expected all, full or a file, got {spec!r}")
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    return default_family(d, "explicit", lines)


# ---------------------------------------------------------------------------
# configuration merge


ESTIMATE_DEFAULTS = {
    "data": None,
    "noise": None,
    "p": 2.0,
    "order": 2,
    "partitions": "all",
    "kappa_cal": 1.0,
    "grid_points": None,
    "seed": 0,
    "out": "lpdecon-out",
    "threads": None,
    "h_max_policy": "unit",
}


def merge_config(args, defaults: dict, stream=None) -> dict:
    """Resolve settings: config file beats flags beats defaults; print the source of each."""
    stream = stream or sys.stderr
    cfg = io.load_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if key in cfg:
            val, src = cfg[key], f"config {args.config}"
        elif flag is not None:
            val, src = flag, "command line"
        else:
            val, src = default, "default"
        out[key] = val
        print(f"setting {key} = {val!r} ({src})", file=stream)
    unknown = set(cfg) - set(defaults) - {"command"}
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    return out


# ---------------------------------------------------------------------------
# commands


def run_estimate(args) -> int:
    s = merge_config(args, ESTIMATE_DEFAULTS)
    if s["data"] is None or s["noise"] is None:
        raise UsageError("estimate needs --data and --noise")
    Y = io.read_data(s["data"])
    if Y.shape[0] < 3:
        raise UsageError(f"need at least 3 observations, got {Y.shape[0]}")
    d = Y.shape[1]
    noise = (NoiseModel.parse(s["noise"], d) if isinstance(s["noise"], str)
             else NoiseModel.from_config(s["noise"]))
    p = parse_p(s["p"])
    order = int(s["order"])
    if not 1 <= order <= 5:
        raise UsageError("--order must be in 1..5")
    family = _family(s["partitions"], d)
    threads = s["threads"] or os.cpu_count() or 1
    res = selector.estimate(Y, noise, p, family, order=order, kappa_cal=float(s["kappa_cal"]),
                            grid_points=s["grid_points"], h_max_policy=s["h_max_policy"],
                            threads=int(threads))
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    report = res.to_dict()
    report["settings"] = {k: (str(v) if k == "p" else v) for k, v in s.items()}
    io.dump_json(report, out / "selection.json")
    save_grid_function(out / "estimate.lpdg", res.estimate)
    if res.grid.size <= 2 ** 20:
        write_csv(out / "estimate.csv", res.estimate)
    summary = [
        f"observations: {Y.shape[0]} x {d}",
        f"noise: {noise}",
        f"loss index p: {p:g}",
        f"candidates: {len(res.table)}",
        f"selected partition: {res.partition}",
        "selected bandwidths: " + ", ".join(f"{h:g}" for h in res.h),
        f"gamma_p = {res.constants['gamma_p']:.6g}, Lambda_p = {res.constants['Lambda_p']:.6g}, "
        f"G_bar = {res.constants['G_bar']:.6g}, kappa_cal = {res.constants['kappa_cal']:g}",
        f"tie-break: {res.tie_break}",
        f"grid: {'x'.join(str(m) for m in res.grid.shape)}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK


def _target_from_config(t: dict) -> harness.TargetDensity:
    kind = t.get("kind", "gaussian-product")
    d = int(t.get("d", 1))
    if kind == "gaussian-product":
        return harness.gaussian_product(d, t.get("sigma", 1.0), t.get("beta", 2.0), t.get("L"))
    if kind == "spline-compact":
        return harness.spline_compact(d, t.get("scale", 1.0))
    if kind == "gaussian-mixture":
        return harness.gaussian_mixture(t["weights"], t["means"], t["covs"], t.get("beta", 2.0),
                                        t.get("L", 10.0))
    if kind == "gaussian":
        blocks = [[i - 1 for i in b] for b in t["blocks"]]
        return harness.gaussian_target(blocks, t["means"], t["covs"], t.get("beta", 2.0), t.get("L", 10.0))
    raise ConfigurationError(f"unknown target kind {kind!r}")


def load_scenario(cfg: dict):
    """Scenario file -> (base Scenario, list of n, kappa setting)."""
    if "target" not in cfg or "noise" not in cfg:
        raise ConfigurationError("scenario needs [target] and noise")
    target = _target_from_config(cfg["target"])
    nz = cfg["noise"]
    if isinstance(nz, dict):
        nz = nz.get("spec", nz.get("components"))
    noise = NoiseModel.parse(nz, target.d) if isinstance(nz, str) else NoiseModel.from_config(nz)
    ns = cfg.get("n", [1024])
    ns = [int(x) for x in (ns if isinstance(ns, list) else [ns])]
    sc = harness.Scenario(
        target=target, noise=noise, p=parse_p(cfg.get("p", 2)), n=ns[0],
        replications=int(cfg.get("replications", 30)), seed=int(cfg.get("seed", 0)),
        family=cfg.get("family", "all"), order=int(cfg.get("order", 2)),
        h_max_policy=cfg.get("h_max_policy", "unit"),
    )
    return sc, ns, cfg.get("kappa_cal", 1.0)


def run_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config SCENARIO")
    cfg = io.load_config(args.config)
    print(f"setting scenario = {args.config!r} (command line)", file=sys.stderr)
    sc, ns, kappa = load_scenario(cfg)
    if args.seed is not None:
        sc = sc.with_(seed=args.seed)
    out = Path(args.out or "lpdecon-sim")
    out.mkdir(parents=True, exist_ok=True)
    calib = None
    if kappa == "calibrate":
        calib = harness.calibrate_kappa(sc.with_(n=ns[0]), pilot=int(cfg.get("pilot", 20)))
        kappa = calib["kappa_cal"]
        print(f"calibrated kappa_cal = {kappa:.6g}")
    sc = sc.with_(kappa_cal=float(kappa))
    expo = harness.theoretical_exponent(sc)
    reports = []
    for n in ns:
        rep = harness.mc_risk(sc.with_(n=n), workers=args.threads, theoretical_exponent=expo)
        reports.append(rep)
        print(f"n={n}: risk={rep.risk:.6g} (se {rep.std_error:.3g}), partitions={rep.partitions}, "
              f"excluded={rep.excluded}")
    result = {"scenario": {"target": sc.target.to_dict(), "noise": sc.noise.to_list(),
                           "p": str(sc.p), "replications": sc.replications, "seed": sc.seed,
                           "kappa_cal": sc.kappa_cal, "family": sc.family},
              "calibration": calib, "reports": [r.to_dict() for r in reports]}
    if len(set(ns)) >= 4:
        fit = harness.rate_fit(reports, theoretical=expo)
        result["rate_fit"] = fit.to_dict()
        print(f"fitted slope {fit.slope:.4f} +/- {fit.half_width:.4f} (theory {expo:.4f})")
    io.dump_json(result, out / "risk.json")
    harness.write_reports_csv(out / "risk.csv", reports)
    bad = [r.n for r in reports if not r.scenario_ok]
    if bad:
        print(f"scenario failed: too many excluded replications at n={bad}", file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


def run_rates(args) -> int:
    beta = _floats(args.beta)
    d = len(beta)
    lam = _floats(args.lam) if args.lam else list(NoiseModel.parse(args.noise, d).lam) if args.noise else None
    if lam is None:
        raise UsageError("rates needs --lam or --noise")
    if len(lam) == 1:
        lam = lam * d
    p = parse_p(args.p)
    parts = [Partition.parse(args.partition, d)] if args.partition else list(set_partitions(d))
    r = _floats(args.r) if args.r else [float("inf")]
    if len(r) == 1:
        r = r * d
    print(f"d={d} beta={beta} lambda={lam} p={'inf' if np.isinf(p) else f'{p:g}'}"
          + (f" r={r}" if np.isinf(p) else ""))
    warn = False
    for P in parts:
        if np.isinf(p):
            ups, ex, ok = selector.rate_exponent_sup(beta, r, lam, P)
            if ok:
                print(f"{str(P):<20} Upsilon={ups:.6g}  exponent={ex:.6g} ({_frac(ex)})  rate (n/ln n)^-{ex:.4g}")
            else:
                warn = True
                print(f"{str(P):<20} no uniformly consistent estimator (1 - sum 1/(beta_j r_j) <= 0)")
        else:
            tau, ex = selector.rate_exponent_lp(beta, lam, p, P)
            print(f"{str(P):<20} tau={tau:.6g}  exponent={ex:.6g} ({_frac(ex)})  rate n^-{ex:.4g}")
    if warn:
        print("warning: inconsistent sup-norm configuration", file=sys.stderr)
    return EXIT_OK


def _frac(x: float) -> str:
    f = Fraction(x).limit_denominator(1000)
    return f"{f.numerator}/{f.denominator}"


def run_validate_noise(args) -> int:
    if not args.noise:
        raise UsageError("validate-noise needs --noise")
    d = args.d
    noise = NoiseModel.parse(args.noise, d)
    d = noise.d
    family = _family(args.partitions or "all", d)
    rep = validate_assumptions(noise, parse_p(args.p), family)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if not rep.passed:
        print("assumption check failed: " + "; ".join(rep.failures), file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lpdecon", description="Adaptive multivariate density deconvolution.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    e = sub.add_parser("estimate", help="select (h, P) and write the estimate")
    e.add_argument("--data")
    e.add_argument("--noise", help='e.g. "laplace:0.5" or "laplace:1,gamma:1:2"')
    e.add_argument("--p", type=parse_p)
    e.add_argument("--order", type=int)
    e.add_argument("--partitions", help="all | full | file with one partition per line")
    e.add_argument("--kappa-cal", dest="kappa_cal", type=float)
    e.add_argument("--grid-points", dest="grid_points", type=int)
    e.add_argument("--h-max-policy", dest="h_max_policy", choices=selector.H_MAX_POLICIES)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--threads", type=int)
    e.add_argument("--config")
    e.set_defaults(func=run_estimate)

    s = sub.add_parser("simulate", help="Monte Carlo risk for a scenario file")
    s.add_argument("--config", help="scenario file (TOML or JSON)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=run_simulate)

    r = sub.add_parser("rates", help="rate exponents for given smoothness")
    r.add_argument("--beta", required=True, help="comma separated, one per coordinate")
    r.add_argument("--lam", help="noise smoothness orders")
    r.add_argument("--noise", help="derive orders from a noise spec instead of --lam")
    r.add_argument("--p", default="2")
    r.add_argument("--r", help="Nikolskii indices (sup-norm loss)")
    r.add_argument("--partition", help='e.g. "[[1],[2]]"; default: all partitions')
    r.set_defaults(func=run_rates)

    v = sub.add_parser("validate-noise", help="check the noise assumptions for a loss index")
    v.add_argument("--noise", required=True)
    v.add_argument("--d", type=int)
    v.add_argument("--p", default="2")
    v.add_argument("--partitions")
    v.add_argument("--out")
    v.set_defaults(func=run_validate_noise)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        ap.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"lpdecon {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DeconError as exc:
        print(f"lpdecon {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
