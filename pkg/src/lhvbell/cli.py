"""Command-line front end: bounds, model curves, simulation, data analysis.

Subcommands:
  bound      deviation bound and threshold visibility for given parameters
  model      write the best model's curves (rho, P, p12, delta) as CSV + JSON
  simulate   run a simulated experiment from a JSON config, write counts CSV
  analyze    evaluate the inequalities on a counts/rates CSV, write a report
  validate   self-test of the numerical machinery

Exit codes are a stable contract: 0 success/CONSISTENT, 2 bad parameters or
input, 3 VIOLATES, 4 INCONCLUSIVE.  Angles in files are always radians;
flags accept degrees with --degrees.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .inequalities import (
    RateSeries,
    TwoChannelRates,
    VERDICT_INCONCLUSIVE,
    VERDICT_VIOLATES,
    analyze,
    complete_symmetric,
    nonideal_bound,
)
from .lhv_model import DetectionFn
from .montecarlo import MODE_LHV, MODE_QM, SimConfig, simulate
from .optimal_model import (
    BRANCH_DEVIATE,
    OptimalModelParams,
    delta_series,
    deviation_report,
    make_optimal_model,
    predict_rates,
    v_max,
)
from .periodic_math import PERIOD, default_grid_n

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VIOLATES = 3
EXIT_INCONCLUSIVE = 4


class CliError(Exception):
    """Input or parameter error reported as a structured message, exit 2."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: str, header: str, columns, comments=()):
    rows = np.column_stack(columns)
    lines = [f"# {c}" for c in comments]
    lines.append(header)
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit_json(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _angle(value: float, degrees: bool) -> float:
    return math.radians(value) if degrees else value


# ---------------------------------------------------------------- bound

def cmd_bound(args) -> int:
    if args.eta is not None:
        if args.v is None:
            raise CliError("--v is required with --eta")
        report = deviation_report(args.eta, args.v)
        _emit_json(report, args.out)
        print(f"v_max({args.eta}) = {report['v_max']:.6f}  branch = {report['branch']}  "
              f"D = {report['d_closed']:.6e}", file=sys.stderr)
        return EXIT_OK
    if None in (args.eta1, args.eta2, args.v_max_meas, args.v_min_meas):
        raise CliError("provide either --eta/--v or all of --eta1/--eta2/--v-max/--v-min")
    res = nonideal_bound(args.eta1, args.eta2, args.v_max_meas, args.v_min_meas)
    payload = {
        "eta1": args.eta1,
        "eta2": args.eta2,
        "v_max_meas": args.v_max_meas,
        "v_min_meas": args.v_min_meas,
        "bound": res.bound,
        "bound_small_eta": res.bound_small_eta,
        "violated": res.violated,
    }
    _emit_json(payload, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- model

def cmd_model(args) -> int:
    n = args.grid or default_grid_n()
    params = OptimalModelParams.solve(args.eta, args.v)
    model = make_optimal_model(args.eta, args.v, n=n)
    x = model.rho.fn.x
    if args.angles:
        try:
            phis = np.array([_angle(float(tok), args.degrees)
                             for tok in args.angles.split(",")])
        except ValueError as exc:
            raise CliError(f"--angles: {exc}") from exc
        p12_vals = params.eta**2 / 4 * (
            1 + params.v * np.cos(2 * phis)
            + delta_series(phis, params.eta, params.eps))
        rates = None
    else:
        phis = PERIOD * np.arange(1, args.n_angles + 1) / args.n_angles
        rates = predict_rates(params, n_angles=args.n_angles)
        p12_vals = rates.rates
    delta = delta_series(phis, params.eta, params.eps)

    echo = {
        "eta": args.eta, "v": args.v, "n_angles": args.n_angles,
        "grid_n": n, "two_channel": bool(args.two_channel),
    }
    comments = [f"config: {json.dumps(echo, sort_keys=True)}"]
    prefix = args.prefix
    _write_csv(f"{prefix}rho.csv", "x_rad,rho", (x, model.rho.samples), comments)
    _write_csv(f"{prefix}detection.csv", "x_rad,p", (x, model.p1.samples), comments)
    _write_csv(f"{prefix}p12.csv", "angle_rad,p12", (phis, p12_vals), comments)
    _write_csv(f"{prefix}delta.csv", "angle_rad,delta", (phis, delta), comments)
    if args.two_channel:
        tc = predict_rates(params, n_angles=args.n_angles, two_channel=True)
        _write_csv(
            f"{prefix}channels.csv",
            "angle_rad,r_pp,r_pm,r_mp,r_mm",
            (phis, tc.pp.rates, tc.pm.rates, tc.mp.rates, tc.mm.rates),
            comments,
        )

    report = deviation_report(args.eta, args.v)
    from .inequalities import fourier_b

    report["b"] = (list(fourier_b(rates))
                   if rates is not None and args.n_angles % 2 == 0 else [])
    report["config_echo"] = echo
    _emit_json(report, f"{prefix}summary.json")
    print(f"wrote {prefix}{{rho,detection,p12,delta}}.csv and {prefix}summary.json",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _config_from_json(path: str) -> SimConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc

    def need(key, kind):
        if key not in raw:
            raise CliError(f"config field {key!r} is missing")
        try:
            return kind(raw[key])
        except (TypeError, ValueError) as exc:
            raise CliError(f"config field {key!r}: {exc}") from exc

    mode = need("mode", str).lower()
    pairs = need("pairs", int)
    seed = int(raw.get("seed", 0))
    two_channel = bool(raw.get("two_channel", False))
    method = str(raw.get("method", "event"))
    accidental = float(raw.get("accidental_rate", 0.0))
    if "angles" in raw:
        angles = np.asarray(raw["angles"], dtype=float)
    else:
        n_angles = need("n_angles", int)
        angles = PERIOD * np.arange(1, n_angles + 1) / n_angles
    eta = need("eta", float)
    v = need("v", float)
    try:
        if mode == MODE_QM:
            return SimConfig(mode=MODE_QM, pairs=pairs, angles=angles, seed=seed,
                             eta=eta, v=v, two_channel=two_channel, method=method,
                             accidental_rate=accidental)
        if mode == MODE_LHV:
            model = make_optimal_model(eta, v, n=int(raw.get("grid_n", default_grid_n())))
            return SimConfig(mode=MODE_LHV, pairs=pairs, angles=angles, seed=seed,
                             model=model, two_channel=two_channel, method=method,
                             accidental_rate=accidental)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    raise CliError(f"config field 'mode' must be 'qm' or 'lhv', got {mode!r}")


def cmd_simulate(args) -> int:
    config = _config_from_json(args.config)
    data = simulate(config, workers=args.workers)
    comments = [f"config: {json.dumps(config.describe(), sort_keys=True)}"]
    if config.two_channel:
        _write_csv(
            args.out,
            "angle_rad,n_pp,n_pm,n_mp,n_mm",
            (data.angles, data.channels["pp"], data.channels["pm"],
             data.channels["mp"], data.channels["mm"]),
            comments,
        )
    else:
        _write_csv(
            args.out,
            "angle_rad,singles_1,singles_2,coincidences",
            (data.angles, data.singles1, data.singles2, data.coincidences),
            comments,
        )
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def _read_csv(path: str):
    """Parse a counts or rates CSV; returns (header_fields, rows)."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CliError(f"{path}: no data rows")
    header = [h.strip().lower() for h in lines[0].split(",")]
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise CliError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: {exc}") from exc
    return header, np.asarray(rows, dtype=float)


def _infer_grid_n(angles: np.ndarray) -> int:
    """Smallest n for which every angle sits on the j*pi/n grid."""
    m = angles.size
    for n in range(max(m, 3), 8 * m + 9):
        j = np.rint((angles % PERIOD) / (PERIOD / n))
        if np.max(np.abs((angles % PERIOD) - j * PERIOD / n)) < 1e-9:
            return n
    raise CliError("angles do not form a uniform pi/n grid")


def _load_series(path: str, n_override: int | None):
    header, rows = _read_csv(path)
    angles = rows[:, 0]
    if header[0] != "angle_rad":
        raise CliError(f"{path}: first column must be angle_rad, got {header[0]!r}")
    if header == ["angle_rad", "n_pp", "n_pm", "n_mp", "n_mm"]:
        tc = TwoChannelRates(
            pp=RateSeries.from_counts(rows[:, 1]),
            pm=RateSeries.from_counts(rows[:, 2]),
            mp=RateSeries.from_counts(rows[:, 3]),
            mm=RateSeries.from_counts(rows[:, 4]),
        )
        n = _infer_grid_n(angles)
        if n != angles.size:
            raise CliError("two-channel data must cover the full angle grid")
        return tc
    if header[:4] == ["angle_rad", "singles_1", "singles_2", "coincidences"]:
        values = rows[:, 3]
        sigma = np.sqrt(values)
    elif header[:2] == ["angle_rad", "rate"]:
        values = rows[:, 1]
        sigma = rows[:, 2] if len(header) > 2 and header[2].startswith("uncert") else None
    else:
        raise CliError(
            f"{path}: unrecognized schema {','.join(header)}; expected counts "
            "(angle_rad,singles_1,singles_2,coincidences), rates "
            "(angle_rad,rate[,uncertainty]) or two-channel counts"
        )
    n = n_override or _infer_grid_n(angles)
    try:
        return complete_symmetric(angles, values, n, sigma=sigma)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_analyze(args) -> int:
    if args.bound_only:
        if None in (args.v_max_meas, args.v_min_meas):
            raise CliError("--bound-only needs --v-max and --v-min")
        eta2 = args.eta2 if args.eta2 is not None else args.eta
        res = nonideal_bound(args.eta, eta2, args.v_max_meas, args.v_min_meas)
        vm = v_max(args.eta)
        payload = {
            "eta": args.eta,
            "v_max_model": vm,
            "v_max_meas": args.v_max_meas,
            "v_min_meas": args.v_min_meas,
            "bound": res.bound,
            "bound_small_eta": res.bound_small_eta,
            "violated": res.violated,
            "test_possible": bool(args.v_min_meas > vm),
            "d_at_v_min": deviation_report(args.eta, args.v_min_meas)["d_closed"],
            "d_at_v_max": deviation_report(args.eta, args.v_max_meas)["d_closed"],
        }
        _emit_json(payload, args.out)
        return EXIT_OK

    if not args.data:
        raise CliError("analyze needs a data file (or --bound-only)")
    data = _load_series(args.data, args.n_angles)
    report = analyze(
        data,
        eta=args.eta,
        v_override=args.v_quantum,
        accidental_rate=args.accidental_rate,
        bootstrap=args.bootstrap,
        seed=args.seed,
    )
    report.config_echo = {
        "data": args.data, "eta": args.eta, "v_quantum": args.v_quantum,
        "accidental_rate": args.accidental_rate, "bootstrap": args.bootstrap,
        "seed": args.seed, "n_angles": args.n_angles,
    }
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    sig = "n/a" if report.sigma_delta_min is None else f"{report.sigma_delta_min:.3e}"
    print(
        f"delta_min = {report.delta_min:.6e} (sigma {sig})  D = {report.d_bound:.6e}  "
        f"verdict = {report.verdict}",
        file=sys.stderr,
    )
    if report.verdict == VERDICT_VIOLATES:
        return EXIT_VIOLATES
    if report.verdict == VERDICT_INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# ---------------------------------------------------------------- validate

def _validate_checks(grid_n: int):
    """Cross-checks of the numerical machinery; yields (name, error, tol, passed)."""
    from .inequalities import delta_min as dmin_stat
    from .inequalities import delta_min_from_moments, s_param
    from .optimal_model import a_coeff, epsilon_solve
    from .periodic_math import to_series
    from .variational_solver import VariationalProblem, solve

    from .optimal_model import rho_optimal

    checks = []

    # grid resolution: clipped-cosine harmonics recovered from samples
    rho = rho_optimal(OptimalModelParams.solve(0.2, 0.98), n=grid_n)
    a2_grid = PERIOD**2 * to_series(rho.fn, 2).coeffs[2]
    eps98 = epsilon_solve(0.2, 0.98)
    err = abs(a2_grid - a_coeff(eps98, 2))
    checks.append(("grid_harmonics", err, 1e-6,
                   "clipped-cosine second harmonic from the sampled density"))

    # quadrature exactness of the perfect-agreement branch
    model = make_optimal_model(0.2, 0.9, n=grid_n)
    from .lhv_model import coincidence_curve

    phis, p12 = coincidence_curve(model)
    target = 0.2**2 / 4 * (1 + 0.9 * np.cos(2 * phis))
    checks.append(("agreement_branch", float(np.max(np.abs(p12 - target))), 1e-8,
                   "coincidence curve vs quantum prediction below threshold"))

    # deviation: series vs closed form at the same clipping parameter
    rep = deviation_report(0.2, 0.98)
    rel = abs(rep["d_series"] / rep["d_closed_eps"] - 1)
    checks.append(("deviation_series_vs_closed", rel, 0.05,
                   "RMS deviation, exact series vs closed form"))

    # statistic identity on pseudo-random rates
    rng = np.random.Generator(np.random.Philox(key=0xC0FFEE))
    rates = RateSeries(rng.random(16) + 0.1)
    checks.append(("delta_min_identity",
                   abs(dmin_stat(rates) - delta_min_from_moments(rates)), 1e-12,
                   "fitted residual vs moment form"))

    # two-channel link S = 2 sqrt(2) v_b
    tc = predict_rates(OptimalModelParams.solve(0.2, 0.98), n_angles=16, two_channel=True)
    from .inequalities import visibilities

    vb = visibilities(tc.pp).v_b
    checks.append(("two_channel_s_link", abs(s_param(tc) - 2 * math.sqrt(2) * vb), 1e-10,
                   "correlation combination vs curve visibility"))

    # variational recovery of the perfect-agreement density
    small_n = min(grid_n, 256)
    hat = DetectionFn.tophat(0.2, n=small_n)
    prob = VariationalProblem(detection=hat, eta=0.2, v=0.5, tol=1e-10, max_iter=40000)
    res = solve(prob)
    target_rho = rho_optimal(OptimalModelParams.solve(0.2, 0.5), n=small_n)
    checks.append(("variational_agreement", res.s_min, 1e-10,
                   "minimized mismatch on the agreement branch"))
    checks.append(("variational_density", float(
        np.max(np.abs(res.rho.samples - target_rho.samples))), 1e-3,
        "solver density vs analytic optimum"))
    return checks


def cmd_validate(args) -> int:
    grid_n = args.grid or default_grid_n()
    if args.sweep:
        etas = np.linspace(0.05, 1.0, 20)
        vs = np.linspace(0.9, 1.0, 21)
        rows = []
        for e in etas:
            for v in vs:
                from .optimal_model import deviation_d

                rows.append((e, v, deviation_d(float(e), float(v))))
        arr = np.asarray(rows)
        _write_csv(args.sweep, "eta,v,d_bound", (arr[:, 0], arr[:, 1], arr[:, 2]))
        print(f"wrote {args.sweep}", file=sys.stderr)
        return EXIT_OK

    checks = _validate_checks(grid_n)
    results = []
    all_pass = True
    for name, err, tol, describe in checks:
        passed = bool(err <= tol)
        all_pass &= passed
        results.append({"check": name, "error": float(err), "tolerance": tol,
                        "passed": passed, "description": describe})
        mark = "PASS" if passed else "FAIL"
        print(f"{mark}  {name}: error {err:.3e} vs tolerance {tol:.0e}")
        if not passed and name == "grid_harmonics":
            print(f"      grid too coarse for the spectral checks; "
                  f"increase --grid (currently {grid_n})")
    _emit_json({"grid_n": grid_n, "checks": results, "all_passed": all_pass}, args.out)
    return EXIT_OK if all_pass else 1


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lhvbell", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"lhvbell {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="deviation bound for given parameters")
    b.add_argument("--eta", type=float)
    b.add_argument("--v", type=float)
    b.add_argument("--eta1", type=float)
    b.add_argument("--eta2", type=float)
    b.add_argument("--v-max", dest="v_max_meas", type=float)
    b.add_argument("--v-min", dest="v_min_meas", type=float)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    m = sub.add_parser("model", help="write best-model curves as CSV + JSON summary")
    m.add_argument("--eta", type=float, required=True)
    m.add_argument("--v", type=float, required=True)
    m.add_argument("--n-angles", dest="n_angles", type=int, default=64)
    m.add_argument("--angles", help="comma-separated explicit angles (radians)")
    m.add_argument("--degrees", action="store_true",
                   help="interpret --angles as degrees")
    m.add_argument("--grid", type=int)
    m.add_argument("--two-channel", action="store_true")
    m.add_argument("--prefix", default="model_")
    m.set_defaults(func=cmd_model)

    s = sub.add_parser("simulate", help="simulate an experiment from a JSON config")
    s.add_argument("config", help="JSON config file")
    s.add_argument("--out", default="counts.csv")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="evaluate the inequalities on a data file")
    a.add_argument("data", nargs="?", help="counts or rates CSV")
    a.add_argument("--eta", type=float, required=True)
    a.add_argument("--eta2", type=float)
    a.add_argument("--v-quantum", dest="v_quantum", type=float,
                   help="use this visibility in the bound instead of the fitted one")
    a.add_argument("--n-angles", dest="n_angles", type=int)
    a.add_argument("--accidental-rate", dest="accidental_rate", type=float, default=0.0)
    a.add_argument("--bootstrap", type=int, default=0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--bound-only", dest="bound_only", action="store_true")
    a.add_argument("--v-max", dest="v_max_meas", type=float)
    a.add_argument("--v-min", dest="v_min_meas", type=float)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("validate", help="self-test of the numerical machinery")
    v.add_argument("--grid", type=int)
    v.add_argument("--sweep", help="write a (eta, v) grid of bounds to this CSV instead")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
