"""Command-line entry point: synthesize, simulate, verify.

Exit codes are stable:

  0  success (verify: no FAIL)
  1  verification FAIL
  2  invalid configuration or arguments
  3  structural hypothesis violated (defective circle mode, unstable A, ...)
  4  not stabilizable
  5  insufficient control authority (r <= noise bound)
  6  I/O error
  7  numerical failure
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .checks import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    boundedness_verdict,
    chain_noise_norms,
    drift_condition_check,
    fourth_difference_check,
    noiseless_convergence_check,
    policy_chain_args,
    saturated_fourth_bound,
)
from .config import ExperimentConfig, paper_example_config, synthesize
from .engine import monte_carlo_moments, simulate_batch, zero_control_moment_series
from .errors import (
    HypothesisViolationError,
    InsufficientAuthorityError,
    MsboundError,
    NotStabilizableError,
    NumericalFailureError,
)
from .noise import RngStream, moment_bounds
from .policies import PolicyVariant, scale_authority

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_INVALID_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NOT_STABILIZABLE = 4
EXIT_AUTHORITY = 5
EXIT_IO = 6
EXIT_NUMERICAL = 7

BOUND_ESTIMATE_RUN = 2**48 + 1
DRIFT_BATCH_RUNS = 200


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: str, header: list[str], columns: list[np.ndarray]) -> None:
    """UTF-8 comma-separated file, 17 significant digits per float."""
    n = len(columns[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(float(col[i])) for col in columns) + "\n")


def write_svg(path: str, t: np.ndarray, series: dict[str, np.ndarray], title: str) -> None:
    """Self-contained SVG line chart, no external dependencies."""
    width, height, pad = 820, 460, 56
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    ymax = max(float(np.nanmax(v)) for v in series.values()) or 1.0
    ymin = min(0.0, min(float(np.nanmin(v)) for v in series.values()))
    xspan = max(float(t[-1] - t[0]), 1.0)
    yspan = (ymax - ymin) or 1.0

    def sx(x):
        return pad + (x - t[0]) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - ymin) / yspan * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = t[0] + frac * xspan
        yv = ymin + frac * yspan
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - pad + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{xv:.0f}</text>'
        )
        parts.append(
            f'<text x="{pad - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yv:.3g}</text>'
        )
    for i, (label, values) in enumerate(series.items()):
        pts = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
            for x, y in zip(t, values)
            if math.isfinite(float(y))
        )
        color = colors[i % len(colors)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - pad - 4}" y="{pad + 16 + 18 * i}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def _load_config(args) -> ExperimentConfig:
    if args.paper_example:
        cfg = paper_example_config()
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        raise ValueError("either --config or --paper-example is required")
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.runs is not None:
        cfg.runs = args.runs
    if args.horizon is not None:
        cfg.horizon = args.horizon
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    _, report = synthesize(cfg)
    print(report.to_json())
    return EXIT_OK


def _moment_columns(series):
    T = series.horizon
    max_u = np.append(series.max_u_norm, 0.0)  # no control is applied at t = T
    return [np.arange(T + 1), series.mean_sq, series.stderr_sq, series.mean_norm, max_u]


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    policy, report = synthesize(cfg)
    csv_path = args.csv or cfg.outputs.get("csv") or "msbound_simulate.csv"
    series = monte_carlo_moments(
        cfg.system, policy, cfg.noise, cfg.horizon, max(cfg.runs, 2),
        cfg.master_seed, cfg.x0, n_jobs=args.jobs,
    )
    header = ["t", "mean_sq_norm", "stderr", "mean_norm", "max_u_norm"]
    write_csv(csv_path, header, _moment_columns(series))
    print(f"wrote {csv_path} (runs={series.runs}, horizon={series.horizon}, "
          f"completeness={series.completeness:.3f}, R={report.R:.6g})")

    factors = None
    if args.compare_authorities:
        factors = [float(f) for f in args.compare_authorities.split(",")]
    if factors:
        labels, curves = [], []
        for f in factors:
            p = scale_authority(policy, f) if f != 1.0 else policy
            s = monte_carlo_moments(
                cfg.system, p, cfg.noise, cfg.horizon, max(cfg.runs, 2),
                cfg.master_seed, cfg.x0, n_jobs=args.jobs,
            )
            labels.append(f"authority_x{f:g}")
            curves.append(s.mean_sq)
        plot_path = args.plot_data or cfg.outputs.get("plot_data") or "msbound_compare.csv"
        write_csv(
            plot_path,
            ["t"] + [f"mean_sq_norm_{lbl}" for lbl in labels],
            [np.arange(cfg.horizon + 1)] + curves,
        )
        print(f"wrote {plot_path}")
        if args.svg:
            write_svg(
                args.svg,
                np.arange(cfg.horizon + 1),
                dict(zip(labels, curves)),
                f"mean squared state norm over {cfg.runs} runs",
            )
            print(f"wrote {args.svg}")
    elif args.svg:
        write_svg(
            args.svg,
            np.arange(cfg.horizon + 1),
            {"mean_sq_norm": series.mean_sq},
            f"mean squared state norm over {cfg.runs} runs",
        )
        print(f"wrote {args.svg}")
    return EXIT_OK


def _print_check(name: str, status: str, detail: str) -> None:
    print(f"[{status:>4}] {name}: {detail}")


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    policy, report = synthesize(cfg)
    bounds = moment_bounds(cfg.noise)
    statuses = []

    if bounds.violates_moments:
        _print_check("noise_moments", "WARN",
                     "noise violates the fourth-moment assumption; guarantees do not apply")
        moments_ok = False
    else:
        _print_check("noise_moments", PASS,
                     f"c1_bound={bounds.c1:.6g} c4_bound={bounds.c4:.6g}")
        moments_ok = True
        statuses.append(PASS)

    stride, projection = policy_chain_args(policy)
    controlled = monte_carlo_moments(
        cfg.system, policy, cfg.noise, cfg.horizon, max(cfg.runs, 2),
        cfg.master_seed, cfg.x0, n_jobs=args.jobs,
    )

    if moments_ok and policy.authority > 0:
        batch = simulate_batch(
            cfg.system, policy, cfg.noise, cfg.horizon,
            min(max(cfg.runs, 2), DRIFT_BATCH_RUNS), cfg.master_seed, cfg.x0,
        )
        batch = [b for b in batch if b.diverged_at is None]
        est_stream = RngStream(cfg.master_seed, BOUND_ESTIMATE_RUN)
        if policy.variant is PolicyVariant.GENERAL_COMPOSITE:
            step_map = policy.split.T_inv[policy.split.d1 :]
            prop = policy.split.A22
        else:
            step_map, prop = None, None
        w_norms = chain_noise_norms(
            cfg.noise, 100_000, est_stream, policy.k, step_map, prop
        )
        c1_chain = float(w_norms.mean())
        drift = drift_condition_check(
            batch, J=policy.r, r=policy.r, c1=c1_chain,
            stride=stride, projection=projection,
        )
        d_status = drift.verdict if drift.verdict != INCONCLUSIVE else "WARN"
        _print_check(
            "drift_condition", d_status,
            f"b_hat={drift.b_hat:.4f}+-{drift.b_stderr:.4f} over {drift.n_events} events, "
            f"bound={-(policy.r - c1_chain):.4f}, "
            f"threshold drift={drift.b_threshold_hat:.4f}+-{drift.b_threshold_stderr:.4f}",
        )
        if drift.verdict != INCONCLUSIVE:
            statuses.append(drift.verdict)

        bound_est, bound_se = saturated_fourth_bound(w_norms, policy.r)
        fourth = fourth_difference_check(
            batch, policy.r, bound_est, bound_se, stride=stride, projection=projection
        )
        _print_check(
            "fourth_difference", fourth.verdict,
            f"max mean |dxi|^4 = {fourth.m4_hat:.4f} vs bound {bound_est:.4f}+-{bound_se:.4f}",
        )
        statuses.append(fourth.verdict)
    else:
        _print_check("drift_condition", "WARN", "skipped (zero policy or moment-violating noise)")
        _print_check("fourth_difference", "WARN", "skipped (zero policy or moment-violating noise)")

    qcov = None
    if cfg.noise.kind == "gaussian_iid":
        qcov = np.asarray(cfg.noise.params["covariance"])
    growing_slope = None
    if qcov is not None:
        oracle = zero_control_moment_series(cfg.system, qcov, cfg.x0, cfg.horizon)
        lo = cfg.horizon // 2
        tt = np.arange(lo, cfg.horizon + 1, dtype=float)
        tc = tt - tt.mean()
        growing_slope = float((oracle[lo:] @ tc) / (tc @ tc))
    verdict = boundedness_verdict(controlled, growing_slope=growing_slope)
    b_status = {"BOUNDED": PASS, "GROWING": FAIL, INCONCLUSIVE: "WARN"}[verdict.verdict]
    if not moments_ok and b_status == FAIL:
        b_status = "WARN"  # cannot certify anything without moments
    _print_check(
        "boundedness", b_status,
        f"{verdict.verdict}: second-half slope {verdict.slope:.4f} "
        f"in [{verdict.ci_lo:.4f}, {verdict.ci_hi:.4f}]"
        + (f", uncontrolled slope {growing_slope:.4f}" if growing_slope is not None else ""),
    )
    if b_status in (PASS, FAIL):
        statuses.append(b_status)

    try:
        conv = noiseless_convergence_check(cfg.system, policy, cfg.x0)
        _print_check(
            "noiseless_convergence", PASS,
            f"circle block zero after {conv.steps} steps, "
            f"max control afterwards {conv.max_control_after:.3e}, "
            f"final state norm {conv.final_state_norm:.3e}",
        )
        statuses.append(PASS)
    except MsboundError as exc:
        _print_check("noiseless_convergence", FAIL, str(exc))
        statuses.append(FAIL)

    if FAIL in statuses:
        print("verification: FAIL")
        return EXIT_VERIFY_FAIL
    print("verification: PASS")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msbound",
        description="Bounded saturated-feedback policy synthesis and Monte Carlo verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("synth", cmd_synth), ("simulate", cmd_simulate), ("verify", cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--paper-example", action="store_true",
                       help="use the built-in 4-d benchmark experiment")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--runs", type=int, default=None, help="override Monte Carlo run count")
        p.add_argument("--horizon", type=int, default=None, help="override horizon")
        p.add_argument("--csv", default=None, help="moment series CSV output path")
        p.add_argument("--plot-data", default=None, help="comparison plot-data CSV path")
        p.add_argument("--svg", default=None, help="optional SVG chart output path")
        p.add_argument("--compare-authorities", default=None, metavar="F1,F2,...",
                       help="e.g. 1.0,0.1,0.0: re-run with scaled authority and emit plot data")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for Monte Carlo")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except HypothesisViolationError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NotStabilizableError as exc:
        print(f"not stabilizable: {exc}", file=sys.stderr)
        return EXIT_NOT_STABILIZABLE
    except InsufficientAuthorityError as exc:
        print(f"insufficient authority: {exc}", file=sys.stderr)
        return EXIT_AUTHORITY
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
