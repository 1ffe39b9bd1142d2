"""Command-line interface: ``hybridmerton {price,simulate,calibrate,decompose}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate, decompose_spread, generate_synthetic_market
from .exceptions import NumericalError, ValidationError
from .io import RunConfig, read_observations, write_observations, write_table
from .model import filtered_value, firm_value, sample_paths
from .pricing import (
    PricingContext,
    credit_spread,
    debt_price_closed_form,
    equity_price_closed_form,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _rho_values(args, cfg):
    if not args.rho_sweep:
        return [cfg.rho]
    try:
        return [float(x) for x in args.rho_sweep.split(",")]
    except ValueError as exc:
        raise ValidationError(f"--rho-sweep: {exc}") from exc


def _out_dir(args):
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_table(header, rows, stream):
    print(",".join(header), file=stream)
    for row in rows:
        print(",".join(repr(v) if isinstance(v, float) else str(int(v) if isinstance(v, bool) else v)
                       for v in row), file=stream)


def cmd_price(args, cfg, stream):
    """Debt, equity and spread along the central path (all Wiener values zero)
    unless ``v_prime`` lists the firm's market value at each valuation time."""
    schedule = cfg.schedule()
    claim = cfg.claim()
    times = cfg.valuation_times_years or schedule.dates[:schedule.dates.index(claim.maturity)]
    if cfg.v_prime and len(cfg.v_prime) != len(times):
        raise ValidationError("v_prime must list one value per valuation time")
    header = ("rho", "t", "at_report_date", "v_prime", "debt", "equity", "spread")
    rows = []
    for rho in _rho_values(args, cfg):
        params = cfg.model_params(rho)
        for i, t in enumerate(times):
            if cfg.v_prime:
                ctx = PricingContext.from_market_value(params, schedule, t, cfg.v_prime[i])
            else:
                t_k = schedule.last_report(t)
                v_k = float(firm_value(params, t_k, 0.0))
                ctx = PricingContext(params, schedule, t, v_k, 0.0)
            debt = debt_price_closed_form(ctx, claim)
            equity = equity_price_closed_form(ctx, claim)
            spread = credit_spread(ctx, claim) if debt > 0 else math.nan
            rows.append((rho, float(t), ctx.at_report_date, ctx.v_prime, debt, equity, spread))
    _print_table(header, rows, stream)
    out = _out_dir(args)
    if out is not None:
        write_table(out / "price.csv", header, rows)
    return EXIT_OK


def cmd_simulate(args, cfg, stream):
    params = cfg.model_params()
    schedule = cfg.schedule()
    claim = cfg.claim()
    n_paths = args.paths if args.paths is not None else cfg.n_paths
    seed = args.seed if args.seed is not None else cfg.seed
    step = cfg.grid_step_years
    n_steps = int(math.ceil(claim.maturity / step - 1e-9))
    grid = np.union1d(np.minimum(np.arange(n_steps + 1) * step, claim.maturity),
                      [d for d in schedule.dates if d <= claim.maturity])
    paths = sample_paths(params, schedule, grid, n_paths, "P", seed)

    disc_z = paths.z * np.exp(params.r * grid)
    summary = []
    for j, t in enumerate(grid):
        se = float(disc_z[:, j].std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        summary.append((float(t), float(paths.v[:, j].mean()), float(paths.v_filtered[:, j].mean()),
                        float(disc_z[:, j].mean()), se))
    sample = [(float(t), float(paths.w[0, j]), float(paths.w_prime[0, j]), float(paths.v[0, j]),
               float(paths.v_filtered[0, j]), float(paths.z[0, j])) for j, t in enumerate(grid)]

    obs_times = cfg.observation_times_years or tuple(float(t) for t in grid if t < claim.maturity)
    market = generate_synthetic_market(params, schedule, claim, obs_times, cfg.noise_rel_sd, seed)

    out = _out_dir(args) or Path(".")
    write_table(out / "paths_summary.csv",
                ("t", "mean_v", "mean_v_filtered", "mean_z_disc", "se_z_disc"), summary)
    write_table(out / "sample_path.csv", ("t", "w", "w_prime", "v", "v_filtered", "z"), sample)
    write_observations(out / "observations.csv", market.observations)
    print(f"simulated {n_paths} paths on {grid.size} grid points (seed {seed})", file=stream)
    print(f"wrote {out / 'paths_summary.csv'}, {out / 'sample_path.csv'}, "
          f"{out / 'observations.csv'}", file=stream)
    return EXIT_OK


def _calibrate_file(args, cfg, stream):
    if args.obs is None:
        raise ValidationError("--obs is required")
    cfg.require("r_per_year")
    schedule = cfg.schedule()
    observations = read_observations(args.obs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = calibrate(observations, cfg.r_per_year, schedule)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return observations, schedule, result


def cmd_calibrate(args, cfg, stream):
    observations, _, result = _calibrate_file(args, cfg, stream)
    rho = "unidentified" if result.rho_hat is None else repr(result.rho_hat)
    print(f"sigma_hat,{result.sigma_hat!r}", file=stream)
    print(f"rho_hat,{rho}", file=stream)
    for o, res in zip(observations, result.residuals):
        print(f"residual,{o.t!r},{res!r}", file=stream)
    for key in sorted(result.bracket_diagnostics):
        print(f"diagnostic,{key},{result.bracket_diagnostics[key]}", file=stream)
    out = _out_dir(args)
    if out is not None:
        payload = {
            "sigma_hat": result.sigma_hat,
            "rho_hat": result.rho_hat,
            "rho_identified": result.rho_identified,
            "residuals": [None if math.isnan(x) else x for x in result.residuals],
            "observation_times": [o.t for o in observations],
            "diagnostics": result.bracket_diagnostics,
        }
        (out / "calibration.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_decompose(args, cfg, stream):
    observations, schedule, result = _calibrate_file(args, cfg, stream)
    header = ("t", "at_report_date", "total_spread", "default_component", "transparency_component")
    rows = []
    for o in observations:
        d = decompose_spread(o, result.sigma_hat, result.rho_hat, cfg.r_per_year, schedule)
        rows.append((o.t, o.at_report_date, d.total, d.default_component, d.transparency_component))
    _print_table(header, rows, stream)
    out = _out_dir(args)
    if out is not None:
        write_table(out / "decomposition.csv", header, rows)
    return EXIT_OK


COMMANDS = {
    "price": cmd_price,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "decompose": cmd_decompose,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hybridmerton", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value run configuration")
        p.add_argument("--obs", help="observation CSV (calibrate, decompose)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--rho-sweep", help="comma-separated rho values (price)")
    return parser


def main(argv=None, stream=None):
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](args, cfg, stream)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
