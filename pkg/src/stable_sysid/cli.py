"""``sysid`` command-line front end.

Exit codes: 0 success, 2 validation FAIL, 3 solver failure, 4 IO or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .dataio import InsufficientData, NonContiguousTime, ParseError, load_csv, load_dataset, with_scale
from .dataio import DataScale
from .fit import (
    ConfigError,
    FitConfig,
    _jsonable,
    cmd_fit,
    data_box,
    surrogate_dataset,
    validate_model,
)
from .model import DegreeOverflow, DimensionMismatch, load_model
from .objectives import ModeConflict
from .simulate import NoConvergence, export_trajectory, j_perf, simulate

EXIT_OK, EXIT_FAIL, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class CommandError(RuntimeError):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load_model(config):
    if not config.model:
        raise ConfigError("config has no model path")
    try:
        params, extra = load_model(config.model)
    except OSError as err:
        raise ConfigError(f"cannot read model {config.model}: {err}") from None
    scale = DataScale.from_dict(extra) if "scale.y.gain" in extra else None
    return params, extra, scale


def _model_data(config, params, extra, scale):
    """Data file in the model's coordinates, embedded with the model's lags."""
    lag = int(extra.get("lag", config.lag))
    input_lag = int(extra.get("input_lag", config.input_lag))
    try:
        if lag == 0:
            raw = load_dataset(config.data)
            u_raw, y_raw, x = raw.u, raw.y, raw.x
        else:
            u_raw, y_raw = load_csv(config.data)
            x = None
    except OSError as err:
        raise ConfigError(f"cannot read data {config.data}: {err}") from None
    data = surrogate_dataset(u_raw, y_raw, lag, input_lag, x)
    b = params.basis
    if (data.n, data.m, data.p) != (b.n, b.m, b.p):
        raise DimensionMismatch(f"data gives (n, m, p) = {(data.n, data.m, data.p)}, model has {(b.n, b.m, b.p)}")
    start = 0 if lag == 0 else max(lag, input_lag) - 1
    scaled = with_scale(data, scale) if scale is not None else data
    return scaled, u_raw[start:], y_raw[start:]


def run_fit(config, out_dir):
    report = cmd_fit(config, out_dir)
    summary = dict(status=report.status, certificate=report.certificate_label,
                   slack_sum=report.slack_sum, train=report.train, validation=report.validation)
    print(json.dumps(_jsonable(summary), indent=2))
    if not report.ok:
        raise CommandError(f"solver finished with status {report.status}: {report.message}", EXIT_SOLVER)
    return EXIT_OK


def run_simulate(config, out_dir):
    params, extra, scale = _load_model(config)
    data, u_raw, y_raw = _model_data(config, params, extra, scale)
    sim = simulate(params, data.x[0], data.u)
    y_hat = data.scale.y.invert(sim.y) if scale is not None else sim.y
    score = j_perf(y_hat, y_raw)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        export_trajectory(os.path.join(out_dir, "trajectory.csv"), u_raw, y_raw, y_hat)
    print(json.dumps({"J_perf": score, "steps": int(data.T), "max_newton_residual": sim.max_residual}))
    return EXIT_OK


def _parse_box(config, n_dims):
    lo = np.array(config.box_lo.split(), dtype=float)
    hi = np.array(config.box_hi.split(), dtype=float)
    if lo.size == 1:
        lo = np.full(n_dims, lo[0])
    if hi.size == 1:
        hi = np.full(n_dims, hi[0])
    if lo.size != n_dims or hi.size != n_dims or np.any(hi < lo):
        raise ConfigError(f"box_lo / box_hi need {n_dims} values with lo <= hi")
    return lo, hi


def run_validate(config, out_dir):
    params, extra, scale = _load_model(config)
    d = params.basis.n + params.basis.m
    data_points = None
    if config.box_lo or config.box_hi:
        box = _parse_box(config, d)
    elif config.data:
        data, _, _ = _model_data(config, params, extra, scale)
        box = data_box(data, config.box_margin)
        data_points = np.hstack([data.x, data.u])
    else:
        box = (-np.ones(d), np.ones(d))
    rep = validate_model(params, box, config.samples, data_points, config.probe_pairs,
                         config.probe_steps, seed=config.seed)
    out = rep.to_dict()
    out.update(seed=config.seed, config_hash=config.digest(), version=__version__)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "validate_report.json"), "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
    print(f"{out['verdict']}: worst min eig {rep.certificate.worst_min_eig:.3e} over "
          f"{rep.certificate.num_samples} samples; {rep.probe_failures}/{len(rep.probes)} probes failed")
    return EXIT_OK if rep.passed else EXIT_FAIL


def run_benchmark(config, out_dir):
    from .benchmark import SUITES, format_table, run_suite, write_suite

    if config.suite not in SUITES:
        raise ConfigError(f"unknown suite {config.suite!r}; choose from {', '.join(SUITES)}")
    report = run_suite(config.suite, config.seed)
    if out_dir:
        write_suite(report, out_dir, config.digest())
    print(format_table(report["cells"]))
    print(f"{report['suite']}: {'PASS' if report['passed'] else 'FAIL'} ({report['message']})")
    return EXIT_OK if report["passed"] else EXIT_FAIL


COMMANDS = {"fit": run_fit, "simulate": run_simulate, "validate": run_validate, "benchmark": run_benchmark}

# errors that mean the inputs are unusable rather than the method failing
_INPUT_ERRORS = (ConfigError, OSError, ParseError, NonContiguousTime, InsufficientData,
                 DimensionMismatch, DegreeOverflow, ModeConflict)


def build_parser():
    ap = argparse.ArgumentParser(prog="sysid", description="Stable implicit polynomial system identification.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value file with FitConfig fields")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default=None, help="directory for models, reports and tables")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = FitConfig.from_file(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        return COMMANDS[args.command](config, args.out)
    except CommandError as err:
        print(f"sysid {args.command}: {err}", file=sys.stderr)
        return err.code
    except _INPUT_ERRORS as err:
        print(f"sysid {args.command}: {type(err).__module__}.{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_IO
    except NoConvergence as err:
        print(f"sysid {args.command}: simulation failed: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
