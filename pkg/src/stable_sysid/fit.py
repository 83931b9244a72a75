"""End-to-end identification: data, surrogate states, SDP fit, evaluation."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .constraints import find_metric, rescale_for_metric, validate_certificate
from .dataio import (
    DataSet,
    embed_output_history,
    load_csv,
    load_dataset,
    normalize,
    subsample_transitions,
    with_scale,
)
from .linalg import NotConcave, NotPositiveDefinite
from .model import BasisSpec, DimensionMismatch
from .objectives import (
    ConstraintMode,
    SingularE,
    assemble_fit_problem,
    eval_lifted_bound,
    eval_local_rie,
    j_ee,
    linearized_sim_error,
)
from .sdp import SolverOptions, Status, solve
from .simulate import NoConvergence, simulate, j_perf


class ConfigError(ValueError):
    pass


@dataclass
class FitConfig:
    """Flat key-value configuration shared by all commands.

    ``lag = 0`` means the data file already carries surrogate state columns
    ``x1..xn``; otherwise states are built from ``lag`` past outputs.
    """

    data: str = ""
    validation_data: str = ""
    model: str = ""
    lag: int = 2
    input_lag: int = 1
    deg_e: int = 1
    deg_fx: int = 1
    deg_fu: int = 1
    deg_gx: int = 1
    deg_gu: int = 1
    joint_u: bool = False
    objective_mode: str = "LocalRIE"
    constraint_mode: str = "Pointwise"
    mu: float = 1e-3
    rho_reg: float = 1e-8
    normalize: bool = True
    stride: int = 1
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 200
    seed: int = 0
    samples: int = 10000
    box_margin: float = 0.1
    box_lo: str = ""
    box_hi: str = ""
    probe_pairs: int = 20
    probe_steps: int = 200
    suite: str = "recovery"

    @classmethod
    def from_text(cls, text):
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in kinds:
                raise ConfigError(f"line {lineno}: unknown or malformed entry {raw.strip()!r}")
            values[key] = _parse_value(kinds[key], value, key)
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def basis(self, n, m, p):
        return BasisSpec(n=n, m=m, p=p, deg_e=self.deg_e, deg_fx=self.deg_fx, deg_fu=self.deg_fu,
                         deg_gx=self.deg_gx, deg_gu=self.deg_gu, joint_u=self.joint_u)

    def solver_options(self):
        return SolverOptions(feas_tol=self.feas_tol, gap_tol=self.gap_tol, max_iter=self.max_iter)


def _parse_value(kind, value, key):
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return value


# ---------------------------------------------------------------------------
# data preparation


def surrogate_dataset(u, y, lag, input_lag=1, x=None):
    if lag == 0:
        if x is None:
            raise ConfigError("lag = 0 needs state columns x1..xn in the data file")
        return DataSet(u=u, y=y, x=x)
    return embed_output_history(y, u, lag, input_lag)


def load_training_data(config):
    if not config.data:
        raise ConfigError("config has no data path")
    try:
        if config.lag == 0:
            raw = load_dataset(config.data)
            return surrogate_dataset(raw.u, raw.y, 0, x=raw.x)
        u, y = load_csv(config.data)
    except OSError as err:
        raise ConfigError(f"cannot read data {config.data}: {err}") from None
    return surrogate_dataset(u, y, config.lag, config.input_lag)


# ---------------------------------------------------------------------------
# evaluation


def evaluate_functionals(params, data):
    """All fidelity measures of a model on a dataset, in the data's coordinates.

    Bounds that are infinite because contraction fails on the data are
    reported as ``inf``; simulation failures give ``nan``.
    """
    out = {"J_EE": j_ee(params, data)}
    for key, fn in (("J0_V", eval_local_rie), ("J0_L", eval_lifted_bound), ("J0", linearized_sim_error)):
        try:
            out[key] = fn(params, data)
        except (NotConcave, NotPositiveDefinite):
            out[key] = float("inf")
        except SingularE:
            out[key] = float("nan")
    try:
        sim = simulate(params, data.x[0], data.u)
        out["J_se"] = float(np.sum((sim.y - data.y) ** 2))
        y_raw = data.scale.y.invert(sim.y)
        out["J_perf"] = j_perf(y_raw, data.scale.y.invert(data.y))
    except NoConvergence:
        out["J_se"] = out["J_perf"] = float("nan")
    return out


def data_box(data, margin=0.1):
    """Bounding box of ``(x, u)`` samples enlarged by ``margin`` of its width."""
    pts = np.hstack([data.x, data.u])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = margin * np.maximum(hi - lo, 1e-6)
    return lo - pad, hi + pad


@dataclass
class FitReport:
    params: object
    status: str
    objective_mode: str
    constraint_mode: str
    train: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    slack_sum: float = float("nan")
    certificate: dict = field(default_factory=dict)
    certificate_label: str = ""
    solver: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    version: str = __version__
    scale: object = None
    message: str = ""

    @property
    def ok(self):
        return self.status == Status.OPTIMAL.name

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "status", "objective_mode", "constraint_mode", "train", "validation", "slack_sum",
            "certificate", "certificate_label", "solver", "timings", "config_hash", "seed",
            "version", "message")}
        if self.params is not None:
            d["theta"] = self.params.theta.tolist()
            d["P"] = self.params.P.tolist()
            d["mu"] = self.params.mu
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def fit_dataset(config, data, validation=None):
    """Fit on a dataset that already carries surrogate states.

    ``validation`` is a raw (un-normalized) dataset with states, or ``None``.
    """
    timings = {}
    t0 = time.perf_counter()
    scaled = normalize(data, warn=True) if config.normalize else data
    basis = config.basis(data.n, data.m, data.p)
    idx = subsample_transitions(data, config.stride)
    fp = assemble_fit_problem(basis, scaled, config.objective_mode, config.constraint_mode,
                              mu=config.mu, rho_reg=config.rho_reg, indices=idx)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sol = solve(fp.problem, config.solver_options())
    timings["solve"] = time.perf_counter() - t0
    report = FitReport(
        params=None, status=sol.status.name, objective_mode=fp.objective_mode.value,
        constraint_mode=fp.constraint_mode.value, config_hash=config.digest(), seed=config.seed,
        scale=scaled.scale, message=sol.message,
        solver=dict(iterations=sol.iterations, gap=sol.gap, primal_infeasibility=sol.primal_infeasibility,
                    dual_infeasibility=sol.dual_infeasibility, num_vars=fp.problem.num_vars,
                    num_blocks=len(fp.problem.blocks), worst_block_eig=float(np.min(sol.block_min_eig))
                    if sol.block_min_eig.size else float("nan")),
        timings=timings,
    )
    if sol.status is not Status.OPTIMAL:
        return report
    params = fp.params(sol.z)
    if fp.slack.size:
        report.slack_sum = float(np.sum(sol.z[fp.slack]))

    t0 = time.perf_counter()
    fitted = params
    if fp.constraint_mode in (ConstraintMode.WELL_POSED, ConstraintMode.NONE):
        # no metric came out of the fit; search one for the validation step,
        # re-expressing e and f first since the fit leaves their scale arbitrary
        opts = {"opts": config.solver_options()}
        rescaled, M = rescale_for_metric(params, scaled.x, scaled.u, solver_opts=opts)
        if rescaled is not None:
            params = rescaled
            report.solver["metric_transform"] = M.tolist()
        else:
            P, margin = find_metric(params, scaled.x, scaled.u, opts)
            if P is not None:
                params.P = P
            report.solver["metric_margin"] = margin
    report.params = params
    report.train = evaluate_functionals(params, scaled)
    # equation error is reported at the scale the fit chose
    report.train["J_EE"] = j_ee(fitted, scaled)
    if validation is not None:
        vdata = with_scale(validation, scaled.scale)
        report.validation = evaluate_functionals(params, vdata)
        report.validation["J_EE"] = j_ee(fitted, vdata)
    timings["evaluate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    box = data_box(scaled, config.box_margin)
    cert = validate_certificate(params, config.samples, box, np.hstack([scaled.x, scaled.u]),
                                seed=config.seed)
    report.certificate = cert.to_dict()
    if fp.constraint_mode in (ConstraintMode.SOS, ConstraintMode.STATE_AFFINE):
        report.certificate_label = "certified"
    elif cert.passed:
        report.certificate_label = "empirically contracting"
    else:
        report.certificate_label = "not contracting"
    timings["validate"] = time.perf_counter() - t0
    return report


def cmd_fit(config, out_dir=None):
    """Load, fit, evaluate and (optionally) persist a model and its report."""
    data = load_training_data(config)
    validation = None
    if config.validation_data:
        try:
            if config.lag == 0:
                raw = load_dataset(config.validation_data)
                validation = surrogate_dataset(raw.u, raw.y, 0, x=raw.x)
            else:
                u, y = load_csv(config.validation_data)
                validation = surrogate_dataset(u, y, config.lag, config.input_lag)
        except OSError as err:
            raise ConfigError(f"cannot read validation data: {err}") from None
    if validation is not None and (validation.n, validation.m, validation.p) != (data.n, data.m, data.p):
        raise DimensionMismatch("validation data dimensions differ from training data")
    report = fit_dataset(config, data, validation)
    if out_dir is not None:
        write_fit_outputs(out_dir, config, report)
    return report


def model_extras(config, scale):
    extra = {"lag": str(config.lag), "input_lag": str(config.input_lag)}
    if scale is not None:
        extra.update(scale.to_dict())
    return extra


def write_fit_outputs(out_dir, config, report):
    import os

    from .model import save_model

    os.makedirs(out_dir, exist_ok=True)
    if report.params is not None:
        save_model(os.path.join(out_dir, "model.txt"), report.params, model_extras(config, report.scale))
    with open(os.path.join(out_dir, "fit_report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    certificate: object
    probes: list
    probe_failures: int
    tail_tol: float
    slack: float

    @property
    def passed(self):
        return self.certificate.passed and self.probe_failures == 0

    def to_dict(self):
        return _jsonable(dict(
            verdict="PASS" if self.passed else "FAIL",
            certificate=self.certificate.to_dict(),
            probe_failures=self.probe_failures,
            tail_tol=self.tail_tol,
            storage_slack=self.slack,
            probes=self.probes,
        ))


def validate_model(params, box, samples=10000, data_points=None, probe_pairs=20, probe_steps=200,
                   seed=0, tail_tol=1e-6, slack=0.05):
    """Sampled contraction check plus incremental-stability probes.

    Probe initial states are drawn uniformly from the state part of ``box``
    and the shared input uniformly from its input part. A probe fails when a
    simulation diverges, the output-gap sum exceeds the storage bound by more
    than ``slack``, or the last tenth of the gap series carries more than
    ``tail_tol`` of the total.
    """
    from .simulate import stability_probe

    cert = validate_certificate(params, samples, box, data_points, seed=seed)
    n, m = params.basis.n, params.basis.m
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    rng = np.random.default_rng(seed)
    u = rng.uniform(lo[n:], hi[n:], size=(probe_steps + 1, m))
    probes, failures = [], 0
    for _ in range(probe_pairs):
        x1, x2 = rng.uniform(lo[:n], hi[:n], size=(2, n))
        try:
            pr = stability_probe(params, x1, x2, u)
            total, tail = pr.output_gap_sum, pr.tail_fraction(0.1)
            ok = bool(np.isfinite(total) and pr.bound_holds(slack) and tail <= tail_tol)
            probes.append(dict(output_gap_sum=total, storage_bound=pr.storage_bound,
                               tail_fraction=tail, passed=ok))
        except NoConvergence as err:
            ok = False
            probes.append(dict(error=str(err), passed=False))
        failures += not ok
    return ValidationReport(cert, probes, failures, tail_tol, slack)
