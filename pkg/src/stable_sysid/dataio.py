"""Recorded input/output data, surrogate states and normalization."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    pass


class NonContiguousTime(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class RankDeficient(ValueError):
    pass


class ConstantChannel(UserWarning):
    pass


@dataclass
class ChannelScale:
    """Affine map ``normalized = (raw - offset) / gain`` per channel."""

    offset: np.ndarray
    gain: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, v):
        return (np.asarray(v, dtype=float) - self.offset) / self.gain

    def invert(self, v):
        return np.asarray(v, dtype=float) * self.gain + self.offset


@dataclass
class DataScale:
    u: ChannelScale
    y: ChannelScale
    x: ChannelScale
    constant_channels: list = field(default_factory=list)

    @classmethod
    def identity(cls, m, p, n):
        return cls(ChannelScale.identity(m), ChannelScale.identity(p), ChannelScale.identity(n))

    def to_dict(self):
        out = {}
        for name in ("u", "y", "x"):
            ch = getattr(self, name)
            out[f"scale.{name}.offset"] = " ".join(f"{v:.17g}" for v in ch.offset)
            out[f"scale.{name}.gain"] = " ".join(f"{v:.17g}" for v in ch.gain)
        return out

    @classmethod
    def from_dict(cls, d):
        chans = {}
        for name in ("u", "y", "x"):
            off = np.array(d.get(f"scale.{name}.offset", "").split(), dtype=float)
            gain = np.array(d.get(f"scale.{name}.gain", "").split(), dtype=float)
            chans[name] = ChannelScale(off, gain)
        return cls(**chans)


@dataclass
class DataSet:
    """Aligned sequences over ``t = 0..T``: ``u`` (T+1, m), ``y`` (T+1, p), ``x`` (T+1, n)."""

    u: np.ndarray
    y: np.ndarray
    x: np.ndarray = None
    scale: DataScale = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.u), -1)
        self.y = np.asarray(self.y, dtype=float).reshape(len(self.y), -1)
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError("u and y must have the same number of samples")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float).reshape(len(self.x), -1)
            if self.x.shape[0] != self.y.shape[0]:
                raise ValueError("x must have the same number of samples as y")
        for name in ("u", "y", "x"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        if self.scale is None:
            n = 0 if self.x is None else self.x.shape[1]
            self.scale = DataScale.identity(self.m, self.p, n)

    @property
    def T(self):
        return self.y.shape[0] - 1

    @property
    def m(self):
        return self.u.shape[1]

    @property
    def p(self):
        return self.y.shape[1]

    @property
    def n(self):
        return None if self.x is None else self.x.shape[1]

    def require_states(self):
        if self.x is None:
            raise ValueError("dataset has no surrogate states; embed or project first")


def load_csv(path):
    """Read ``t,u1..um,y1..yp`` rows; returns ``(u, y)`` arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not header or header[0] != "t":
        raise ParseError(f"{path}: first column must be 't'")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u") and h[1:].isdigit()]
    y_cols = [i for i, h in enumerate(header) if h.startswith("y") and h[1:].isdigit()]
    if not y_cols:
        raise ParseError(f"{path}: no output columns y1..yp")
    for cols, prefix in ((u_cols, "u"), (y_cols, "y")):
        names = [header[i] for i in cols]
        if names != [f"{prefix}{k + 1}" for k in range(len(cols))]:
            raise ParseError(f"{path}: columns {names} are not {prefix}1..{prefix}{len(cols)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as err:
        raise ParseError(f"{path}: {err}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ParseError(f"{path}: rows do not match header width {len(header)}")
    t = data[:, 0]
    if not np.array_equal(t, np.arange(t[0], t[0] + len(t))) or t[0] != int(t[0]):
        raise NonContiguousTime(f"{path}: time column must be consecutive integers")
    return data[:, u_cols].reshape(len(t), -1), data[:, y_cols].reshape(len(t), -1)


def save_csv(path, u, y, extra=None):
    """Write the ``t,u..,y..`` schema; ``extra`` maps column prefix to an array."""
    u = np.asarray(u, dtype=float).reshape(len(y), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    header = ["t"] + [f"u{i + 1}" for i in range(u.shape[1])] + [f"y{i + 1}" for i in range(y.shape[1])]
    cols = [u, y]
    for prefix, arr in (extra or {}).items():
        arr = np.asarray(arr, dtype=float).reshape(len(y), -1)
        header += [f"{prefix}{i + 1}" for i in range(arr.shape[1])]
        cols.append(arr)
    body = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in enumerate(body):
            w.writerow([t] + [repr(float(v)) for v in row])


def embed_output_history(y, u, lag, input_lag=1):
    """Surrogate states from output history.

    ``x(t) = [y(t); y(t-1); ...; y(t-lag+1)]`` and, for ``input_lag > 1``,
    the input is replaced by the stacked history ``[u(t); ...; u(t-input_lag+1)]``.
    The first ``max(lag, input_lag) - 1`` samples are dropped.
    """
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    u = np.asarray(u, dtype=float).reshape(len(y), -1)
    if lag < 1 or input_lag < 1:
        raise ValueError("lags must be >= 1")
    start = max(lag, input_lag) - 1
    if len(y) - start < 2:
        raise InsufficientData(f"{len(y)} samples are too few for lag {lag}")
    idx = np.arange(start, len(y))
    x = np.hstack([y[idx - k] for k in range(lag)])
    uu = np.hstack([u[idx - k] for k in range(input_lag)]) if u.shape[1] else u[idx]
    return DataSet(u=uu, y=y[idx], x=x)


@dataclass
class PodResult:
    basis: np.ndarray
    singular_values: np.ndarray
    energy_ratio: float

    def project(self, snapshots):
        return np.asarray(snapshots, dtype=float).T @ self.basis


def pod_project(snapshots, n):
    """Proper orthogonal decomposition of a snapshot matrix (columns = time).

    Returns the POD basis (top-``n`` left singular vectors), the surrogate
    state sequence ``x(t) = V' s(t)`` of shape ``(num_snapshots, n)``, and the
    captured energy fraction.
    """
    S = np.asarray(snapshots, dtype=float)
    if not np.all(np.isfinite(S)):
        raise ValueError("snapshot matrix has non-finite entries")
    if S.shape[1] < n:
        raise RankDeficient(f"need at least {n} snapshots")
    U, sv, _ = np.linalg.svd(S, full_matrices=False)
    if n > len(sv) or sv[n - 1] < 1e-12 * sv[0]:
        raise RankDeficient(f"sigma_{n} / sigma_1 below 1e-12")
    V = U[:, :n]
    energy = float(np.sum(sv[:n] ** 2) / np.sum(sv ** 2))
    pod = PodResult(V, sv, energy)
    return pod, pod.project(S)


def _channel_scale(arr, label, warn):
    offset = arr.mean(axis=0)
    rms = np.sqrt(np.mean((arr - offset) ** 2, axis=0))
    gain = np.ones_like(rms)
    flat = []
    for i, r in enumerate(rms):
        if r > 1e-12 * max(1.0, abs(offset[i])):
            gain[i] = r
        else:
            offset[i] = 0.0
            flat.append(f"{label}{i + 1}")
    if flat and warn:
        warnings.warn(f"constant channels left unscaled: {', '.join(flat)}", ConstantChannel)
    return ChannelScale(offset, gain), flat


def normalize(data, warn=True):
    """Map every channel to zero mean and unit RMS.

    Constant channels keep an identity scale and are listed in
    ``scale.constant_channels``.
    """
    su, fu = _channel_scale(data.u, "u", warn) if data.m else (ChannelScale.identity(0), [])
    sy, fy = _channel_scale(data.y, "y", warn)
    flat = fu + fy
    x = None
    sx = ChannelScale.identity(0)
    if data.x is not None:
        sx, fx = _channel_scale(data.x, "x", warn)
        flat += fx
        x = sx.apply(data.x)
    scale = DataScale(su, sy, sx, flat)
    return DataSet(u=su.apply(data.u) if data.m else data.u, y=sy.apply(data.y), x=x, scale=scale)


def with_scale(data, scale):
    """Express a raw dataset in the coordinates of an existing scale record."""
    x = None if data.x is None else scale.x.apply(data.x)
    u = scale.u.apply(data.u) if data.m else data.u
    return DataSet(u=u, y=scale.y.apply(data.y), x=x, scale=scale)


def denormalize(data):
    s = data.scale
    x = None if data.x is None else s.x.invert(data.x)
    u = s.u.invert(data.u) if data.m else data.u
    n = 0 if x is None else x.shape[1]
    return DataSet(u=u, y=s.y.invert(data.y), x=x, scale=DataScale.identity(data.m, data.p, n))


def subsample_transitions(data, stride):
    """Uniform-stride subset of time indices, returned as index array.

    The fitting problem uses transitions ``(t, t+1)``; a strided subset keeps
    every ``stride``-th one.
    """
    return np.arange(0, data.T + 1, max(1, int(stride)))


def save_dataset(path, data):
    """CSV with surrogate state columns ``x1..xn`` plus a ``.scale`` sidecar."""
    extra = {} if data.x is None else {"x": data.x}
    save_csv(path, data.u, data.y, extra)
    with open(str(path) + ".scale", "w") as fh:
        for k, v in data.scale.to_dict().items():
            fh.write(f"{k} = {v}\n")


def load_dataset(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    u, y = load_csv(path)
    x_cols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    x = None
    if x_cols:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x = raw[:, x_cols]
    scale = None
    try:
        with open(str(path) + ".scale") as fh:
            d = {}
            for line in fh:
                k, _, v = line.partition("=")
                if k.strip():
                    d[k.strip()] = v.strip()
        scale = DataScale.from_dict(d)
    except FileNotFoundError:
        pass
    return DataSet(u=u, y=y, x=x, scale=scale)
