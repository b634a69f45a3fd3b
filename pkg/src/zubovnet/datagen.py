"""Labelled datasets from batches of integral evaluations.

Each sampled initial state contributes its own label; every converged
trajectory also contributes ``k_extra`` points taken where the accumulated
integral crosses evenly spaced fractions of its final value.  Along a
trajectory the remaining integral is ``I - z(t)``, so those points are labelled
``tanh(alpha * (I - z(t_k)))`` without further integration.
"""

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import NamedTuple

import numpy as np

from .dynsys import Region, sample_point
from .odeint import integrate_chunk
from .parallel import pmap
from .zubov import Verdict, compute_I

FORMAT_TAG = "zubovnet-dataset v1"


class DatasetFormatError(ValueError):
    def __init__(self, msg, lineno=None):
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)
        self.lineno = lineno


class DataPoint(NamedTuple):
    x: np.ndarray
    v: float


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.v = np.asarray(self.v, dtype=float).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.v.shape[0]:
            raise ValueError("X must be (n_points, dim) with one label per row")

    def __len__(self):
        return self.v.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X) and np.array_equal(self.v, other.v)
                and self.meta == other.meta)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def points(self):
        return [DataPoint(x, float(v)) for x, v in zip(self.X, self.v)]


def z_crossing(sys, w, t_prev, s_prev, target, cfg, t_next):
    """Augmented state where z first reaches ``target`` after ``(t_prev, s_prev)``.

    Newton iteration on the elapsed time; each iterate re-integrates from the
    bracketing solver point, and dz/dt = W supplies the derivative.
    """
    z0 = s_prev[-1]
    span = t_next - t_prev
    if target <= z0:
        return t_prev, s_prev.copy()
    tau = span * 0.5
    state = s_prev
    for _ in range(30):
        ch = integrate_chunk(sys, w, s_prev, t_prev, tau, cfg)
        state = ch.final
        g = state[-1] - target
        if abs(g) <= 1e-13 * max(1.0, abs(target)):
            break
        rate = ch.slope if ch.slope > 0 else (state[-1] - z0) / tau
        if not rate > 0:
            break
        tau = min(max(tau - g / rate, 1e-3 * tau), 2 * span)
    return t_prev + tau, state


def trajectory_points(sys, w, cfg, x0, k_extra, label_space="V"):
    """(verdict, X rows, labels) contributed by one initial state."""
    out = compute_I(sys, w, x0, cfg)
    if out.verdict is Verdict.INCONCLUSIVE:
        return out.verdict, np.zeros((0, sys.dim)), np.zeros(0)
    if out.verdict is Verdict.EXCEEDED:
        label = 1.0 if label_space == "V" else cfg.M
        return out.verdict, x0[None, :], np.array([label])
    I = out.z_final
    rows = [x0]
    remaining = [I]
    if I > 0:
        for q in range(1, k_extra + 1):
            target = q / (k_extra + 1) * I
            j = int(np.searchsorted(out.z, target, side="left"))
            j = min(max(j, 1), len(out.z) - 1)
            s_prev = np.append(out.x[j - 1], out.z[j - 1])
            _, s = z_crossing(sys, w, out.t[j - 1], s_prev, target, cfg.solver, out.t[j])
            rows.append(s[:-1])
            remaining.append(I - s[-1])
    remaining = np.array(remaining)
    labels = np.tanh(cfg.alpha * remaining) if label_space == "V" else remaining
    return out.verdict, np.array(rows), labels


def _task(index, sys, w, cfg, region, seed, k_extra, label_space):
    x0 = sample_point(region, seed, index)
    return trajectory_points(sys, w, cfg, x0, k_extra, label_space)


def generate_dataset(sys, w, cfg, region, n_traj, k_extra, seed, workers=1, label_space="V"):
    if n_traj < 1 or k_extra < 0:
        raise ValueError("need n_traj >= 1 and k_extra >= 0")
    if region.dim != sys.dim:
        raise ValueError(f"region has dimension {region.dim}, system has {sys.dim}")
    if label_space not in ("V", "I"):
        raise ValueError("label_space must be 'V' or 'I'")
    task = partial(_task, sys=sys, w=w, cfg=cfg, region=region, seed=seed, k_extra=k_extra,
                   label_space=label_space)
    results = pmap(task, range(n_traj), workers)
    counts = {v: 0 for v in Verdict}
    Xs, ys = [], []
    for verdict, X, y in results:
        counts[verdict] += 1
        Xs.append(X)
        ys.append(y)
    meta = {
        "system": sys.name,
        "w": w.describe(),
        "alpha": float(cfg.alpha),
        "M": float(cfg.M),
        "delta_I": float(cfg.delta_I),
        "dt_chunk": float(cfg.dt_chunk),
        "t_max": float(cfg.t_max),
        "rel_tol": float(cfg.solver.rel_tol),
        "abs_tol": float(cfg.solver.abs_tol),
        "seed": int(seed),
        "region": region.describe(),
        "n_traj": int(n_traj),
        "k_extra": int(k_extra),
        "n_converged": counts[Verdict.CONVERGED],
        "n_exceeded": counts[Verdict.EXCEEDED],
        "n_inconclusive": counts[Verdict.INCONCLUSIVE],
        "label_space": label_space,
    }
    return Dataset(np.concatenate(Xs) if Xs else np.zeros((0, sys.dim)),
                   np.concatenate(ys) if ys else np.zeros(0), meta)


def config_from_meta(meta, base=None):
    """Rebuild the integration settings recorded in a dataset header."""
    from .zubov import ZubovConfig

    base = base or ZubovConfig()
    return replace(base, alpha=meta["alpha"], M=meta["M"], delta_I=meta["delta_I"],
                   dt_chunk=meta.get("dt_chunk", base.dt_chunk),
                   t_max=meta.get("t_max", base.t_max),
                   solver=replace(base.solver, rel_tol=meta.get("rel_tol", base.solver.rel_tol),
                                  abs_tol=meta.get("abs_tol", base.solver.abs_tol)))


# ------------------------------------------------------------------ file I/O


def _fmt(v):
    return format(float(v), ".17g")


def _meta_value(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_dataset(d, path):
    """Plain-text dataset: ``# key=value`` header lines, then rows x_1,...,x_n,v."""
    with open(path, "w") as fh:
        fh.write(f"# {FORMAT_TAG}\n")
        fh.write(f"# dim={d.dim}\n")
        fh.write(f"# n_points={len(d)}\n")
        for key, value in d.meta.items():
            if key in ("dim", "n_points"):
                continue
            if isinstance(value, float):
                value = repr(value)
            text = str(value)
            if "\n" in text or "=" in key:
                raise ValueError(f"meta entry {key!r} cannot be written on one header line")
            fh.write(f"# {key}={text}\n")
        for x, v in zip(d.X, d.v):
            fh.write(",".join(_fmt(c) for c in x) + "," + _fmt(v) + "\n")


def read_dataset(path):
    meta = {}
    dim = None
    n_points = None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                if rows:
                    raise DatasetFormatError("header line after data rows", lineno)
                body = line[1:].strip()
                if lineno == 1:
                    if body != FORMAT_TAG:
                        raise DatasetFormatError(f"expected '# {FORMAT_TAG}'", lineno)
                    continue
                key, sep, value = body.partition("=")
                if not sep:
                    raise DatasetFormatError(f"header is not key=value: {body!r}", lineno)
                if key == "dim":
                    dim = int(value)
                elif key == "n_points":
                    n_points = int(value)
                else:
                    meta[key] = _meta_value(value)
                continue
            if lineno == 1:
                raise DatasetFormatError(f"expected '# {FORMAT_TAG}'", lineno)
            if dim is None:
                raise DatasetFormatError("data row before '# dim=' header", lineno)
            cells = line.split(",")
            if len(cells) != dim + 1:
                raise DatasetFormatError(f"expected {dim + 1} columns, got {len(cells)}", lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DatasetFormatError(f"bad number ({exc})", lineno) from None
    if dim is None:
        raise DatasetFormatError("missing '# dim=' header")
    if n_points is not None and n_points != len(rows):
        raise DatasetFormatError(f"header announces {n_points} rows, file has {len(rows)}")
    data = np.array(rows, dtype=float).reshape(len(rows), dim + 1)
    return Dataset(data[:, :dim], data[:, dim], meta)


def label_histogram(d, bins):
    if bins < 1:
        raise ValueError("bins must be at least 1")
    counts, edges = np.histogram(d.v, bins=bins, range=(0.0, 1.0))
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def split_count(d):
    """Expected size: n_traj anchors minus inconclusive, plus k_extra per converged run."""
    m = d.meta
    return m["n_traj"] - m["n_inconclusive"] + m["k_extra"] * m["n_converged"]


__all__ = ["DataPoint", "Dataset", "DatasetFormatError", "Region", "generate_dataset",
           "label_histogram", "read_dataset", "write_dataset", "trajectory_points",
           "z_crossing", "config_from_meta", "split_count"]
