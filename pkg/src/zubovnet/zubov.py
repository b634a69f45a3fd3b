"""Integral-form solution of Zubov's equation, evaluated pointwise.

``compute_I`` integrates the augmented system chunk by chunk until the
accumulated integral either passes the divergence threshold ``M`` or its
growth rate drops below ``delta_I``.  ``eval_V`` maps the result through
``tanh(alpha * I)``.
"""

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .dynsys import eval_w
from .odeint import BlowUpError, SolverConfig, integrate_chunk
from .parallel import pmap

# alpha * M; 1 - tanh(20) is below double-precision resolution of 1
BOUNDARY_LAYER_SCALE = 20.0
CALIBRATION_BUCKET = 50.0


class InconclusiveError(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    CONVERGED = "converged"
    EXCEEDED = "exceeded"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ZubovConfig:
    delta_I: float = 1e-6
    M: float = 200.0
    alpha: float = 0.1
    dt_chunk: float = 1.0
    t_max: float = 500.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    max_samples: int | None = 2000

    def __post_init__(self):
        for name in ("delta_I", "M", "alpha", "dt_chunk", "t_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_max < self.dt_chunk:
            raise ValueError("t_max must be at least dt_chunk")

    @classmethod
    def for_threshold(cls, M, **kwargs):
        """Config whose scale factor puts the boundary layer at I = M."""
        return cls(M=M, alpha=BOUNDARY_LAYER_SCALE / M, **kwargs)


@dataclass
class IValueOutcome:
    """Result of one integral evaluation from ``x0``.

    ``t``, ``x`` and ``z`` are solver points along the trajectory (thinned to
    ``max_samples``); ``z`` is exact at every stored point.
    """

    x0: np.ndarray
    verdict: Verdict
    z_final: float
    elapsed: float
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    blow_up: bool = False
    steps: int = 0

    @property
    def converged(self):
        return self.verdict is Verdict.CONVERGED

    @property
    def I(self):  # noqa: E743
        """The integral for a converged run, ``inf`` when exceeded, ``nan`` otherwise."""
        if self.verdict is Verdict.CONVERGED:
            return self.z_final
        if self.verdict is Verdict.EXCEEDED:
            return math.inf
        return math.nan


def _thin(n, max_samples):
    if max_samples is None or n <= max_samples:
        return slice(None)
    return np.unique(np.round(np.linspace(0, n - 1, max_samples)).astype(int))


def compute_I(sys, w, x0, cfg=ZubovConfig()):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise ValueError(f"x0 must have length {sys.dim}")
    s = np.append(x0, 0.0)
    t = 0.0
    h = cfg.solver.h_init
    ts = [np.zeros(1)]
    ss = [s[None, :]]
    blow_up = False
    steps = 0
    while True:
        try:
            ch = integrate_chunk(sys, w, s, t, cfg.dt_chunk, cfg.solver, h0=h, z_stop=cfg.M)
        except BlowUpError as exc:
            ch = exc.chunk
            blow_up = True
        ts.append(ch.t[1:])
        ss.append(ch.states[1:])
        steps += ch.steps_accepted
        t = ch.t[-1]
        s = ch.final
        h = ch.h_next
        if blow_up or s[-1] > cfg.M:
            verdict = Verdict.EXCEEDED
            break
        if ch.slope < cfg.delta_I:
            verdict = Verdict.CONVERGED
            break
        if t >= cfg.t_max * (1 - 1e-12):
            verdict = Verdict.INCONCLUSIVE
            break
    t_all = np.concatenate(ts)
    s_all = np.concatenate(ss)
    keep = _thin(len(t_all), cfg.max_samples)
    t_all = t_all[keep]
    s_all = s_all[keep]
    # the integrand is nonnegative; rounding in the quadrature weights is not
    return IValueOutcome(x0=x0, verdict=verdict, z_final=max(0.0, float(s[-1])), elapsed=float(t),
                         t=t_all, x=s_all[:, :-1], z=s_all[:, -1], blow_up=blow_up,
                         steps=steps)


def _compute_one(x0, sys, w, cfg):
    return compute_I(sys, w, x0, cfg)


def compute_many(sys, w, X, cfg=ZubovConfig(), workers=1):
    """compute_I over the rows of ``X``; output order matches input order."""
    return pmap(partial(_compute_one, sys=sys, w=w, cfg=cfg), list(np.asarray(X, dtype=float)),
                workers)


def eval_V(outcome, alpha):
    if outcome.verdict is Verdict.CONVERGED:
        return math.tanh(alpha * outcome.z_final)
    if outcome.verdict is Verdict.EXCEEDED:
        return 1.0
    raise InconclusiveError(
        f"cannot classify x0={outcome.x0} within t_max (stopped at t={outcome.elapsed:g})")


def psi(v, w_val, alpha):
    if not 0.0 <= v <= 1.0:
        raise ValueError("v must lie in [0, 1]")
    return alpha * (1.0 + v) * w_val


@dataclass(frozen=True)
class Calibration:
    M: float
    alpha: float
    max_converged_I: float
    gap: float
    n_converged: int
    n_exceeded: int
    n_inconclusive: int

    def report(self):
        return (f"max converged I = {self.max_converged_I:.6g}; chosen M = {self.M:g} "
                f"(gap x{self.gap:.3g}); alpha = {self.alpha:.6g}; "
                f"{self.n_converged} converged, {self.n_exceeded} exceeded, "
                f"{self.n_inconclusive} inconclusive")


def calibrate(outcomes):
    """Pick M above the converged cluster of an I-value sample and alpha = 20/M.

    M is twice the largest converged I rounded up to a multiple of 50.
    """
    outcomes = list(outcomes)
    values = [o.z_final for o in outcomes if o.verdict is Verdict.CONVERGED]
    if not values:
        raise ValueError("calibration needs at least one converged outcome")
    top = max(values)
    M = CALIBRATION_BUCKET * max(1, math.ceil(2.0 * top / CALIBRATION_BUCKET))
    return Calibration(
        M=M, alpha=BOUNDARY_LAYER_SCALE / M, max_converged_I=top,
        gap=M / top if top > 0 else math.inf,
        n_converged=len(values),
        n_exceeded=sum(o.verdict is Verdict.EXCEEDED for o in outcomes),
        n_inconclusive=sum(o.verdict is Verdict.INCONCLUSIVE for o in outcomes))


def _fd_derivative(t, v):
    """Second-order centred differences on a non-uniform grid (interior points)."""
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return (-h2 / (h1 * (h1 + h2)) * v[:-2] + (h2 - h1) / (h1 * h2) * v[1:-1]
            + h1 / (h2 * (h1 + h2)) * v[2:])


def zubov_residual(sys, w, x0, cfg=ZubovConfig(), fd_step=1e-2, v_cap=1.0):
    """Max relative defect of dV/dt = -Psi (1 - V) along the trajectory from ``x0``.

    The trajectory is re-integrated with steps capped at ``fd_step``; only
    interior samples with V < ``v_cap`` are scored.
    """
    solver = replace(cfg.solver, h_max=min(fd_step, cfg.solver.h_max or math.inf),
                     h_init=min(cfg.solver.h_init, fd_step))
    out = compute_I(sys, w, x0, replace(cfg, solver=solver, max_samples=None))
    if not out.converged:
        raise ValueError(f"residual needs a converged trajectory, got {out.verdict.value}")
    I = out.z_final
    if I == 0.0:
        return 0.0
    alpha = cfg.alpha
    V = np.tanh(alpha * (I - out.z))
    dV = _fd_derivative(out.t, V)
    Vi = V[1:-1]
    W = np.array([eval_w(w, sys, x) for x in out.x[1:-1]])
    rhs = -alpha * (1.0 + Vi) * W * (1.0 - Vi)
    rel = np.abs(dV - rhs) / np.maximum(1e-8, np.abs(dV))
    mask = Vi < v_cap
    return float(rel[mask].max()) if mask.any() else 0.0


def write_ivalue_table(outcomes, path, M):
    """I-value plot data: exceeded samples carry the sentinel ``M`` and censored=1."""
    outcomes = list(outcomes)
    skipped = sum(o.verdict is Verdict.INCONCLUSIVE for o in outcomes)
    with open(path, "w", newline="") as fh:
        fh.write(f"# M={M!r}\n# inconclusive={skipped}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["sample_index", "I_or_censored", "censored"])
        for i, o in enumerate(outcomes):
            if o.verdict is Verdict.CONVERGED:
                wr.writerow([i, repr(o.z_final), 0])
            elif o.verdict is Verdict.EXCEEDED:
                wr.writerow([i, repr(float(M)), 1])


def read_ivalue_table(path):
    """Returns (indices, values, censored flags)."""
    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in list(csv.reader(lines))[1:]:
        rows.append((int(row[0]), float(row[1]), int(row[2])))
    if not rows:
        return np.zeros(0, int), np.zeros(0), np.zeros(0, int)
    idx, val, cen = zip(*rows)
    return np.array(idx), np.array(val), np.array(cen)
