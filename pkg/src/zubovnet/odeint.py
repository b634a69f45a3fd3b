"""Dormand-Prince 5(4) integration of the augmented system x' = f(x), z' = W(x).

The stepping loop is written once in numba-compatible Python.  For systems
whose right-hand side is numba-compiled the loop is compiled as well; any other
callable runs through the identical code in the interpreter.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._jit import is_jitted, jit_closure
from .dynsys import w_code

# Dormand-Prince tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# fifth-order minus embedded fourth-order weights
E1 = 71 / 57600
E3 = -71 / 16695
E4 = 71 / 1920
E5 = -17253 / 339200
E6 = 22 / 525
E7 = -1 / 40

SAFETY = 0.8
GROW_MAX = 5.0
SHRINK_MIN = 0.2

# kernel status codes
OK, Z_STOP, BLOW_UP, UNDERFLOW, NON_FINITE = 0, 1, 2, 3, 4


class IntegrationError(RuntimeError):
    pass


class BlowUpError(IntegrationError):
    """State norm left the allowed ball; ``chunk`` holds the partial trajectory."""

    def __init__(self, msg, chunk):
        super().__init__(msg)
        self.chunk = chunk


class StepUnderflowError(IntegrationError):
    pass


class NonFiniteError(IntegrationError):
    def __init__(self, msg, component):
        super().__init__(msg)
        self.component = component


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    h_init: float = 1e-3
    h_min: float = 1e-10
    h_max: float | None = None  # None: the chunk length
    x_bound: float = 1e6

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        h_max = math.inf if self.h_max is None else self.h_max
        if not (0 < self.h_min <= self.h_init <= h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")

    def h_max_for(self, dt_chunk):
        return dt_chunk if self.h_max is None else min(self.h_max, dt_chunk)


def _factor(err):
    if err == 0.0:
        return GROW_MAX
    return min(GROW_MAX, max(SHRINK_MIN, SAFETY * err ** -0.2))


def _make_attempt(aug, wrap):
    """Single Dormand-Prince attempt built around the derivative function ``aug``."""

    @wrap
    def attempt(s, h, k1, params, wk, wc, ws, rtol, atol):
        k2 = aug(s + h * (A21 * k1), params, wk, wc, ws)
        k3 = aug(s + h * (A31 * k1 + A32 * k2), params, wk, wc, ws)
        k4 = aug(s + h * (A41 * k1 + A42 * k2 + A43 * k3), params, wk, wc, ws)
        k5 = aug(s + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), params, wk, wc, ws)
        k6 = aug(s + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
                 params, wk, wc, ws)
        y5 = s + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = aug(y5, params, wk, wc, ws)
        e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(s), np.abs(y5))
        err = np.max(np.abs(e) / sc)
        return y5, k7, err

    return attempt


def _build(rhs, compile_):
    wrap = jit_closure if compile_ else (lambda fn: fn)
    factor = wrap(_factor)

    @wrap
    def aug(s, params, wkind, wcenter, wscale):
        n = s.shape[0] - 1
        x = s[:n]
        fx = rhs(x, params)
        out = np.empty(n + 1)
        out[:n] = fx
        if wkind == 0:
            d = x - wcenter
            out[n] = np.sum(d * d)
        else:
            out[n] = np.sum(fx * fx) / wscale
        return out

    attempt = _make_attempt(aug, wrap)

    @wrap
    def first_nonfinite(y, k):
        for i in range(y.shape[0]):
            if not (math.isfinite(y[i]) and math.isfinite(k[i])):
                return i
        return -1

    @wrap
    def chunk(s0, t0, dt_chunk, h0, params, wk, wc, ws, rtol, atol, h_min, h_max,
              z_stop, x_bound):
        n1 = s0.shape[0]
        n = n1 - 1
        cap = 64
        ts = np.empty(cap)
        ys = np.empty((cap, n1))
        ts[0] = t0
        ys[0, :] = s0
        count = 1
        t = 0.0
        s = s0.copy()
        h = min(max(h0, h_min), h_max)
        k1 = aug(s, params, wk, wc, ws)
        status = OK
        bad = first_nonfinite(s, k1)
        if bad >= 0:
            return NON_FINITE, ts[:1], ys[:1], 0.0, 0, 0, h, bad
        n_acc = 0
        n_rej = 0
        last_h = 0.0
        while t < dt_chunk:
            remaining = dt_chunk - t
            final = False
            if remaining <= 1.1 * h:
                hh = remaining
                final = True
            elif remaining < 2.0 * h:
                hh = 0.5 * remaining
            else:
                hh = h
            y5, k7, err = attempt(s, hh, k1, params, wk, wc, ws, rtol, atol)
            idx = first_nonfinite(y5, k7)
            if idx < 0 and math.isfinite(err) and err <= 1.0:
                t = dt_chunk if final else t + hh
                s = y5
                k1 = k7
                n_acc += 1
                last_h = hh
                if count == cap:
                    cap *= 2
                    ts2 = np.empty(cap)
                    ys2 = np.empty((cap, n1))
                    ts2[:count] = ts[:count]
                    ys2[:count, :] = ys[:count, :]
                    ts = ts2
                    ys = ys2
                ts[count] = t0 + t
                ys[count, :] = s
                count += 1
                # clipping to the chunk end must not shrink the controller's step
                h = min(h_max, max(h_min, max(hh * factor(err), h if hh < h else 0.0)))
                if s[n] > z_stop:
                    status = Z_STOP
                    break
                if math.sqrt(np.sum(s[:n] * s[:n])) > x_bound:
                    status = BLOW_UP
                    break
            else:
                n_rej += 1
                if hh <= h_min:
                    if idx >= 0:
                        status = NON_FINITE
                        bad = idx
                    else:
                        status = UNDERFLOW
                    break
                shrink = SHRINK_MIN if idx >= 0 or not math.isfinite(err) else factor(err)
                h = max(h_min, hh * shrink)
        return status, ts[:count], ys[:count], last_h, n_acc, n_rej, h, bad

    return aug, attempt, chunk


_KERNELS = {}


def kernels(rhs):
    """(aug, attempt, chunk) for ``rhs``; compiled when ``rhs`` is a numba function."""
    try:
        return _KERNELS[rhs]
    except (KeyError, TypeError):
        pass
    built = _build(rhs, is_jitted(rhs))
    try:
        _KERNELS[rhs] = built
    except TypeError:
        pass
    return built


@dataclass
class TrajectoryChunk:
    """Accepted solver points over one chunk; ``states[:, -1]`` is z."""

    t: np.ndarray
    states: np.ndarray
    last_step: float
    steps_accepted: int
    steps_rejected: int
    h_next: float
    z_stopped: bool = False

    @property
    def x(self):
        return self.states[:, :-1]

    @property
    def z(self):
        return self.states[:, -1]

    @property
    def final(self):
        return self.states[-1]

    @property
    def slope(self):
        """dz/dt over the last accepted step, the convergence test quantity."""
        if len(self.t) < 2:
            return math.inf
        return (self.states[-1, -1] - self.states[-2, -1]) / (self.t[-1] - self.t[-2])


def integrate_chunk(sys, w, s0, t0, dt_chunk, cfg=SolverConfig(), h0=None, z_stop=math.inf):
    """Integrate the augmented system over exactly [t0, t0 + dt_chunk].

    ``s0`` is the augmented state (x, z).  Integration stops early, flagged by
    ``z_stopped``, once z exceeds ``z_stop``.
    """
    if not dt_chunk > 0:
        raise ValueError("dt_chunk must be positive")
    s0 = np.ascontiguousarray(s0, dtype=float)
    if s0.shape != (sys.dim + 1,):
        raise ValueError(f"augmented state must have length {sys.dim + 1}")
    wk, wc, ws = w_code(w, sys.dim)
    _, _, chunk = kernels(sys.rhs)
    h_max = cfg.h_max_for(dt_chunk)
    h0 = cfg.h_init if h0 is None else h0
    status, ts, ys, last_h, n_acc, n_rej, h_next, bad = chunk(
        s0, float(t0), float(dt_chunk), float(h0), sys.params, wk, wc, ws,
        cfg.rel_tol, cfg.abs_tol, cfg.h_min, h_max, float(z_stop), cfg.x_bound)
    out = TrajectoryChunk(ts, ys, last_h, n_acc, n_rej, h_next, status == Z_STOP)
    if status == BLOW_UP:
        raise BlowUpError(f"|x| exceeded {cfg.x_bound:g} at t={ts[-1]:.6g}", out)
    if status == UNDERFLOW:
        raise StepUnderflowError(f"step size fell below h_min={cfg.h_min:g} at t={ts[-1]:.6g}")
    if status == NON_FINITE:
        what = f"x[{bad}]" if bad < sys.dim else "z"
        raise NonFiniteError(f"non-finite state or derivative in component {what} "
                             f"near t={ts[-1]:.6g}", bad)
    return out


@dataclass(frozen=True)
class StepResult:
    accepted: bool
    s_next: np.ndarray
    err: float
    h_next: float


def rk45_step(f, t, s, h, cfg=SolverConfig()):
    """One Dormand-Prince attempt for the autonomous field ``f(s)``.

    Returns the fifth-order solution whether or not the step is accepted;
    ``h_next`` is the controller's proposal for the next attempt.
    """
    h_max = math.inf if cfg.h_max is None else cfg.h_max
    if not (cfg.h_min <= h <= h_max):
        raise ValueError(f"step {h:g} outside [h_min, h_max]")
    s = np.asarray(s, dtype=float)
    attempt = _make_attempt(_PlainDerivative(f), lambda fn: fn)
    k1 = _eval_checked(f, s)
    y5, k7, err = attempt(s, h, k1, None, 0, None, 1.0, cfg.rel_tol, cfg.abs_tol)
    bad = np.flatnonzero(~np.isfinite(y5) | ~np.isfinite(k7))
    if bad.size:
        raise NonFiniteError(f"non-finite value in component {bad[0]} after step at t={t:g}",
                             int(bad[0]))
    accepted = err <= 1.0
    h_next = min(h_max, max(cfg.h_min, h * _factor(err)))
    return StepResult(accepted, y5, err, h_next)


class _PlainDerivative:
    """Adapts ``f(s)`` to the ``aug(s, params, wk, wc, ws)`` calling convention."""

    def __init__(self, f):
        self.f = f

    def __call__(self, s, params, wk, wc, ws):
        return np.asarray(self.f(s), dtype=float)


def _eval_checked(f, s):
    k = np.asarray(f(s), dtype=float)
    bad = np.flatnonzero(~np.isfinite(k))
    if bad.size:
        raise NonFiniteError(f"non-finite derivative in component {bad[0]}", int(bad[0]))
    return k
