"""ODE systems, W-functions, equilibrium refinement and uniform sampling.

Every system is stored as a right-hand side ``rhs(x, params)`` working on a
flat float64 parameter vector.  The built-in fields are numba-compiled so the
integrator in :mod:`zubovnet.odeint` can run them without touching the
interpreter; user-supplied callables go through the same code in plain Python.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ._jit import njit


class EquilibriumError(RuntimeError):
    """Newton refinement failed; ``last`` holds the final iterate."""

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


class SingularJacobianError(EquilibriumError):
    pass


def _as_state(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != dim:
        raise ValueError(f"expected a state of length {dim}, got shape {x.shape}")
    return x


class _CallableRHS:
    """Adapter giving a plain ``f(x)`` the ``rhs(x, params)`` signature (picklable)."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, x, params):
        return np.asarray(self.fn(x), dtype=float)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Autonomous vector field ``x' = f(x)`` on R^dim."""

    name: str
    dim: int
    rhs: object
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    equilibrium_hint: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=float))
        if self.equilibrium_hint is not None:
            hint = _as_state(self.equilibrium_hint, self.dim).copy()
            hint.setflags(write=False)
            object.__setattr__(self, "equilibrium_hint", hint)

    @classmethod
    def from_callable(cls, name, dim, fn, equilibrium_hint=None):
        return cls(name, dim, _CallableRHS(fn), np.zeros(0), equilibrium_hint)

    def field(self, x):
        x = _as_state(x, self.dim)
        out = np.asarray(self.rhs(x, self.params), dtype=float)
        if out.shape != (self.dim,):
            raise ValueError(f"field of {self.name!r} returned shape {out.shape}")
        return out

    def __call__(self, x):
        return self.field(x)


# --------------------------------------------------------------------------- W


@dataclass(frozen=True, eq=False)
class DistanceSquared:
    """W(x) = ||x - center||^2 for a single known equilibrium."""

    center: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    def __eq__(self, other):
        return isinstance(other, DistanceSquared) and np.array_equal(self.center, other.center)

    def describe(self):
        return "dist2:" + ";".join(repr(float(c)) for c in self.center)


@dataclass(frozen=True)
class FieldNormScaled:
    """W(x) = ||f(x)||^2 / scale; vanishes on every equilibrium."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def describe(self):
        return f"fieldnorm:{float(self.scale)!r}"


def parse_w(text):
    """Inverse of ``describe()``."""
    kind, _, arg = text.partition(":")
    if kind == "dist2":
        return DistanceSquared([float(v) for v in arg.split(";")])
    if kind == "fieldnorm":
        return FieldNormScaled(float(arg))
    raise ValueError(f"unknown W descriptor {text!r}")


def w_code(w, dim):
    """Flatten a W variant into (kind, center, scale) for the integrator kernel."""
    if isinstance(w, DistanceSquared):
        if w.center.shape[0] != dim:
            raise ValueError(f"W center has length {w.center.shape[0]}, system dim is {dim}")
        return 0, np.ascontiguousarray(w.center), 1.0
    if isinstance(w, FieldNormScaled):
        return 1, np.zeros(dim), float(w.scale)
    raise TypeError(f"unsupported W {w!r}")


def eval_w(w, sys, x):
    x = _as_state(x, sys.dim)
    if isinstance(w, DistanceSquared):
        if w.center.shape[0] != sys.dim:
            raise ValueError("W center dimension does not match the system")
        d = x - w.center
        return float(d @ d)
    if isinstance(w, FieldNormScaled):
        f = sys.field(x)
        return float(f @ f) / w.scale
    raise TypeError(f"unsupported W {w!r}")


# ---------------------------------------------------------------------- fields


@njit
def _vanderpol_rhs(x, params):
    out = np.empty(2)
    out[0] = -x[1]
    out[1] = x[0] - (1.0 - x[0] * x[0]) * x[1]
    return out


@njit
def _linear_rhs(x, params):
    # x' = -rate * x
    return -params[0] * x


@njit
def _swing_rhs(x, params):
    m = int(params[0])
    omega0 = params[1]
    damp = params[2]
    H = params[3:3 + m]
    Pm = params[3 + m:3 + 2 * m]
    E = params[3 + 2 * m:3 + 3 * m]
    off = 3 + 3 * m
    out = np.empty(2 * m)
    for i in range(m):
        wi = x[2 * i]
        di = x[2 * i + 1]
        acc = Pm[i] - damp * (wi - omega0) / omega0 - E[i] * E[i] * params[off + i * m + i]
        for j in range(m):
            if j != i:
                dij = di - x[2 * j + 1]
                g = params[off + i * m + j]
                b = params[off + m * m + i * m + j]
                acc -= E[i] * E[j] * (b * math.sin(dij) + g * math.cos(dij))
        out[2 * i] = omega0 / (2.0 * H[i]) * acc
        out[2 * i + 1] = wi - omega0
    return out


def vanderpol_field(x):
    """Time-reversed van der Pol field; the origin is asymptotically stable."""
    return _vanderpol_rhs(_as_state(x, 2), np.zeros(0))


def vanderpol():
    return SystemModel("vdp", 2, _vanderpol_rhs, np.zeros(0), np.zeros(2))


def linear(dim=2, rate=1.0):
    """x' = -rate * x, the closed-form test system."""
    return SystemModel("linear", dim, _linear_rhs, np.array([float(rate)]), np.zeros(dim))


# ---------------------------------------------------------------- swing model


@dataclass(frozen=True, eq=False)
class SwingParams:
    """Classical m-machine swing model; state order (w1, d1, ..., wm, dm)."""

    H: np.ndarray
    D: float
    Pm: np.ndarray
    E: np.ndarray
    G: np.ndarray
    B: np.ndarray
    f0: float = 60.0
    delta_guess: np.ndarray | None = None

    def __post_init__(self):
        for name in ("H", "Pm", "E", "G", "B"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m = self.H.shape[0]
        if self.H.ndim != 1 or self.Pm.shape != (m,) or self.E.shape != (m,):
            raise ValueError("H, Pm and E must be vectors of equal length m")
        if self.G.shape != (m, m) or self.B.shape != (m, m):
            raise ValueError(f"G and B must be {m}x{m} matrices")
        if np.any(self.H <= 0):
            raise ValueError("inertia constants H must be positive")
        if self.delta_guess is not None:
            g = np.array(self.delta_guess, dtype=float)
            if g.shape != (m,):
                raise ValueError("delta_guess must have length m")
            g.setflags(write=False)
            object.__setattr__(self, "delta_guess", g)

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def omega0(self):
        return 2.0 * math.pi * self.f0

    def pack(self):
        return np.concatenate([[self.m, self.omega0, self.D], self.H, self.Pm, self.E,
                               self.G.ravel(), self.B.ravel()])

    def state(self, omega, delta):
        """Interleave speed and angle vectors into a state vector."""
        x = np.empty(2 * self.m)
        x[0::2] = omega
        x[1::2] = delta
        return x


def swing_field(p, x):
    return _swing_rhs(_as_state(x, 2 * p.m), p.pack())


def swing(p, equilibrium_hint=None):
    if equilibrium_hint is None and p.delta_guess is not None:
        equilibrium_hint = p.state(np.full(p.m, p.omega0), p.delta_guess)
    return SystemModel("swing", 2 * p.m, _swing_rhs, p.pack(), equilibrium_hint)


def load_swing_params(path):
    """Read a JSON parameter file (keys m, f0, D, H, E, Pm, G, B; optional delta_guess)."""
    with open(path) as fh:
        raw = json.load(fh)
    return _swing_params_from_dict(raw, str(path))


def _swing_params_from_dict(raw, source):
    missing = {"m", "f0", "D", "H", "E", "Pm", "G", "B"} - raw.keys()
    if missing:
        raise ValueError(f"{source}: missing keys {sorted(missing)}")
    m = int(raw["m"])
    for key in ("G", "B"):
        rows = raw[key]
        if len(rows) != m or any(len(r) != m for r in rows):
            raise ValueError(f"{source}: {key} must be a square {m}x{m} matrix")
    for key in ("H", "E", "Pm"):
        if len(raw[key]) != m:
            raise ValueError(f"{source}: {key} must have {m} entries")
    return SwingParams(H=raw["H"], D=float(raw["D"]), Pm=raw["Pm"], E=raw["E"],
                       G=raw["G"], B=raw["B"], f0=float(raw["f0"]),
                       delta_guess=raw.get("delta_guess"))


def reference_swing_params():
    """The shipped New England 10-machine parameter set."""
    text = resources.files("zubovnet.data").joinpath("ieee39_swing.json").read_text()
    return _swing_params_from_dict(json.loads(text), "ieee39_swing.json")


# ----------------------------------------------------------------- equilibria


def numerical_jacobian(fn, x):
    n = x.shape[0]
    J = np.empty((n, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (fn(xp) - fn(xm)) / (2 * h)
    return J


def refine_equilibrium(sys, guess, tol=1e-10, max_iter=50):
    """Newton iteration on f(x) = 0 from ``guess``.

    Steps are damped by backtracking on ||f|| and are minimum-norm
    least-squares solutions, so a continuum of
    equilibria (the swing model is invariant under a common angle shift)
    does not stall the iteration; the result stays close to ``guess``
    along the neutral direction.
    """
    x = _as_state(guess, sys.dim).copy()
    f = sys.field(x)
    for _ in range(max_iter):
        res = np.linalg.norm(f)
        if res <= tol:
            return x
        J = numerical_jacobian(sys.field, x)
        step, _, rank, _ = np.linalg.lstsq(J, -f, rcond=1e-9)
        if rank == 0 or np.linalg.norm(J @ step + f) >= res * (1 - 1e-12):
            raise SingularJacobianError(
                f"Jacobian of {sys.name!r} is singular along the residual at x={x}", last=x)
        # backtrack until the residual decreases
        lam = 1.0
        while True:
            x_new = x + lam * step
            f_new = sys.field(x_new)
            if np.linalg.norm(f_new) < res or lam < 1e-6:
                break
            lam *= 0.5
        x, f = x_new, f_new
    if np.linalg.norm(f) <= tol:
        return x
    raise EquilibriumError(
        f"Newton did not reach |f| <= {tol:g} in {max_iter} iterations "
        f"(|f| = {np.linalg.norm(f):.3e})", last=x)


# ------------------------------------------------------------------- sampling


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __eq__(self, other):
        return (isinstance(other, Region) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    @property
    def dim(self):
        return self.lower.shape[0]

    @classmethod
    def box(cls, half_width, dim=2, center=None):
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(c - half_width, c + half_width)

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def describe(self):
        return ";".join(f"{lo!r}:{hi!r}" for lo, hi in zip(self.lower.tolist(), self.upper.tolist()))

    @classmethod
    def parse(cls, text):
        pairs = [p.split(":") for p in text.split(";")]
        return cls([float(a) for a, _ in pairs], [float(b) for _, b in pairs])


def swing_region(p, equilibrium, angle_halfwidth=0.4 * math.pi, speed_halfwidth=1.5):
    """Box of angle and speed deviations around a swing equilibrium."""
    half = np.empty(2 * p.m)
    half[0::2] = speed_halfwidth
    half[1::2] = angle_halfwidth
    return Region(equilibrium - half, equilibrium + half)


def sample_point(region, seed, index):
    """The ``index``-th draw; depends only on (seed, index)."""
    rng = np.random.default_rng([int(seed), int(index)])
    return region.lower + (region.upper - region.lower) * rng.random(region.dim)


def sample_uniform(region, n, seed):
    if n < 1:
        raise ValueError("n must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.array([sample_point(region, seed, i) for i in range(n)])
