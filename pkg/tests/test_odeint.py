import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from zubovnet import dynsys
from zubovnet.dynsys import DistanceSquared, FieldNormScaled
from zubovnet.odeint import (SAFETY, BlowUpError, NonFiniteError, SolverConfig,
                             StepUnderflowError, integrate_chunk, rk45_step)


def test_constant_rate_step_is_exact():
    r = rk45_step(lambda s: np.ones(1), 0.0, np.zeros(1), 0.37)
    assert r.accepted
    assert r.s_next[0] == pytest.approx(0.37, abs=1e-15)


def test_linear_to_t1():
    cfg = SolverConfig(rel_tol=1e-6)
    s, t, h = np.ones(1), 0.0, cfg.h_init
    while t < 1.0:
        h = min(h, 1.0 - t)
        r = rk45_step(lambda y: -y, t, s, h, cfg)
        if r.accepted:
            s, t = r.s_next, t + h
        h = r.h_next
    assert abs(s[0] - math.exp(-1)) < 1e-6


def test_fixed_step_error_is_fifth_order():
    # accumulated error over a fixed horizon; a single step alone scales as h^6
    cfg = SolverConfig(h_max=10.0)

    def error(n):
        s, h = np.ones(1), 2.0 / n
        for k in range(n):
            s = rk45_step(lambda y: -y, k * h, s, h, cfg).s_next
        return abs(s[0] - math.exp(-2.0))

    assert 20 <= error(16) / error(32) <= 45


def test_step_controller_formula():
    cfg = SolverConfig(rel_tol=1e-3, abs_tol=1e-6, h_max=10.0)
    r = rk45_step(lambda s: -5 * s, 0.0, np.ones(1), 0.3, cfg)
    expected = 0.3 * min(5.0, max(0.2, SAFETY * r.err ** -0.2))
    assert r.h_next == pytest.approx(expected, rel=1e-14)
    assert r.accepted == (r.err <= 1.0)


def test_step_rejects_out_of_range_h():
    with pytest.raises(ValueError):
        rk45_step(lambda s: s, 0.0, np.ones(1), 1e-12)


def test_step_nonfinite_names_component():
    with pytest.raises(NonFiniteError) as info:
        rk45_step(lambda s: np.array([0.0, np.nan]), 0.0, np.zeros(2), 0.1)
    assert info.value.component == 1


def test_constant_integrand_chunk():
    still = dynsys.linear(2, rate=0.0)
    ch = integrate_chunk(still, DistanceSquared([0, 0]), np.array([1.0, 0.0, 0.0]), 0.0, 2.0)
    assert ch.t[0] == 0.0 and ch.t[-1] == 2.0
    assert ch.z[-1] == pytest.approx(2.0, abs=1e-12)


def test_vdp_chunk_z_increasing(vdp, w0):
    ch = integrate_chunk(vdp, w0, np.array([0.5, 0.5, 0.0]), 0.0, 1.0)
    assert np.all(np.diff(ch.z) > 0)
    assert np.all(np.isfinite(ch.x))
    assert np.all(np.diff(ch.t) > 0)
    assert ch.last_step > 0 and ch.steps_accepted == len(ch.t) - 1


def test_linear_chunk_closed_form(lin, w0):
    ch = integrate_chunk(lin, w0, np.array([1.0, 1.0, 0.0]), 0.0, 10.0)
    assert abs(ch.z[-1] - (1 - math.exp(-20))) < 1e-6
    assert ch.t[-1] == 10.0


def test_chunk_respects_start_time(lin, w0):
    ch = integrate_chunk(lin, w0, np.array([1.0, 0.0, 0.0]), 5.0, 1.0)
    assert ch.t[0] == 5.0 and ch.t[-1] == 6.0


def test_z_monotone_everywhere(vdp):
    for w in (DistanceSquared([0, 0]), FieldNormScaled(1.0)):
        ch = integrate_chunk(vdp, w, np.array([0.8, -0.5, 0.0]), 0.0, 5.0)
        assert np.all(np.diff(ch.z) >= -1e-12)


def test_chunk_length_independence(vdp, w0):
    cfg = SolverConfig()
    s = np.array([1.0, 1.0, 0.0])
    whole = integrate_chunk(vdp, w0, s, 0.0, 4.0, cfg).final
    half = s
    for k in range(2):
        half = integrate_chunk(vdp, w0, half, 2.0 * k, 2.0, cfg).final
    rel = np.abs(whole - half) / np.maximum(1.0, np.abs(whole))
    assert rel.max() < 10 * cfg.rel_tol


def test_global_error_tracks_tolerance(lin, w0):
    errors = []
    for tol in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        ch = integrate_chunk(lin, w0, np.array([1.0, 1.0, 0.0]), 0.0, 3.0,
                             SolverConfig(rel_tol=tol, abs_tol=tol * 1e-3))
        errors.append(abs(ch.z[-1] - (1 - math.exp(-6))))
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-7


def test_blow_up_guard():
    # x' = x^2 escapes to infinity at t = 1/x0
    sys = dynsys.SystemModel.from_callable("riccati", 1, lambda x: x * x)
    with pytest.raises(BlowUpError) as info:
        integrate_chunk(sys, DistanceSquared([0.0]), np.array([1.0, 0.0]), 0.0, 2.0)
    assert np.abs(info.value.chunk.x[-1]).max() > 1e6
    assert info.value.chunk.t[-1] < 1.0


def test_step_underflow():
    # the step-size floor is above what the stiff decay needs
    sys = dynsys.linear(1, rate=1e9)
    with pytest.raises(StepUnderflowError):
        integrate_chunk(sys, DistanceSquared([0.0]), np.array([1.0, 0.0]), 0.0, 1.0,
                        SolverConfig(h_min=1e-3, h_init=1e-3))


def test_z_stop_ends_chunk_early(vdp, w0):
    ch = integrate_chunk(vdp, w0, np.array([4.0, 4.0, 0.0]), 0.0, 1.0, z_stop=50.0)
    assert ch.z_stopped and ch.z[-1] > 50.0 and ch.t[-1] < 1.0


def test_python_rhs_matches_compiled(w0):
    plain = dynsys.SystemModel.from_callable("vdp-py", 2, dynsys.vanderpol_field)
    a = integrate_chunk(plain, w0, np.array([1.0, 0.5, 0.0]), 0.0, 1.0)
    b = integrate_chunk(dynsys.vanderpol(), w0, np.array([1.0, 0.5, 0.0]), 0.0, 1.0)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-13, atol=1e-15)


def test_matches_reference_solver(vdp, w0):
    x0 = np.array([1.2, -0.7])

    def aug(t, s):
        f = dynsys.vanderpol_field(s[:2])
        return [f[0], f[1], s[0] ** 2 + s[1] ** 2]

    ref = solve_ivp(aug, (0, 3), [*x0, 0.0], rtol=1e-11, atol=1e-13).y[:, -1]
    ours = integrate_chunk(vdp, w0, np.append(x0, 0.0), 0.0, 3.0).final
    np.testing.assert_allclose(ours, ref, rtol=1e-5, atol=1e-7)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(h_min=1e-2, h_init=1e-3)
    with pytest.raises(ValueError):
        integrate_chunk(dynsys.vanderpol(), DistanceSquared([0, 0]), np.zeros(3), 0.0, 0.0)
