import numpy as np
import pytest

from zubovnet import dynsys
from zubovnet.zubov import ZubovConfig

PUBLISHED_DELTA0 = np.array([-0.0335, 0.0470, 0.1586, 0.1641, 0.1114, 0.1726, 0.2220, 0.1243,
                         0.2723, -0.1726])


@pytest.fixture(scope="session")
def vdp():
    return dynsys.vanderpol()


@pytest.fixture(scope="session")
def lin():
    return dynsys.linear(2)


@pytest.fixture(scope="session")
def w0():
    return dynsys.DistanceSquared(np.zeros(2))


@pytest.fixture(scope="session")
def cfg():
    return ZubovConfig(delta_I=1e-6, M=200.0, alpha=0.1)


@pytest.fixture(scope="session")
def swing_ref():
    p = dynsys.reference_swing_params()
    sys = dynsys.swing(p)
    eq = dynsys.refine_equilibrium(sys, sys.equilibrium_hint)
    return p, sys, eq


def toy_swing_params(D=0.0, G=None):
    """Two machines, unit inertia and voltage, one unit tie line."""
    return dynsys.SwingParams(H=[1.0, 1.0], D=D, Pm=[0.0, 0.0], E=[1.0, 1.0],
                              G=np.zeros((2, 2)) if G is None else G,
                              B=np.array([[0.0, 1.0], [1.0, 0.0]]))


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
