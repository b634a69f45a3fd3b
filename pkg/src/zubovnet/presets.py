"""Ready-made (system, W, region, settings) bundles for the shipped examples."""

from dataclasses import dataclass

import numpy as np

from . import dynsys
from .zubov import ZubovConfig

SYSTEMS = ("vdp", "swing", "linear")

# converged I values of the swing model stay far below this (see the I-value plot)
SWING_THRESHOLD = 250.0
SWING_W_SCALE = 1000.0


@dataclass(frozen=True)
class Preset:
    system: dynsys.SystemModel
    w: object
    region: dynsys.Region
    config: ZubovConfig
    equilibrium: np.ndarray
    swing_params: object = None


def vdp_preset():
    sys = dynsys.vanderpol()
    return Preset(sys, dynsys.DistanceSquared(np.zeros(2)), dynsys.Region.box(4.0),
                  ZubovConfig(M=200.0, alpha=0.1), np.zeros(2))


def linear_preset(dim=2):
    sys = dynsys.linear(dim)
    return Preset(sys, dynsys.DistanceSquared(np.zeros(dim)), dynsys.Region.box(3.0, dim),
                  ZubovConfig(M=200.0, alpha=0.1), np.zeros(dim))


def swing_preset(params_path=None):
    p = (dynsys.load_swing_params(params_path) if params_path
         else dynsys.reference_swing_params())
    sys = dynsys.swing(p)
    if sys.equilibrium_hint is None:
        raise ValueError("swing parameters need delta_guess to locate the equilibrium")
    eq = dynsys.refine_equilibrium(sys, sys.equilibrium_hint)
    return Preset(sys, dynsys.FieldNormScaled(SWING_W_SCALE), dynsys.swing_region(p, eq),
                  ZubovConfig.for_threshold(SWING_THRESHOLD), eq, p)


def preset(name, params_path=None):
    if name == "vdp":
        return vdp_preset()
    if name == "linear":
        return linear_preset()
    if name == "swing":
        return swing_preset(params_path)
    raise ValueError(f"unknown system {name!r}; choose one of {', '.join(SYSTEMS)}")
