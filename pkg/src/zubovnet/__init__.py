"""Domains of attraction through the integral form of Zubov's equation."""

__version__ = "0.1.0"

from . import datagen, dynsys, levelset, mlp, odeint, zubov  # noqa: E402
from .estimators import ZubovNetRegressor, ZubovValueFunction  # noqa: E402

__all__ = ["datagen", "dynsys", "levelset", "mlp", "odeint", "zubov", "ZubovNetRegressor",
           "ZubovValueFunction", "__version__"]
