"""Fixed-point model predictive control of spacecraft attitude with reaction wheels.

Submodules:

* :mod:`fxmpc.fixed_point`: Q-format arithmetic emulation
* :mod:`fxmpc.dynamics`: nonlinear spacecraft plant and RK4 integration
* :mod:`fxmpc.control_model`: reduced linear prediction model
* :mod:`fxmpc.mpc`: MPC problem construction, condensing, reference integrator
* :mod:`fxmpc.gpd`: dual gradient projection QP solver (float64 or fixed point)
* :mod:`fxmpc.sim`: closed-loop harness, scenarios and experiments
"""

from .errors import ConvergenceError, DimensionError, MaxItersExceeded, OverflowAbort, ParameterError, SimDiverged
from .fixed_point import FixedFormat, FixedPointOverflow, FixedScalar

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DimensionError",
    "FixedFormat",
    "FixedPointOverflow",
    "FixedScalar",
    "MaxItersExceeded",
    "OverflowAbort",
    "ParameterError",
    "SimDiverged",
]
