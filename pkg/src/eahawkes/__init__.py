"""Environmentally-adaptive Hawkes processes.

Simulation (thinning and cluster construction), EM estimation of the
branching matrix, one-step forecasting, and numerical evaluation of the
model's stability bound, residual-time survivor function and cluster-length
distribution.
"""

from ._backend import HAVE_COMPILED, use_backend
from .core import (
    BinnedCounts,
    BranchingMatrix,
    Constant,
    DecayPiece,
    DecaySpec,
    EnvMultiplier,
    EventStream,
    KernelSpec,
    MatrixFunction,
    ModelSpec,
    ScalarDecay,
    compensator,
    epidemic_control_decay,
    eval_decay,
    eval_intensity,
    kernel_integral,
)
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
