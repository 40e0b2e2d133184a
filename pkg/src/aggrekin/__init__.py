"""Kinetics of cross-linked aggregates: model, integrator, coordinate
transforms and numerical experiments."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .model import *  # noqa: E402,F401,F403
from .integrator import (  # noqa: E402,F401
    CompiledField,
    DenseOutput,
    Event,
    IntegratorConfig,
    Status,
    Trajectory,
    integrate,
    integrate_augmented,
)
from .transforms import *  # noqa: E402,F401,F403
from .analysis import *  # noqa: E402,F401,F403
