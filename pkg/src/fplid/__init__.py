"""fplid: local intrinsic dimension estimation with score-based diffusion
models, plus baselines and a ground-truth synthetic benchmark suite."""

__version__ = "0.1.0"

from .backend import BACKEND
from .schedules import (
    Schedule,
    SubVPSchedule,
    VESchedule,
    VPSchedule,
    default_schedule,
    schedule_from_config,
)
from .scorenet import EpsilonAdapter, GaussianOracle, MlpScore

__all__ = [
    "BACKEND",
    "Schedule",
    "VPSchedule",
    "SubVPSchedule",
    "VESchedule",
    "default_schedule",
    "schedule_from_config",
    "MlpScore",
    "GaussianOracle",
    "EpsilonAdapter",
]
