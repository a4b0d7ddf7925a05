"""Diffusion models trained from degraded measurements with GSURE."""

from ._core import *  # noqa: F401,F403
from ._core import Config, Model, Schedule  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
