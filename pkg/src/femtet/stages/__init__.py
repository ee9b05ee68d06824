"""Pipeline stages organized by phase."""

from .stages import Stages


__all__ = ["Stages"]
