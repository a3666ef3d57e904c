"""Metrics, benchmark orchestration, rendering and the external-backend adapter."""

from .metrics import MetricInput, Outcome, SdfMode, sdf, spl, sr, summarize

__all__ = ["MetricInput", "Outcome", "SdfMode", "sdf", "spl", "sr", "summarize"]
