"""Offline rendering of solver CSV outputs into convergence and oscillation plots."""

from .plots import EmptyData, PlotSpec, render_convergence, render_oscillation

__all__ = ["PlotSpec", "render_convergence", "render_oscillation", "EmptyData"]

__version__ = "0.1.0"
