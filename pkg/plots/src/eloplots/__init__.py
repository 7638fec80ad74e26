"""Figure generation for rating-chain benchmark CSV outputs."""

from .figures import PlotSpec, RenderResult, load_trajectories, render

__version__ = "0.1.0"
