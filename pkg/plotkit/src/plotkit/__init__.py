"""Static figure rendering for coefficient-space trajectory data.

Consumes trajectory CSVs and prediction JSON files produced by the
simulation CLI and renders deterministic SVG figures: one panel per
initialization scale, trajectories per architecture, predicted limit
points overlaid, and the interpolation set {z : Xz = y} drawn through
the panel.
"""

from .render import PlotSpec, PlotSpecError, load_spec, render_trajectories

__all__ = ["PlotSpec", "PlotSpecError", "load_spec", "render_trajectories"]
