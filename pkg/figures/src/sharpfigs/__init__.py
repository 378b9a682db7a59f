"""Figure rendering for sharpfactor's CSV/JSON experiment outputs.

A pure presentation layer: it reads the documented trajectory CSVs, grid
CSVs, basis JSONs, and escape reports, and never recomputes any math.
"""

from .errors import FigureError, SchemaError, SpecError
from .figspec import FigureSpec, TrajectoryInput, load_spec
from .render import build_figure, render

__version__ = "0.1.0"
