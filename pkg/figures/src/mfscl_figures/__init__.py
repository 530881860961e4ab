"""Figure rendering for mfscl CSV bundles (consumes files only)."""

from .bundle import BundleFormatError, FigureBundle, RoleMissingError
from .render import build_figure, render

__version__ = "0.1.0"
