"""Figure generation from spatial epidemic control output bundles."""

from .bundle import Bundle, stride_between
from .render import (
    FIGURE_KINDS,
    FigureRequest,
    build_figure,
    difference_field,
    render,
)

__all__ = [
    "Bundle",
    "FIGURE_KINDS",
    "FigureRequest",
    "build_figure",
    "difference_field",
    "render",
    "stride_between",
]

__version__ = "0.1.0"
