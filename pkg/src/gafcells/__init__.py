"""Cell-size limits and simulation for GAF-style geographic duty cycling."""
from .bounds import Binding, Protocol, SubcellRegime, max_cell
from .geometry import CellShape, ShapeKind, shape_metrics
from .partition import Field, Partition, PartitionScheme

__version__ = "0.1.0"

__all__ = [
    "Binding",
    "CellShape",
    "Field",
    "Partition",
    "PartitionScheme",
    "Protocol",
    "ShapeKind",
    "SubcellRegime",
    "max_cell",
    "shape_metrics",
]
