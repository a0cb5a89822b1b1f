"""Provenance-aware dataflow engine and collaboration service for urban visual analytics."""

__version__ = "0.1.0"

from .layers import AttributeDef, BBox, DataLayer, GridMeta, LayerError  # noqa: F401
from .model import (  # noqa: F401
    CanvasBox,
    Comment,
    DataDependency,
    DataflowSpec,
    InteractionDependency,
    ModelError,
    Mutation,
    NodeSpec,
    PortDef,
    ValidationReport,
    apply_mutation,
    downstream_closure,
    topological_order,
    validate,
)
