"""Perturbative two-body parent Hamiltonians for PEPS."""

from __future__ import annotations

__version__ = "0.1.0"

from .lattice import HoneycombSpec, PepsGraph, Region, build_honeycomb, chain_graph, enumerate_connected_regions, ring_graph
from .operators import QuditRegister, SparseOperator, SparseState
from .peps import NullStateError, PepsModel, ResourceError, UpsilonSpec, verify_quasi_injectivity
from .report import Check, Report

__all__ = [
    "Check",
    "HoneycombSpec",
    "NullStateError",
    "PepsGraph",
    "PepsModel",
    "QuditRegister",
    "Region",
    "Report",
    "ResourceError",
    "SparseOperator",
    "SparseState",
    "UpsilonSpec",
    "build_honeycomb",
    "chain_graph",
    "enumerate_connected_regions",
    "ring_graph",
    "verify_quasi_injectivity",
    "__version__",
]
