"""Ballistic lunar captures seeded from the energy transition domain (ETD).

The package covers CR3BP dynamics, ETD initial conditions, capture-set
search, transfer into an Earth-Moon-Sun ephemeris model, an impulsive
distance metric and mission analyses on the resulting database.
"""
from .cr3bp import Frame, OrbitalElements, State6, SystemParams
from .database import CaptureRecord, CaptureStore
from .etd import etd_initial_conditions, etd_membership, etd_slice
from .metric import ElementSet, dv_metric, dv_metric_symmetric, dv2_metric
from .propagation import Classification, Cr3bpModel, PropagationConfig, classify_bc, propagate
from .search import CaptureSearch, SearchParams

__version__ = "0.1.0"

__all__ = [
    "CaptureRecord",
    "CaptureSearch",
    "CaptureStore",
    "Classification",
    "Cr3bpModel",
    "ElementSet",
    "Frame",
    "OrbitalElements",
    "PropagationConfig",
    "SearchParams",
    "State6",
    "SystemParams",
    "classify_bc",
    "dv2_metric",
    "dv_metric",
    "dv_metric_symmetric",
    "etd_initial_conditions",
    "etd_membership",
    "etd_slice",
    "propagate",
]
