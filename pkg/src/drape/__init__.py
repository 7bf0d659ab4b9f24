"""Excess energy of a hanging wrinkled sheet: discrete energy, explicit
constructions, the closed-form scaling law and a direct minimiser."""

from .energy import DeformationField, EnergyBreakdown, Grid, bulk_energy, bulk_minimizer, fvk_energy, fvk_gradient
from .params import CanonicalParams, PhysicalParams, canonicalize, dimensionless_groups, validate
from .scaling import classify, epsilon

__version__ = "0.1.0"
