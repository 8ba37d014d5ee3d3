"""Benchmark inputs: synthetic families and the electricity pipeline."""

from .electricity import (
    ElectricityConfig,
    ElectricitySeries,
    electricity_loss_matrix,
    expert_forecasts,
    expert_names,
    ingest_electricity,
)
from .families import (
    FAMILIES,
    FamilyConfig,
    GeneratedSequence,
    clip_losses,
    generate_family,
    heavytail_grid,
)

__all__ = [
    "FAMILIES", "ElectricityConfig", "ElectricitySeries", "FamilyConfig",
    "GeneratedSequence", "clip_losses", "electricity_loss_matrix",
    "expert_forecasts", "expert_names", "generate_family", "heavytail_grid",
    "ingest_electricity",
]
