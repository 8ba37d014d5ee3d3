"""Batch surface: suite runner, paired statistics, report emission."""

from .config import load_config, parse_config_text
from .reports import emit_reports, improvement_grid_markdown
from .stats import PairedStats, paired_stats
from .suite import (
    ElectricityResult,
    SequenceScore,
    SuiteResult,
    run_electricity,
    run_heavytail_suite,
    run_suite,
    train_family_policy,
)

__all__ = [
    "ElectricityResult", "PairedStats", "SequenceScore", "SuiteResult",
    "emit_reports", "improvement_grid_markdown", "load_config", "paired_stats",
    "parse_config_text", "run_electricity", "run_heavytail_suite", "run_suite",
    "train_family_policy",
]
