"""Strictly online expert tracking with policy-controlled restarts, exact
switching oracles, and pathwise regret certificates."""

from . import backbone, bench, certificate, controller, core, errors, oracle

__version__ = "0.1.0"

__all__ = ["backbone", "bench", "certificate", "controller", "core", "errors",
           "oracle", "__version__"]
