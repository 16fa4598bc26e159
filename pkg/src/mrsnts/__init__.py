"""Regime-switching GARCH with multivariate normal tempered stable innovations.

Submodules
----------
data             price ingestion and return panels
tempered_stable  subordinator, stdMNTS sampling, densities and fits
mrs_garch        Haas regime-switching GARCH(1,1): filter, fit, simulation
estimation       the joint six-step estimator and diagnostics
scenarios        regime-tagged scenario cubes
risk             VaR, CVaR, drawdown and CDaR estimators
optimizer        minimum CVaR / CDaR / variance allocation and frontiers
backtest         rolling-window backtest and performance tables
synthetic        simulated markets for tests and demos
cli              the ``mrsnts`` command

Submodules are imported on first attribute access so that ``import mrsnts``
stays cheap (the CLI sets thread limits before numerical libraries load).
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = {
    "data", "tempered_stable", "mrs_garch", "estimation", "scenarios", "risk",
    "optimizer", "backtest", "synthetic", "cli",
}

__all__ = sorted(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
