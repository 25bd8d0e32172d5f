"""Ergodic classification, simulation and mixing diagnostics for stationary SaS and alpha-Frechet fields."""

__version__ = "0.1.0"

from .classification import classify, find_weakly_wandering, series_test  # noqa: E402
from .diagnostics import (  # noqa: E402
    DiagnosticSeries,
    association_check,
    empirical_cesaro,
    ergodic_average,
    gross_weak_mixing,
    kvn_filter,
    max_ergodicity,
    max_mixing,
)
from .lattice import Window  # noqa: E402
from .simulate import FieldSample, simulate_max_stable, simulate_sum_stable  # noqa: E402
from .spectral import MAX_STABLE, SUM_STABLE, SpectralFamily, scale  # noqa: E402
from .zoo import list_examples, make_example, make_reference  # noqa: E402

__all__ = [
    "__version__",
    "MAX_STABLE",
    "SUM_STABLE",
    "SpectralFamily",
    "Window",
    "scale",
    "classify",
    "series_test",
    "find_weakly_wandering",
    "simulate_max_stable",
    "simulate_sum_stable",
    "FieldSample",
    "DiagnosticSeries",
    "ergodic_average",
    "kvn_filter",
    "gross_weak_mixing",
    "max_ergodicity",
    "max_mixing",
    "association_check",
    "empirical_cesaro",
    "make_example",
    "make_reference",
    "list_examples",
]
