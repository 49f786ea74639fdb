"""Python interface to the branching-diffusion engine."""

from ._core import (
    ConfigError,
    InvalidArgument,
    __version__,
    config_schema,
    contraction_window,
    csv_schema_version,
    linear_branching_mean,
    run,
    simulate_population,
    w1_counting,
    w1_counting_via_intervals,
)
from .tables import CSV_COLUMNS, SchemaError, read_table

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "InvalidArgument",
    "SchemaError",
    "__version__",
    "config_schema",
    "contraction_window",
    "csv_schema_version",
    "linear_branching_mean",
    "read_table",
    "run",
    "simulate_population",
    "w1_counting",
    "w1_counting_via_intervals",
]
