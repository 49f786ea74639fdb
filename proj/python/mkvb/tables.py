"""Column layouts of the CSV files written by the CLI and the acceptance run.

The plotting package reads only these files, so the layouts here are the
contract between the two components.
"""

from __future__ import annotations

import csv
from pathlib import Path

CSV_COLUMNS: dict[str, tuple[str, ...]] = {
    "population.csv": ("t", "mean", "se", "replicas"),
    "records.csv": ("label", "parent", "birth", "death", "offspring_count"),
    "iterates.csv": ("iter", "window", "w1_to_prev"),
    "chaos.csv": ("n", "w1_mean", "w1_se", "replicas"),
    "chaos_replicas.csv": ("n", "replica", "w1"),
    "battery.csv": ("system", "phi_id", "h_id", "s", "t", "value", "se", "z"),
    "variance.csv": ("n", "systems", "mean", "variance", "n_variance"),
    "stability.csv": ("eps", "lhs", "se", "term_b", "term_sigma", "term_gamma", "term_p", "term_init"),
    "closed_forms.csv": ("family", "t", "mean", "se", "analytic", "replicas"),
    "selftest.csv": ("check", "status"),
}

# Columns that may follow the fixed ones.
OPTIONAL_TRAILING: dict[str, tuple[str, ...]] = {"iterates.csv": ("wall_ms",)}

TEXT_COLUMNS = {"family", "system", "phi_id", "h_id", "label", "parent", "check", "status"}


class SchemaError(ValueError):
    pass


def _expected_columns(name: str, header: list[str]) -> tuple[str, ...]:
    if name == "traj.csv":
        dims = len(header) - 2
        if dims < 1:
            raise SchemaError(f"{name}: no coordinate columns")
        return ("label", "time") + tuple(f"x_{i}" for i in range(1, dims + 1))
    if name not in CSV_COLUMNS:
        raise SchemaError(f"{name}: unknown table")
    fixed = CSV_COLUMNS[name]
    extra = OPTIONAL_TRAILING.get(name, ())
    if tuple(header) == fixed + extra:
        return fixed + extra
    return fixed


def read_table(path: str | Path) -> dict[str, list]:
    """Reads one CLI CSV, checks its header and returns columns by name.

    Numeric columns become floats; an empty cell becomes None.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path.name}: empty file")
    header, body = rows[0], rows[1:]
    expected = _expected_columns(path.name, header)
    if tuple(header) != expected:
        raise SchemaError(f"{path.name}: header {header} != {list(expected)}")
    columns: dict[str, list] = {h: [] for h in header}
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path.name}:{line}: {len(row)} cells, expected {len(header)}")
        for h, cell in zip(header, row):
            if h in TEXT_COLUMNS:
                columns[h].append(cell)
            else:
                columns[h].append(None if cell == "" else float(cell))
    return columns
