import os
from pathlib import Path

import pytest

import mkvb

OUT = os.environ.get("MKVB_ACCEPTANCE_OUT")
pytestmark = pytest.mark.skipif(
    not OUT or not Path(OUT).is_dir(), reason="acceptance outputs not available"
)

EXPECTED = {
    "closed_forms.csv",
    "iterates.csv",
    "chaos.csv",
    "chaos_replicas.csv",
    "battery.csv",
    "variance.csv",
    "stability.csv",
}


def test_every_acceptance_table_is_present_and_well_formed():
    written = {p.name for p in Path(OUT).glob("*.csv")}
    assert EXPECTED <= written
    for name in written:
        mkvb.read_table(Path(OUT) / name)


def test_closed_form_means_sit_within_five_standard_errors():
    table = mkvb.read_table(Path(OUT) / "closed_forms.csv")
    for mean, se, analytic in zip(table["mean"], table["se"], table["analytic"]):
        assert abs(mean - analytic) < 5.0 * se


def test_stability_table_starts_with_the_zero_perturbation():
    table = mkvb.read_table(Path(OUT) / "stability.csv")
    assert table["eps"][0] == 0.0
    assert table["lhs"][0] == 0.0
    assert table["eps"][1:] == sorted(table["eps"][1:])


def test_battery_covers_both_systems():
    table = mkvb.read_table(Path(OUT) / "battery.csv")
    assert set(table["system"]) == {"frozen", "interacting"}
    assert len(table["z"]) == 16
