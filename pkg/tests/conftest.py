import json
from pathlib import Path

import pytest

from enrolcast.timebase import AnnualSeries, Point

FIXTURES = Path(__file__).parent / "fixtures"


def series(values, start=2007, series_id="s", unit="", vintages=None):
    """Build an AnnualSeries from a list of values (None = missing)."""
    pts = []
    for i, v in enumerate(values):
        year = start + i
        vintage = vintages[i] if vintages is not None else year
        pts.append(Point(year=year, value=v, vintage=vintage))
    return AnnualSeries(id=series_id, unit=unit, points=tuple(pts))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def model_columns():
    with open(FIXTURES / "institution_model_columns.json") as fh:
        cols = json.load(fh)
    return {name: {int(y): v for y, v in col.items()} for name, col in cols.items()}


@pytest.fixture
def evidence_pack():
    from enrolcast import ioci

    return ioci.parse_evidence_json((FIXTURES / "institution_evidence.json").read_text())


@pytest.fixture
def calibrated_reference():
    from enrolcast import ioci

    return ioci.parse_reference((FIXTURES / "institution_reference.json").read_text())


@pytest.fixture
def primary_baselines():
    from enrolcast import ioci

    return ioci.parse_baselines((FIXTURES / "institution_baselines_primary.json").read_text())
