import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dsiscan import genmodel  # noqa: E402
from dsiscan.schemas import HoldingsTable, SizeSample  # noqa: E402


@pytest.fixture
def write_csv(tmp_path):
    """Write `text` to tmp_path/name and return the path."""

    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def lognormal_sample() -> SizeSample:
    return genmodel.sample_lognormal(18.7, 2.24, 479, seed=7)


@pytest.fixture
def three_entity_books():
    """a and b share asset X; c only holds Y."""
    sample = SizeSample(entity_ids=["a", "b", "c"], sizes=[5.0, 8.0, 50.0])
    holdings = HoldingsTable(
        entity_ids=["a", "b", "b", "c"],
        asset_ids=["X", "X", "Y", "Y"],
        weights=[1.0, 1.0, 1.0, 1.0],
        market_caps=[100.0, 100.0, 300.0, 300.0],
    )
    return sample, holdings
