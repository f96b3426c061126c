import json
import math

import numpy as np
import pytest

from dsiscan import dataio
from dsiscan.errors import InputValidationError
from dsiscan.schemas import HoldingsTable, ReturnSeries, ReturnsTable


def test_load_sizes(write_csv):
    path = write_csv("sizes.csv", "entity_id,size_usd\nA,1.5e9\nB,2000000\n")
    sample = dataio.load_sizes(path)
    assert sample.entity_ids == ["A", "B"]
    assert sample.sizes.tolist() == [1.5e9, 2e6]


def test_load_sizes_header_mismatch(write_csv):
    path = write_csv("sizes.csv", "entity,size\nA,1\n")
    with pytest.raises(InputValidationError, match="header"):
        dataio.load_sizes(path)


def test_load_sizes_nonpositive_size_names_row(write_csv):
    path = write_csv("sizes.csv", "entity_id,size_usd\nA,10\nB,0\n")
    with pytest.raises(InputValidationError, match="row 2"):
        dataio.load_sizes(path)


def test_load_sizes_duplicate_entity(write_csv):
    path = write_csv("sizes.csv", "entity_id,size_usd\nA,10\nA,20\n")
    with pytest.raises(InputValidationError, match="duplicate"):
        dataio.load_sizes(path)


def test_load_sizes_missing_file(tmp_path):
    with pytest.raises(InputValidationError, match="not found"):
        dataio.load_sizes(str(tmp_path / "nope.csv"))


def test_load_holdings_missing_cap_is_nan(write_csv):
    path = write_csv(
        "holdings.csv",
        "entity_id,asset_id,weight,market_cap_usd\nF1,X,0.6,1e9\nF1,Y,0.4,\nF2,X,1.0,1e9\n",
    )
    table = dataio.load_holdings(path)
    assert table.position_count == 3
    assert math.isnan(table.market_caps[1])
    assert table.asset_caps() == {"X": 1e9}
    assert table.weight_sums() == {"F1": 1.0, "F2": 1.0}


def test_load_holdings_negative_weight(write_csv):
    path = write_csv("holdings.csv", "entity_id,asset_id,weight,market_cap_usd\nF1,X,-0.1,1e9\n")
    with pytest.raises(InputValidationError, match="negative weight at row 1"):
        dataio.load_holdings(path)


def test_load_returns_sorted_by_date(write_csv):
    path = write_csv(
        "returns.csv",
        "entity_id,date,return\nF1,2014-01-03,0.02\nF1,2014-01-02,0.01\nF2,2014-01-02,-0.5\n",
    )
    table = dataio.load_returns(path)
    assert sorted(table.series) == ["F1", "F2"]
    assert table.series["F1"].returns.tolist() == [0.01, 0.02]
    assert str(table.series["F1"].dates[0]) == "2014-01-02"


def test_load_returns_rejects_total_loss(write_csv):
    path = write_csv("returns.csv", "entity_id,date,return\nF1,2014-01-02,-1\n")
    with pytest.raises(InputValidationError, match="row 1"):
        dataio.load_returns(path)


def test_load_returns_rejects_bad_date(write_csv):
    path = write_csv("returns.csv", "entity_id,date,return\nF1,02/01/2014,0.1\n")
    with pytest.raises(InputValidationError, match="malformed date"):
        dataio.load_returns(path)


def test_sizes_survive_save_and_load(tmp_path, lognormal_sample):
    path = str(tmp_path / "sizes.csv")
    dataio.save_sizes(path, lognormal_sample)
    again = dataio.load_sizes(path)
    assert again.entity_ids == lognormal_sample.entity_ids
    assert np.array_equal(again.sizes, lognormal_sample.sizes)


def test_holdings_survive_save_and_load(tmp_path):
    table = HoldingsTable(
        entity_ids=["F1", "F1", "F2"],
        asset_ids=["X", "Y", "X"],
        weights=[0.6, 0.4, 1.0],
        market_caps=[1.25e9, np.nan, 1.25e9],
    )
    path = str(tmp_path / "holdings.csv")
    dataio.save_holdings(path, table)
    again = dataio.load_holdings(path)
    assert again.entity_ids == table.entity_ids
    assert again.asset_ids == table.asset_ids
    assert np.array_equal(again.weights, table.weights)
    assert np.array_equal(again.market_caps, table.market_caps, equal_nan=True)


def test_returns_survive_save_and_load(tmp_path):
    days = np.array(["2014-01-02", "2014-01-03", "2014-01-06"], dtype="datetime64[D]")
    table = ReturnsTable(
        series={
            "F2": ReturnSeries(dates=days[:2], returns=[0.01, -0.02]),
            "F1": ReturnSeries(dates=days, returns=[0.003, 0.0, 0.125]),
        }
    )
    path = str(tmp_path / "returns.csv")
    dataio.save_returns(path, table)
    again = dataio.load_returns(path)
    assert sorted(again.series) == ["F1", "F2"]
    for entity, series in table.series.items():
        assert np.array_equal(again.series[entity].dates, series.dates)
        assert np.array_equal(again.series[entity].returns, series.returns)


def test_write_json_sorted_and_nan_as_null(tmp_path):
    path = tmp_path / "out.json"
    dataio.write_json(str(path), {"b": np.float64("nan"), "a": np.arange(2)})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1], "b": None}
