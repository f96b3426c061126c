import json
import logging
import math
import os
from typing import Any, Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd

from dsiscan.errors import InputValidationError
from dsiscan.schemas import HoldingsTable, ReturnSeries, ReturnsTable, SizeSample

logger = logging.getLogger(__name__)

SIZES_COLUMNS = ["entity_id", "size_usd"]
HOLDINGS_COLUMNS = ["entity_id", "asset_id", "weight", "market_cap_usd"]
RETURNS_COLUMNS = ["entity_id", "date", "return"]


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _read_table(path: str, columns: List[str]) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise InputValidationError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise InputValidationError(f"{path} is empty; expected header {','.join(columns)}")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputValidationError(f"malformed CSV {path}: {e}")

    if list(frame.columns) != columns:
        raise InputValidationError(
            f"{path}: header {','.join(frame.columns)} does not match {','.join(columns)}"
        )
    return frame


def _numbers(frame: pd.DataFrame, column: str, path: str, allow_empty: bool = False) -> np.ndarray:
    """Parse one column with Python's float() so values keep full precision."""
    values = np.empty(len(frame), dtype=float)
    for i, text in enumerate(frame[column]):
        text = text.strip()
        if allow_empty and text == "":
            values[i] = np.nan
            continue
        try:
            value = float(text)
        except ValueError:
            raise InputValidationError(f"malformed {column} {text!r} at row {i + 1} of {path}")
        if not math.isfinite(value):
            raise InputValidationError(f"non-finite {column} at row {i + 1} of {path}")
        values[i] = value
    return values


def _first_duplicate(keys: Sequence) -> int:
    seen = set()
    for i, key in enumerate(keys):
        if key in seen:
            return i
        seen.add(key)
    return -1


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def load_sizes(path: str, currency_label: str = "USD") -> SizeSample:
    frame = _read_table(path, SIZES_COLUMNS)
    ids = [e.strip() for e in frame["entity_id"]]
    sizes = _numbers(frame, "size_usd", path)

    bad = np.nonzero(sizes <= 0)[0]
    if bad.size:
        raise InputValidationError(f"nonpositive size at row {bad[0] + 1} of {path}")
    dup = _first_duplicate(ids)
    if dup >= 0:
        raise InputValidationError(f"duplicate entity_id {ids[dup]!r} at row {dup + 1} of {path}")

    sample = SizeSample(entity_ids=ids, sizes=sizes, currency_label=currency_label)
    logger.info("Loaded %d sizes from %s", sample.count, path)
    return sample


def load_holdings(path: str) -> HoldingsTable:
    frame = _read_table(path, HOLDINGS_COLUMNS)
    entities = [e.strip() for e in frame["entity_id"]]
    assets = [a.strip() for a in frame["asset_id"]]
    weights = _numbers(frame, "weight", path)
    caps = _numbers(frame, "market_cap_usd", path, allow_empty=True)

    bad = np.nonzero(weights < 0)[0]
    if bad.size:
        raise InputValidationError(f"negative weight at row {bad[0] + 1} of {path}")
    bad = np.nonzero(caps <= 0)[0]
    if bad.size:
        raise InputValidationError(f"nonpositive market cap at row {bad[0] + 1} of {path}")
    dup = _first_duplicate(list(zip(entities, assets)))
    if dup >= 0:
        raise InputValidationError(
            f"duplicate position ({entities[dup]}, {assets[dup]}) at row {dup + 1} of {path}"
        )

    table = HoldingsTable(entity_ids=entities, asset_ids=assets, weights=weights, market_caps=caps)
    sums = np.array(list(table.weight_sums().values()))
    logger.info(
        "Loaded %d positions for %d entities over %d assets from %s",
        table.position_count, len(sums), len(table.distinct_assets()), path,
    )
    if sums.size:
        logger.info("Per-entity weight sums range %.6g to %.6g", sums.min(), sums.max())
    missing = int(np.isnan(caps).sum())
    if missing:
        logger.warning("%d positions have no market cap", missing)
    return table


def load_returns(path: str) -> ReturnsTable:
    frame = _read_table(path, RETURNS_COLUMNS)
    frame["entity_id"] = frame["entity_id"].str.strip()
    dates = pd.to_datetime(frame["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    bad = np.nonzero(dates.isna().to_numpy())[0]
    if bad.size:
        raise InputValidationError(f"malformed date at row {bad[0] + 1} of {path}")
    returns = _numbers(frame, "return", path)
    bad = np.nonzero(returns <= -1)[0]
    if bad.size:
        raise InputValidationError(f"return <= -1 at row {bad[0] + 1} of {path}")

    parsed = pd.DataFrame(
        {"entity_id": frame["entity_id"], "date": dates.to_numpy(), "return": returns}
    )
    dup = parsed.duplicated(subset=["entity_id", "date"]).to_numpy()
    if dup.any():
        row = int(np.nonzero(dup)[0][0])
        raise InputValidationError(
            f"duplicate date for {parsed['entity_id'][row]} at row {row + 1} of {path}"
        )

    series: Dict[str, ReturnSeries] = {}
    for entity, group in parsed.groupby("entity_id", sort=True):
        group = group.sort_values("date", kind="mergesort")
        series[str(entity)] = ReturnSeries(
            dates=group["date"].to_numpy().astype("datetime64[D]"),
            returns=group["return"].to_numpy(),
        )
    logger.info("Loaded returns for %d entities (%d rows) from %s", len(series), len(parsed), path)
    return ReturnsTable(series=series)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_series_csv(path: str, columns: Mapping[str, Sequence[Any]]) -> None:
    """Write equal-length columns in the given order; NaN becomes an empty field."""
    _ensure_parent(path)
    frame = pd.DataFrame({name: list(values) for name, values in columns.items()})
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n", encoding="utf-8")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: str, obj: Any) -> None:
    _ensure_parent(path)
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")


def save_sizes(path: str, sample: SizeSample) -> None:
    write_series_csv(path, {"entity_id": sample.entity_ids, "size_usd": sample.sizes})


def save_holdings(path: str, table: HoldingsTable) -> None:
    write_series_csv(
        path,
        {
            "entity_id": table.entity_ids,
            "asset_id": table.asset_ids,
            "weight": table.weights,
            "market_cap_usd": table.market_caps,
        },
    )


def save_returns(path: str, table: ReturnsTable) -> None:
    entities, dates, returns = [], [], []
    for entity in sorted(table.series):
        s = table.series[entity]
        entities.extend([entity] * s.returns.size)
        dates.extend(str(d) for d in s.dates)
        returns.extend(s.returns.tolist())
    write_series_csv(path, {"entity_id": entities, "date": dates, "return": returns})
