"""Price ingestion and return panels.

Prices come from a CSV whose first column is an ISO-8601 ``date`` and whose
remaining columns are asset tickers. Any row with a missing price is dropped
(listwise deletion) and counted.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "PricePanel",
    "ReturnPanel",
    "load_prices",
    "to_returns",
    "accumulate_uncompounded",
]


class DataError(ValueError):
    """Raised for malformed or inadmissible price data."""


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    prices: np.ndarray
    dropped: int = 0

    def __post_init__(self) -> None:
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.assets)):
            raise DataError("price matrix shape does not match dates x assets")
        if not np.all(np.isfinite(prices)):
            raise DataError("non-finite price")
        if np.any(prices <= 0):
            raise DataError("non-positive price")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @property
    def T(self) -> int:
        return self.prices.shape[0]

    @property
    def N(self) -> int:
        return self.prices.shape[1]

    def select(self, assets: Sequence[str]) -> "PricePanel":
        idx = [self.assets.index(a) for a in assets]
        return PricePanel(self.dates, tuple(assets), self.prices[:, idx], self.dropped)


@dataclass(frozen=True)
class ReturnPanel:
    """Simple per-period returns; ``dates[t]`` is the date the return is realized."""

    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    returns: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        r = np.asarray(self.returns, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        if r.shape != (len(self.dates), len(self.assets)):
            raise DataError("return matrix shape does not match dates x assets")
        if not np.all(np.isfinite(r)) or np.any(r <= -1.0):
            raise DataError("returns must be finite and greater than -1")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def N(self) -> int:
        return self.returns.shape[1]

    def column(self, asset: str) -> np.ndarray:
        return self.returns[:, self.assets.index(asset)]

    def window(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(self.dates[start:stop], self.assets, self.returns[start:stop])

    def select(self, assets: Sequence[str]) -> "ReturnPanel":
        idx = [self.assets.index(a) for a in assets]
        return ReturnPanel(self.dates, tuple(assets), self.returns[:, idx])


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if cell == "" or cell.lower() in {"na", "nan", "null", "none"}:
        return None
    try:
        value = float(cell)
    except ValueError as exc:
        raise DataError(f"unparseable price {cell!r}") from exc
    return None if np.isnan(value) else value


def load_prices(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    date_column: str = "date",
) -> PricePanel:
    """Read an adjusted-close CSV into a :class:`PricePanel`.

    Parameters
    ----------
    path : str or Path
        CSV file, UTF-8, header row, ``.`` decimal point.
    schema : mapping, optional
        Maps CSV column names to asset identifiers. When given, only these
        columns are read (in mapping order). Otherwise every non-date column
        is an asset named by its header.
    date_column : str
        Name of the ISO-8601 date column.

    Returns
    -------
    PricePanel
        Rows sorted by date; ``dropped`` counts rows discarded for missing
        prices.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if date_column not in header:
        raise DataError(f"missing date column {date_column!r}")
    date_idx = header.index(date_column)
    if schema is None:
        cols = [i for i, h in enumerate(header) if i != date_idx]
        names = [header[i] for i in cols]
    else:
        missing = [c for c in schema if c not in header]
        if missing:
            raise DataError(f"columns not found: {missing}")
        cols = [header.index(c) for c in schema]
        names = list(schema.values())
    if not cols:
        raise DataError("no price columns")

    records: list[tuple[dt.date, list[float]]] = []
    dropped = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        try:
            date = dt.date.fromisoformat(row[date_idx].strip())
        except ValueError as exc:
            raise DataError(f"line {lineno}: bad date {row[date_idx]!r}") from exc
        values = [_parse_float(row[i]) for i in cols]
        if any(v is None for v in values):
            dropped += 1
            continue
        if any(v <= 0 for v in values):  # type: ignore[operator]
            raise DataError(f"line {lineno}: non-positive price")
        records.append((date, values))  # type: ignore[arg-type]

    records.sort(key=lambda rec: rec[0])
    dates = [d for d, _ in records]
    if len(set(dates)) != len(dates):
        raise DataError("duplicate dates")
    if len(records) < 2:
        raise DataError("fewer than 2 usable rows")
    prices = np.array([v for _, v in records], dtype=float)
    return PricePanel(tuple(dates), tuple(names), prices, dropped)


def to_returns(panel: PricePanel) -> ReturnPanel:
    """Simple returns ``P_t / P_{t-1} - 1``, one row shorter than the prices."""
    if panel.T < 2:
        raise DataError("need at least two price rows")
    p = panel.prices
    r = (p[1:] - p[:-1]) / p[:-1]
    return ReturnPanel(panel.dates[1:], panel.assets, r)


def accumulate_uncompounded(returns, axis: int = 0) -> np.ndarray:
    """Prefix sums of simple returns along ``axis`` (the time axis).

    Accepts a :class:`ReturnPanel`, a plain array, or a simulated path/cube.
    """
    if isinstance(returns, ReturnPanel):
        returns = returns.returns
    return np.cumsum(np.asarray(returns, dtype=float), axis=axis)
