"""File formats: universe.json, market.json, portfolio.csv, scenarios.csv,
features.csv, plus the result/trajectory outputs.

Serialization is canonical (sorted JSON keys, shortest-round-trip floats,
"\\n" newlines) so that save(load(f)) is byte-identical for files produced
by this module.  Monetary fields are converted to EUR while loading
market.json; saved market files are always in the converted form with unit
FX factors.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .features import FeatureTable
from .instruments import (
    Category,
    CurrencyMarket,
    MarketData,
    Portfolio,
    ScenarioSet,
    UnderlyingMarket,
    UnderlyingSpec,
)

PathLike = Union[str, Path]


class SchemaError(ValueError):
    """A malformed input file; the message names the file and offending field/line."""

    def __init__(self, path: PathLike, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = str(path)
        self.detail = detail


def _write_text(path: PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# universe.json
# ---------------------------------------------------------------------------


def save_universe(specs: Sequence[UnderlyingSpec], path: PathLike) -> None:
    payload = []
    for s in specs:
        payload.append({
            "ticker": s.ticker,
            "category": s.category.value,
            "tenor_domain": list(s.tenor_domain),
            "option_notional_bound": s.option_notional_bound,
            "linear_notional_bound": s.linear_notional_bound,
            "spot_spread": s.spot_spread,
            "futures_spread": s.futures_spread,
            "vol_spread_by_strike": {f"{k:.2f}": v for k, v in sorted(s.vol_spread_by_strike.items())},
        })
    _write_text(path, _json_dumps(payload))


def load_universe(path: PathLike) -> list[UnderlyingSpec]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError(path, "expected a JSON array of underlying specs")
    specs = []
    for i, entry in enumerate(raw):
        try:
            specs.append(UnderlyingSpec(
                ticker=entry["ticker"],
                category=Category(entry["category"]),
                tenor_domain=tuple(int(t) for t in entry["tenor_domain"]),
                option_notional_bound=entry.get("option_notional_bound"),
                linear_notional_bound=entry.get("linear_notional_bound"),
                spot_spread=float(entry.get("spot_spread", 0.0)),
                futures_spread=float(entry.get("futures_spread", 0.0)),
                vol_spread_by_strike={float(k): float(v) for k, v in entry.get("vol_spread_by_strike", {}).items()},
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(path, f"entry {i}: {exc}") from exc
    return specs


# ---------------------------------------------------------------------------
# market.json
# ---------------------------------------------------------------------------


def save_market(market: MarketData, path: PathLike) -> None:
    underlyings = {}
    for ticker, u in sorted(market.underlyings.items()):
        if isinstance(u.vol, Mapping):
            nested: dict[str, dict[str, float]] = {}
            for (strike, tenor), value in sorted(u.vol.items()):
                nested.setdefault(f"{strike:.2f}", {})[f"{tenor:03d}"] = value
            vol: Union[float, dict] = nested
        else:
            vol = u.vol
        underlyings[ticker] = {
            "spot": u.spot,
            "vol": vol,
            "div_yield": u.div_yield,
            "currency": u.currency,
            "spot_spread": u.spot_spread,
            "futures_spread": u.futures_spread,
            "vol_spread_by_strike": {f"{k:.2f}": v for k, v in sorted(u.vol_spread_by_strike.items())},
        }
    currencies = {
        ccy: {"rate": c.rate, "fx_eur": 1.0} for ccy, c in sorted(market.currencies.items())
    }
    _write_text(path, _json_dumps({"underlyings": underlyings, "currencies": currencies}))


def load_market(path: PathLike) -> MarketData:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"invalid JSON: {exc}") from exc
    try:
        currencies = {
            ccy: CurrencyMarket(rate=float(entry["rate"]), fx_eur=float(entry.get("fx_eur", 1.0)))
            for ccy, entry in raw["currencies"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(path, f"currencies: {exc}") from exc

    underlyings = {}
    for ticker, entry in raw.get("underlyings", {}).items():
        try:
            ccy = entry["currency"]
            if ccy not in currencies:
                raise SchemaError(path, f"{ticker}: unknown currency {ccy!r}")
            fx = currencies[ccy].fx_eur
            vol = entry["vol"]
            if isinstance(vol, Mapping):
                vol = {
                    (float(strike), int(tenor)): float(v)
                    for strike, by_tenor in vol.items()
                    for tenor, v in by_tenor.items()
                }
            else:
                vol = float(vol)
            underlyings[ticker] = UnderlyingMarket(
                spot=float(entry["spot"]) * fx,
                vol=vol,
                div_yield=float(entry.get("div_yield", 0.0)),
                currency=ccy,
                spot_spread=float(entry.get("spot_spread", 0.0)),
                futures_spread=float(entry.get("futures_spread", 0.0)) * fx,
                vol_spread_by_strike={float(k): float(v) for k, v in entry.get("vol_spread_by_strike", {}).items()},
            )
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(path, f"{ticker}: {exc}") from exc
    # All monetary values are EUR now; record the conversion as applied.
    converted = {ccy: CurrencyMarket(rate=c.rate, fx_eur=1.0) for ccy, c in currencies.items()}
    return MarketData(underlyings, converted)


# ---------------------------------------------------------------------------
# portfolio.csv
# ---------------------------------------------------------------------------


def save_portfolio(portfolio: Portfolio, path: PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["instrument_id", "notional"])
    for instrument_id, notional in portfolio.legs:
        writer.writerow([instrument_id, notional])
    _write_text(path, buf.getvalue())


def load_portfolio(path: PathLike) -> Portfolio:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["instrument_id", "notional"]:
            raise SchemaError(path, f"expected header instrument_id,notional, got {header}")
        legs = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(path, f"line {line_no}: expected 2 fields, got {len(row)}")
            try:
                legs.append((row[0], int(row[1])))
            except ValueError as exc:
                raise SchemaError(path, f"line {line_no}: notional must be an integer: {exc}") from exc
    return Portfolio.from_pairs(legs)


# ---------------------------------------------------------------------------
# scenarios.csv
# ---------------------------------------------------------------------------


def save_scenarios(scenarios: ScenarioSet, path: PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header: list[str] = []
    for t in scenarios.tickers:
        header += [f"{t}_ret", f"{t}_volshift"]
    header += [f"{c}_rateshift" for c in scenarios.currencies]
    writer.writerow(header)
    for i in range(scenarios.count):
        row: list[float] = []
        for j in range(len(scenarios.tickers)):
            row += [repr(float(scenarios.spot_returns[i, j])), repr(float(scenarios.vol_shifts[i, j]))]
        row += [repr(float(scenarios.rate_shifts[i, j])) for j in range(len(scenarios.currencies))]
        writer.writerow(row)
    _write_text(path, buf.getvalue())


def load_scenarios(path: PathLike) -> ScenarioSet:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise SchemaError(path, "missing header row")
        tickers = [c[: -len("_ret")] for c in header if c.endswith("_ret")]
        currencies = [c[: -len("_rateshift")] for c in header if c.endswith("_rateshift")]
        if not tickers:
            raise SchemaError(path, "no <ticker>_ret columns found")
        expected = [f"{t}_{kind}" for t in tickers for kind in ("ret", "volshift")]
        expected += [f"{c}_rateshift" for c in currencies]
        missing = sorted(set(expected) - set(header))
        if missing:
            raise SchemaError(path, f"missing column {missing[0]}")
        if list(header) != expected:
            raise SchemaError(path, f"unexpected column layout: {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(path, f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(path, f"line {line_no}: {exc}") from exc
    if not rows:
        raise SchemaError(path, "scenario file has no data rows")
    data = np.array(rows)
    u = len(tickers)
    spot = data[:, 0: 2 * u: 2]
    vol = data[:, 1: 2 * u: 2]
    rates = data[:, 2 * u:]
    return ScenarioSet(tuple(tickers), tuple(currencies), spot, vol, rates)


# ---------------------------------------------------------------------------
# features.csv (debug/report export)
# ---------------------------------------------------------------------------


def save_features(table: FeatureTable, path: PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    s = table.scenario_count
    writer.writerow(["instrument_id", "value", "delta", "vega", "gamma", "unit_cost"]
                    + [f"pnl_{i + 1}" for i in range(s)])
    for instrument_id in table.ids():
        f = table[instrument_id]
        writer.writerow(
            [instrument_id, repr(f.value), repr(f.delta), repr(f.vega), repr(f.gamma), repr(f.unit_cost)]
            + [repr(float(x)) for x in f.pnl]
        )
    _write_text(path, buf.getvalue())
