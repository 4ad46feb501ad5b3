"""Deterministic data tools: synthesis, imputation, outliers, harmonization.

These are the numeric work-horses behind the data-pipeline agents.  They are
plain Python on purpose: given the same inputs (and seed, where one applies)
they return the same outputs on every platform, which the replay machinery
depends on.
"""

from __future__ import annotations

import logging
import math
import random
from collections import Counter, defaultdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .series import (
    FREQUENCIES,
    PERIODS_PER_YEAR,
    SeriesError,
    SeriesTable,
    format_period,
    parse_period,
)

logger = logging.getLogger(__name__)


class DataToolError(ValueError):
    pass


# ----------------------------------------------------------------- synthesis

def ar1_values(length: int, mean: float, ar1: float, noise_sd: float, seed: int) -> List[float]:
    """AR(1) draw: x_t = mean + ar1*(x_{t-1} - mean) + eps_t, eps ~ N(0, sd^2)."""
    if length < 1:
        raise DataToolError("length must be >= 1")
    if not -1.0 < ar1 < 1.0:
        raise DataToolError(f"ar1 must lie strictly inside (-1, 1), got {ar1}")
    if noise_sd < 0:
        raise DataToolError(f"noise_sd must be >= 0, got {noise_sd}")
    rng = random.Random(seed)
    values: List[float] = []
    prev = mean
    for _ in range(length):
        eps = rng.gauss(0.0, noise_sd) if noise_sd > 0 else 0.0
        x = mean + ar1 * (prev - mean) + eps
        values.append(x)
        prev = x
    return values


def generate_synthetic_series(
    length: int,
    mean: float,
    ar1: float,
    noise_sd: float,
    seed: int,
    frequency: str = "quarterly",
    start_year: int = 1990,
    column: str = "synthetic",
) -> SeriesTable:
    """Deterministic synthetic series with a proper period index."""
    if frequency not in FREQUENCIES:
        raise DataToolError(f"unknown frequency: {frequency!r}")
    per_year = PERIODS_PER_YEAR[frequency]
    index = [
        format_period(start_year + i // per_year, i % per_year + 1, frequency)
        for i in range(length)
    ]
    values = ar1_values(length, mean, ar1, noise_sd, seed)
    return SeriesTable(
        index=index,
        frequency=frequency,
        columns={column: values},
        provenance={column: f"synthetic(seed={seed})"},
    )


# ---------------------------------------------------------------- imputation

def impute_missing(values: Sequence[Optional[float]]) -> List[float]:
    """Fill gaps by linear interpolation; edges take the nearest observed value.

    At least two observed values are required — with fewer there is nothing
    to interpolate between.
    """
    observed = [(i, v) for i, v in enumerate(values) if v is not None]
    if len(observed) < 2:
        raise DataToolError(
            f"imputation needs at least 2 observed values, got {len(observed)}"
        )
    out: List[float] = [0.0] * len(values)
    first_i, first_v = observed[0]
    last_i, last_v = observed[-1]
    for i in range(len(values)):
        if values[i] is not None:
            out[i] = float(values[i])
        elif i < first_i:
            out[i] = float(first_v)
        elif i > last_i:
            out[i] = float(last_v)
    for (i0, v0), (i1, v1) in zip(observed, observed[1:]):
        span = i1 - i0
        for j in range(i0 + 1, i1):
            out[j] = v0 + (v1 - v0) * (j - i0) / span
    return out


# ------------------------------------------------------------------ outliers

def _quantile(sorted_values: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics (h = (n-1)q)."""
    n = len(sorted_values)
    h = (n - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return sorted_values[lo]
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * (h - lo)


def detect_outliers(
    values: Sequence[float],
    method: str = "zscore",
    threshold: float = 3.0,
    k: float = 1.5,
) -> List[int]:
    """Indices of outlying observations, sorted ascending.

    ``zscore``: |x - mean| / sd > threshold with the population sd; a constant
    series has sd = 0 and therefore no outliers.  ``iqr``: outside
    [q1 - k*iqr, q3 + k*iqr] with linearly interpolated quartiles.
    """
    if not values:
        raise DataToolError("series is empty")
    if any(v is None for v in values):
        raise DataToolError("series contains missing values; impute first")
    xs = [float(v) for v in values]
    if method == "zscore":
        n = len(xs)
        mean = sum(xs) / n
        var = sum((x - mean) ** 2 for x in xs) / n
        sd = math.sqrt(var)
        if sd == 0.0:
            return []
        return [i for i, x in enumerate(xs) if abs(x - mean) / sd > threshold]
    if method == "iqr":
        s = sorted(xs)
        q1 = _quantile(s, 0.25)
        q3 = _quantile(s, 0.75)
        spread = q3 - q1
        lo = q1 - k * spread
        hi = q3 + k * spread
        return [i for i, x in enumerate(xs) if x < lo or x > hi]
    raise DataToolError(f"unknown outlier method: {method!r}")


# ------------------------------------------------------------- harmonization

def _to_coarser(year: int, sub: int, src: str, dst: str) -> Tuple[int, int]:
    if src == "monthly" and dst == "quarterly":
        return year, (sub - 1) // 3 + 1
    if dst == "annual":
        return year, 1
    raise SeriesError(f"no coarsening path {src} -> {dst}")


def _to_finer(year: int, sub: int, src: str, dst: str) -> List[Tuple[int, int]]:
    if src == "annual" and dst == "quarterly":
        return [(year, q) for q in range(1, 5)]
    if src == "annual" and dst == "monthly":
        return [(year, m) for m in range(1, 13)]
    if src == "quarterly" and dst == "monthly":
        base = 3 * (sub - 1)
        return [(year, base + m) for m in range(1, 4)]
    raise SeriesError(f"no refinement path {src} -> {dst}")


def harmonize_merge(tables: Sequence[SeriesTable], target: str) -> SeriesTable:
    """Merge tables of mixed frequency onto one index at *target* frequency.

    Finer-than-target columns aggregate by mean over each target period;
    coarser columns repeat their value across the target sub-periods.  Column
    names colliding across tables get a ``.{source}`` suffix from the column's
    provenance tag (or ``src<n>`` by table position).
    """
    if not tables:
        raise DataToolError("no tables to merge")
    if target not in FREQUENCIES:
        raise DataToolError(f"unknown target frequency: {target!r}")

    name_counts = Counter(name for t in tables for name in t.columns)
    out_columns: Dict[str, Dict[Tuple[int, int], Optional[float]]] = {}
    out_provenance: Dict[str, str] = {}
    all_periods: set = set()

    for t_i, table in enumerate(tables):
        ratio = PERIODS_PER_YEAR[table.frequency] / PERIODS_PER_YEAR[target]
        periods = table.periods()
        for name, series in table.columns.items():
            tag = table.provenance.get(name) or f"src{t_i + 1}"
            out_name = f"{name}.{tag}" if name_counts[name] > 1 else name
            if out_name in out_columns:
                raise DataToolError(f"column name collision not resolved by tags: {out_name!r}")
            cell: Dict[Tuple[int, int], Optional[float]] = {}
            if ratio == 1.0:
                for (year, sub), v in zip(periods, series):
                    cell[(year, sub)] = v
            elif ratio > 1.0:
                groups: Dict[Tuple[int, int], List[float]] = defaultdict(list)
                seen: set = set()
                for (year, sub), v in zip(periods, series):
                    p = _to_coarser(year, sub, table.frequency, target)
                    seen.add(p)
                    if v is not None:
                        groups[p].append(v)
                for p in seen:
                    vals = groups.get(p, [])
                    cell[p] = sum(vals) / len(vals) if vals else None
            else:
                for (year, sub), v in zip(periods, series):
                    for p in _to_finer(year, sub, table.frequency, target):
                        cell[p] = v
            out_columns[out_name] = cell
            out_provenance[out_name] = tag
            all_periods.update(cell)

    index_periods = sorted(all_periods)
    index = [format_period(y, s, target) for y, s in index_periods]
    columns = {
        name: [cells.get(p) for p in index_periods] for name, cells in out_columns.items()
    }
    logger.debug("harmonized %d table(s) onto %d %s period(s)", len(tables), len(index), target)
    return SeriesTable(index=index, frequency=target, columns=columns, provenance=out_provenance)


# ------------------------------------------------------------------ features

def _growth_rate(series: Sequence[Optional[float]]) -> List[Optional[float]]:
    out: List[Optional[float]] = [None]
    for prev, cur in zip(series, series[1:]):
        if prev is None or cur is None or prev == 0:
            out.append(None)
        else:
            out.append((cur - prev) / prev)
    return out


def _moving_average(series: Sequence[Optional[float]], window: int) -> List[Optional[float]]:
    if window < 1:
        raise DataToolError("moving-average window must be >= 1")
    out: List[Optional[float]] = []
    for i in range(len(series)):
        if i + 1 < window:
            out.append(None)
            continue
        tail = series[i + 1 - window : i + 1]
        if any(v is None for v in tail):
            out.append(None)
        else:
            out.append(sum(tail) / window)
    return out


def _ratio(
    num: Sequence[Optional[float]], den: Sequence[Optional[float]]
) -> List[Optional[float]]:
    out: List[Optional[float]] = []
    for a, b in zip(num, den):
        if a is None or b is None or b == 0:
            out.append(None)
        else:
            out.append(a / b)
    return out


def derive_features(table: SeriesTable, recipes: Sequence[Dict[str, Any]]) -> SeriesTable:
    """Append derived columns described by *recipes*.

    Recipe shapes: ``{"op": "growth-rate", "column": c}``,
    ``{"op": "moving-average", "column": c, "window": w}``,
    ``{"op": "ratio", "numerator": a, "denominator": b}``.
    Undefined positions (leading values, zero denominators, missing inputs)
    come out as missing rather than raising.
    """
    columns: Dict[str, List[Optional[float]]] = {k: list(v) for k, v in table.columns.items()}
    provenance = dict(table.provenance)

    def _col(name: str) -> List[Optional[float]]:
        if name not in columns:
            raise DataToolError(f"unknown column: {name!r}")
        return columns[name]

    for recipe in recipes:
        op = recipe.get("op")
        if op == "growth-rate":
            src = recipe["column"]
            name = f"{src}_growth"
            derived = _growth_rate(_col(src))
        elif op == "moving-average":
            src = recipe["column"]
            window = int(recipe.get("window", 2))
            name = f"{src}_ma{window}"
            derived = _moving_average(_col(src), window)
        elif op == "ratio":
            num, den = recipe["numerator"], recipe["denominator"]
            name = f"{num}_over_{den}"
            derived = _ratio(_col(num), _col(den))
        else:
            raise DataToolError(f"unknown feature op: {op!r}")
        if name in columns:
            raise DataToolError(f"derived column {name!r} already exists")
        columns[name] = derived
        provenance[name] = f"derived:{op}"
    return SeriesTable(
        index=list(table.index),
        frequency=table.frequency,
        columns=columns,
        provenance=provenance,
    )


# ---------------------------------------------------------------- validation

def validate_table(table: SeriesTable, rules: Dict[str, Any]) -> Dict[str, Any]:
    """Check a table against quality rules; violations are data, not errors.

    Supported rules: ``max_missing_fraction`` (per column) and ``ranges``
    mapping column -> [lo, hi] inclusive bounds for observed values.
    """
    unknown = sorted(set(rules) - {"max_missing_fraction", "ranges"})
    if unknown:
        raise DataToolError(f"unknown rule(s): {', '.join(unknown)}")
    violations: List[Dict[str, Any]] = []
    fractions = {name: table.missing_fraction(name) for name in table.columns}
    limit = rules.get("max_missing_fraction")
    if limit is not None:
        for name, frac in fractions.items():
            if frac > limit:
                violations.append(
                    {
                        "rule": "max_missing_fraction",
                        "column": name,
                        "fraction": frac,
                        "limit": limit,
                    }
                )
    for name, bounds in (rules.get("ranges") or {}).items():
        if name not in table.columns:
            raise DataToolError(f"range rule targets unknown column {name!r}")
        lo, hi = bounds
        for label, value in zip(table.index, table.columns[name]):
            if value is None:
                continue
            if value < lo or value > hi:
                violations.append(
                    {"rule": "range", "column": name, "period": label, "value": value}
                )
    return {
        "passed": not violations,
        "missing_fractions": fractions,
        "violations": violations,
    }
