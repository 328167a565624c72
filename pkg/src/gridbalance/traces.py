"""Half-hourly time series: CSV ingestion, resampling, synthesis and alignment.

Capacity-factor traces are dimensionless in [0, 1]; demand traces are in GW.
Every series that reaches the simulator has a 30 minute step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HALF_HOUR = timedelta(minutes=30)
INTERVALS_PER_DAY = 48
DT_HOURS = 0.5

#: Capacity factors up to ``1 + CF_CLAMP_TOLERANCE`` are clamped to 1;
#: anything larger is treated as a unit mistake.
CF_CLAMP_TOLERANCE = 0.05


class TraceError(ValueError):
    """Raised for malformed, misaligned or missing trace data."""


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An equally spaced series starting at ``start``."""

    name: str
    start: datetime
    step: timedelta
    values: np.ndarray
    clamped: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def step_minutes(self) -> float:
        return self.step.total_seconds() / 60.0

    def timestamps(self) -> np.ndarray:
        """Interval start times as ``datetime64[m]``."""
        start = np.datetime64(self.start, "m")
        step = np.timedelta64(int(round(self.step_minutes)), "m")
        return start + np.arange(len(self.values)) * step

    def mean(self) -> float:
        return float(self.values.mean()) if len(self.values) else 0.0

    def with_values(self, values, name: str | None = None) -> "TimeSeries":
        return TimeSeries(name or self.name, self.start, self.step, values)


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Aligned traces sharing start, step and length."""

    series: dict = field(default_factory=dict)
    start: datetime | None = None
    horizon: int = 0

    def __contains__(self, trace_id):
        return trace_id in self.series

    def __getitem__(self, trace_id) -> TimeSeries:
        try:
            return self.series[trace_id]
        except KeyError:
            raise TraceError(f"unknown trace id {trace_id!r}") from None

    def ids(self):
        return list(self.series)

    def timestamps(self) -> np.ndarray:
        first = next(iter(self.series.values()))
        return first.timestamps()

    def year_index(self) -> np.ndarray:
        """Calendar year of every interval (int array)."""
        years = self.timestamps().astype("datetime64[Y]").astype(int) + 1970
        return years.astype(np.int64)


def interval_count(first_day: date, last_day: date) -> int:
    """Number of half-hour intervals from ``first_day`` to ``last_day`` inclusive.

    >>> interval_count(date(2020, 1, 1), date(2029, 12, 31))
    175344
    """
    days = (last_day - first_day).days + 1
    if days <= 0:
        raise ValueError("last_day precedes first_day")
    return days * INTERVALS_PER_DAY


def calendar_years(timestamps: np.ndarray) -> np.ndarray:
    return timestamps.astype("datetime64[Y]").astype(int) + 1970


def year_fraction(timestamps: np.ndarray) -> float:
    """Elapsed calendar years covered by the intervals (leap years weigh 1)."""
    if len(timestamps) == 0:
        return 0.0
    years = calendar_years(timestamps)
    total = 0.0
    for year in np.unique(years):
        n = int((years == year).sum())
        per_year = (366 if _is_leap(int(year)) else 365) * INTERVALS_PER_DAY
        total += n / per_year
    return total


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise TraceError(f"{path}: file not found") from None
    if frame.shape[1] < 2:
        raise TraceError(f"{path}: expected a timestamp column and at least one series")
    return frame


def _parse_timestamps(path: Path, column: pd.Series) -> pd.DatetimeIndex:
    stamps = pd.to_datetime(column, errors="coerce")
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if len(bad):
        row = int(bad[0]) + 2
        raise TraceError(f"{path}: row {row}: unparseable timestamp {column.iloc[bad[0]]!r}")
    return pd.DatetimeIndex(stamps)


def load_trace_csv(path, column: str, kind: str = "cf") -> TimeSeries:
    """Load one named column of a half-hourly CSV file.

    ``kind`` is ``"cf"`` for capacity factors (validated to [0, 1] and
    clamped above 1 within tolerance) or ``"power"`` for GW series.
    """
    return load_trace_file(path, {column: kind})[0]


def load_trace_file(path, columns: dict) -> list[TimeSeries]:
    """Load several columns (``{name: kind}``) of one CSV, parsing it once."""
    path = Path(path)
    frame = _read_frame(path)
    for column, kind in columns.items():
        if column not in frame.columns[1:]:
            raise TraceError(f"{path}: column {column!r} not found")
        if kind not in ("cf", "power"):
            raise ValueError(f"unknown trace kind {kind!r}")
    stamps = _parse_timestamps(path, frame.iloc[:, 0])
    if len(stamps) == 0:
        raise TraceError(f"{path}: no data rows")
    step_min = 30.0
    if len(stamps) > 1:
        deltas = np.diff(stamps.asi8) / 60e9
        if np.any(deltas <= 0):
            row = int(np.flatnonzero(deltas <= 0)[0]) + 3
            raise TraceError(f"{path}: row {row}: timestamps not strictly increasing")
        step_min = deltas[0]
        gaps = np.flatnonzero(deltas != step_min)
        if len(gaps):
            where = stamps[gaps[0]]
            raise TraceError(f"{path}: gap in timestamps after {where.isoformat()} (row {int(gaps[0]) + 2})")
        if step_min != 30:
            raise TraceError(f"{path}: step is {step_min:g} min, expected 30 (resample first)")

    out = []
    for column, kind in columns.items():
        raw = frame[column]
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if len(bad):
            row = int(bad[0]) + 2
            raise TraceError(f"{path}: row {row}: non-numeric value {raw.iloc[bad[0]]!r} in {column!r}")
        clamped = 0
        if kind == "cf":
            if np.any(values < 0):
                row = int(np.flatnonzero(values < 0)[0]) + 2
                raise TraceError(f"{path}: row {row}: negative capacity factor in {column!r}")
            over = np.flatnonzero(values > 1.0 + CF_CLAMP_TOLERANCE)
            if len(over):
                raise TraceError(
                    f"{path}: row {int(over[0]) + 2}: capacity factor {values[over[0]]:g} in {column!r} "
                    f"exceeds 1+{CF_CLAMP_TOLERANCE:g}"
                )
            clamped = int((values > 1.0).sum())
            if clamped:
                logger.warning("%s: clamped %d capacity factor values in %r to 1.0", path, clamped, column)
                values = np.minimum(values, 1.0)
        out.append(TimeSeries(column, stamps[0].to_pydatetime(), timedelta(minutes=step_min), values, clamped=clamped))
    return out


def csv_columns(path) -> list[str]:
    return list(_read_frame(Path(path)).columns[1:])


def resample_half_hourly(ts: TimeSeries) -> TimeSeries:
    """Linearly interpolate a coarser series onto 30 minute steps.

    The output has ``k * n`` points for a step of ``k * 30`` minutes: the
    ``k*(n-1) + 1`` interpolated points followed by the final value repeated.
    """
    minutes = ts.step_minutes
    k = minutes / 30.0
    if k < 1 or abs(k - round(k)) > 1e-9:
        raise TraceError(f"{ts.name}: step of {minutes:g} min is not a multiple of 30 min")
    k = int(round(k))
    if k == 1:
        return ts
    n = len(ts.values)
    if n == 0:
        return TimeSeries(ts.name, ts.start, HALF_HOUR, [])
    fine = np.interp(np.arange(k * (n - 1) + 1) / k, np.arange(n), ts.values)
    fine = np.concatenate([fine, np.full(k - 1, ts.values[-1])])
    return TimeSeries(ts.name, ts.start, HALF_HOUR, fine)


def align(traces: Sequence[TimeSeries]) -> TraceSet:
    """Check that traces share start, step and length and bundle them."""
    if not traces:
        raise TraceError("no traces")
    first = traces[0]
    series = {}
    for ts in traces:
        if ts.name in series:
            raise TraceError(f"duplicate trace id {ts.name!r}")
        if ts.step != first.step:
            raise TraceError(f"trace {ts.name!r}: step {ts.step_minutes:g} min differs from {first.step_minutes:g} min")
        if ts.start != first.start:
            raise TraceError(f"trace {ts.name!r}: starts at {ts.start} but {first.name!r} starts at {first.start}")
        if len(ts) != len(first):
            raise TraceError(f"trace {ts.name!r}: length {len(ts)} differs from {len(first)} ({first.name!r})")
        series[ts.name] = ts
    return TraceSet(series=series, start=first.start, horizon=len(first))


def _daily_positions(start: datetime, horizon: int):
    stamps = np.datetime64(start, "m") + np.arange(horizon) * np.timedelta64(30, "m")
    days = stamps.astype("datetime64[D]")
    hour = (stamps - days).astype(int) / 60.0
    day_of_year = (days - stamps.astype("datetime64[Y]")).astype(int)
    ordinal = (days - days[0]).astype(int) if horizon else np.zeros(0, dtype=int)
    return hour, day_of_year, ordinal


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance AR(1) noise."""
    shocks = rng.standard_normal(n) * np.sqrt(1.0 - phi * phi)
    out = np.empty(n)
    acc = rng.standard_normal()
    for i in range(n):
        acc = phi * acc + shocks[i]
        out[i] = acc
    return out


def _rescale_mean(raw: np.ndarray, target: float, mask: np.ndarray | None = None) -> np.ndarray:
    """Scale ``raw`` (clipped to [0, 1]) so that its mean hits ``target``."""
    if target <= 0:
        return np.zeros_like(raw)
    values = np.clip(raw, 0.0, None)
    scale = 1.0
    for _ in range(60):
        out = np.clip(values * scale, 0.0, 1.0)
        mean = out.mean()
        if mean <= 0:
            break
        if abs(mean - target) < 1e-9:
            break
        scale *= target / mean
    out = np.clip(values * scale, 0.0, 1.0)
    if mask is not None:
        out[~mask] = 0.0
    return out


def synth_trace(
    kind: str,
    seed: int,
    horizon: int,
    mean_cf: float,
    diurnal_amplitude: float = 0.3,
    noise: float = 0.3,
    *,
    start: datetime = datetime(2021, 1, 1),
    name: str | None = None,
    scale: float = 1.0,
    daylight: tuple[float, float] = (6.0, 18.0),
    latent: np.ndarray | None = None,
) -> TimeSeries:
    """Deterministic synthetic half-hourly trace.

    ``solar`` is a clear-sky bell over the daylight window modulated by
    day-to-day cloudiness; ``wind`` is a slowly varying AR(1) process with a
    diurnal ripple; ``demand`` has morning and evening peaks and its values
    are multiplied by ``scale`` (GW). ``latent`` (unit-variance, length
    ``horizon``) replaces the wind's own weather driver so several traces can
    share, or oppose, the same weather.
    """
    if not 0.0 <= mean_cf <= 1.0:
        raise ValueError("mean_cf must be in [0, 1]")
    rng = np.random.default_rng(seed)
    hour, day, ordinal = _daily_positions(start, horizon)
    name = name or f"{kind}_{seed}"

    if kind == "solar":
        lo, hi = daylight
        mid = hour + 0.25
        mask = (mid > lo) & (mid < hi)
        bell = np.where(mask, np.sin(np.pi * (mid - lo) / (hi - lo)), 0.0)
        raw = np.where(mask, (1.0 - diurnal_amplitude) + diurnal_amplitude * bell, 0.0)
        raw = raw * (1.0 + 0.15 * np.cos(2 * np.pi * (day - 172) / 365.0))
        if noise and horizon:
            cloud = 1.0 + noise * _ar1(rng, int(ordinal.max()) + 1, 0.6)
            raw = raw * np.clip(cloud, 0.05, None)[ordinal]
        values = _rescale_mean(raw, mean_cf, mask)
    elif kind == "wind":
        driver = latent if latent is not None else _ar1(rng, horizon, 0.995)
        ripple = diurnal_amplitude * np.cos(2 * np.pi * (hour - 3.0) / 24.0)
        fast = noise * 0.3 * rng.standard_normal(horizon) if noise else 0.0
        raw = 1.0 + noise * driver + ripple * 0.5 + fast
        if noise == 0 and diurnal_amplitude == 0:
            raw = np.ones(horizon)
        values = _rescale_mean(np.clip(raw, 0.0, None), mean_cf)
    elif kind == "demand":
        shape = (
            1.0
            + diurnal_amplitude * 0.6 * np.exp(-0.5 * ((hour - 8.0) / 1.5) ** 2)
            + diurnal_amplitude * np.exp(-0.5 * ((hour - 18.5) / 2.0) ** 2)
            - diurnal_amplitude * 0.5 * np.exp(-0.5 * ((hour - 3.5) / 2.5) ** 2)
        )
        season = 1.0 + 0.08 * np.cos(2 * np.pi * (day - 190) / 365.0)
        wobble = 1.0 + noise * 0.1 * _ar1(rng, horizon, 0.98) if noise else 1.0
        raw = shape * season * wobble
        if noise == 0 and diurnal_amplitude == 0:
            raw = np.ones(horizon)
        values = raw / raw.mean() * mean_cf * scale if horizon else raw
        return TimeSeries(name, start, HALF_HOUR, values)
    else:
        raise ValueError(f"unknown trace kind {kind!r}")
    return TimeSeries(name, start, HALF_HOUR, values * scale)


def write_trace_csv(path, traces: Sequence[TimeSeries], decimals: int = 5) -> None:
    """Write aligned traces as a timestamped CSV."""
    ts = align(traces)
    stamps = pd.DatetimeIndex(ts.timestamps()).strftime("%Y-%m-%dT%H:%M")
    frame = pd.DataFrame({t.name: np.round(t.values, decimals) for t in traces})
    frame.insert(0, "timestamp", stamps)
    frame.to_csv(path, index=False, float_format=f"%.{decimals}f", lineterminator="\n")
