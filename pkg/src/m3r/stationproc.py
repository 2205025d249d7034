"""Personal weather station (PWS) cleaning: gap filling and physical validation.

Fill order is continuous variables, then wind, then precipitation, then
validation (see :func:`process_station`).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import FormatError, LengthMismatch, NegativeSpeed, TooFewKnots

log = logging.getLogger(__name__)

VARIABLES = (
    "temp_max", "temp_min", "temp_avg",
    "humidity_max", "humidity_min", "humidity_avg",
    "dewpoint_max", "dewpoint_min", "dewpoint_avg",
    "pressure_max", "pressure_min", "pressure_trend",
    "wind_dir_avg",
    "wind_speed_max", "wind_speed_min", "wind_speed_avg",
    "wind_gust_max", "wind_gust_min", "wind_gust_avg",
    "precip_rate",
)  # fmt: skip
PRECIP = "precip_rate"
PRECIP_INDEX = VARIABLES.index(PRECIP)

CONTINUOUS = VARIABLES[:12]
# spline-filled then clipped at zero; wind_speed_avg is filled through the vector path
NONNEGATIVE_WIND = ("wind_speed_max", "wind_speed_min", "wind_gust_max", "wind_gust_min", "wind_gust_avg")

TRIPLES = {
    "temp": ("temp_max", "temp_avg", "temp_min"),
    "humidity": ("humidity_max", "humidity_avg", "humidity_min"),
}
GUST_PAIRS = (
    ("wind_gust_max", "wind_speed_max"),
    ("wind_gust_avg", "wind_speed_avg"),
    ("wind_gust_min", "wind_speed_min"),
)


@dataclass
class StationSeries:
    timestamps: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        missing = [v for v in VARIABLES if v not in self.columns]
        if missing:
            raise FormatError(f"missing station columns: {missing}")
        self.columns = {v: np.asarray(self.columns[v], dtype=np.float64) for v in VARIABLES}
        n = len(self.timestamps)
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise LengthMismatch(f"column {name} has shape {col.shape}, expected ({n},)")
        if n > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise FormatError("station timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def copy(self) -> "StationSeries":
        return StationSeries(self.timestamps.copy(), {k: v.copy() for k, v in self.columns.items()})

    def matrix(self) -> np.ndarray:
        """Rows × 20 array in the fixed variable order."""
        return np.column_stack([self.columns[v] for v in VARIABLES])


def spline_fill(ts, v) -> np.ndarray:
    """Fill NaNs with a natural cubic spline through the present samples.

    Outside the knot span the nearest knot value is held constant.
    """
    ts = np.asarray(ts, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    present = ~np.isnan(v)
    if present.sum() < 2:
        raise TooFewKnots(f"need at least 2 non-missing samples, got {int(present.sum())}")
    out = v.copy()
    gaps = ~present
    if not gaps.any():
        return out
    t0 = ts[present][0]
    kt, kv = ts[present] - t0, v[present]
    spline = CubicSpline(kt, kv, bc_type="natural")
    tq = ts[gaps] - t0
    filled = spline(tq)
    filled = np.where(tq < kt[0], kv[0], filled)
    filled = np.where(tq > kt[-1], kv[-1], filled)
    out[gaps] = filled
    return out


def wind_decompose(speed, direction):
    """Speed (mph) and meteorological direction (degrees) to (u, v) components."""
    speed = np.asarray(speed, dtype=np.float64)
    if np.any(speed < 0):
        raise NegativeSpeed("wind speed must be non-negative")
    theta = np.deg2rad(direction)
    u = -speed * np.sin(theta)
    v = -speed * np.cos(theta)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def wind_reconstitute(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    speed = np.hypot(u, v)
    direction = np.mod(np.rad2deg(np.arctan2(-u, -v)), 360.0)
    # mod can round tiny negatives up to exactly 360
    direction = np.where(direction >= 360.0, 0.0, direction)
    direction = np.where(speed == 0, 0.0, direction)
    if speed.ndim == 0:
        return float(speed), float(direction)
    return speed, direction


def wind_fill(series: StationSeries) -> StationSeries:
    out = series.copy()
    speed = out.columns["wind_speed_avg"]
    direction = out.columns["wind_dir_avg"]
    known = ~np.isnan(speed) & ~np.isnan(direction)
    missing = np.isnan(speed) | np.isnan(direction)
    if not missing.any():
        return out
    if known.sum() < 2:
        raise TooFewKnots("wind fill needs at least 2 rows with both speed and direction")
    u = np.full(len(out), np.nan)
    v = np.full(len(out), np.nan)
    u[known], v[known] = wind_decompose(speed[known], direction[known])
    s_new, d_new = wind_reconstitute(spline_fill(out.timestamps, u), spline_fill(out.timestamps, v))
    out.columns["wind_speed_avg"] = np.where(np.isnan(speed), s_new, speed)
    out.columns["wind_dir_avg"] = np.where(np.isnan(direction), d_new, direction)
    return out


def precip_contextual_fill(series: StationSeries, window_hours: float = 2.5) -> StationSeries:
    """Fill precipitation gaps using an activity mask over a centered window.

    A gap is "active" when any present sample within half the window is
    positive; active gaps are linearly interpolated between the nearest present
    neighbours, inactive ones become exactly 0.
    """
    out = series.copy()
    r = out.columns[PRECIP]
    ts = out.timestamps
    present = ~np.isnan(r)
    if present.all():
        return out
    half = window_hours * 3600.0 / 2.0
    kt = ts[present]
    kv = r[present]
    wet_t = kt[kv > 0]
    filled = r.copy()
    for k in np.flatnonzero(~present):
        t = ts[k]
        active = wet_t.size > 0 and bool(np.any(np.abs(wet_t - t) <= half))
        if not active:
            filled[k] = 0.0
            continue
        hi = int(np.searchsorted(kt, t))
        if hi == 0:
            filled[k] = kv[0]
        elif hi == kt.size:
            filled[k] = kv[-1]
        else:
            t0, t1 = kt[hi - 1], kt[hi]
            filled[k] = kv[hi - 1] + (kv[hi] - kv[hi - 1]) * (t - t0) / (t1 - t0)
    out.columns[PRECIP] = filled
    return out


@dataclass
class Violation:
    row: int
    timestamp: int
    rule: str
    values: tuple

    def __str__(self) -> str:
        vals = ", ".join(f"{x:g}" for x in self.values)
        return f"row {self.row} ts {self.timestamp}: {self.rule} violated ({vals})"


@dataclass
class ViolationReport:
    violations: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.violations)

    def to_text(self) -> str:
        lines = [f"violations: {len(self.violations)}"]
        lines += [str(v) for v in self.violations]
        return "\n".join(lines) + "\n"


def validate_physical(series: StationSeries, repair: bool = False) -> tuple[StationSeries, ViolationReport]:
    out = series.copy()
    c = out.columns
    report = ViolationReport()

    def flag(mask, rule, cols):
        for k in np.flatnonzero(mask):
            report.violations.append(
                Violation(int(k), int(out.timestamps[k]), rule, tuple(float(c[x][k]) for x in cols))
            )

    for name, (hi, mid, lo) in TRIPLES.items():
        a, b, d = c[hi], c[mid], c[lo]
        with np.errstate(invalid="ignore"):
            bad = (a < b) | (b < d)
        flag(bad, f"{name}_max >= {name}_avg >= {name}_min", (hi, mid, lo))
        if repair and bad.any():
            trip = np.sort(np.column_stack([a, b, d])[bad], axis=1)[:, ::-1]
            a[bad], b[bad], d[bad] = trip[:, 0], trip[:, 1], trip[:, 2]
    for gust, speed in GUST_PAIRS:
        with np.errstate(invalid="ignore"):
            bad = c[gust] < c[speed]
        flag(bad, f"{gust} >= {speed}", (gust, speed))
        if repair:
            c[gust][bad] = c[speed][bad]

    with np.errstate(invalid="ignore"):
        for name in TRIPLES["humidity"]:
            bad = (c[name] < 0) | (c[name] > 100)
            flag(bad, f"0 <= {name} <= 100", (name,))
            if repair:
                c[name][bad] = np.clip(c[name][bad], 0, 100)
        bad = (c["wind_dir_avg"] < 0) | (c["wind_dir_avg"] >= 360)
        flag(bad, "0 <= wind_dir_avg < 360", ("wind_dir_avg",))
        if repair:
            c["wind_dir_avg"][bad] = np.mod(c["wind_dir_avg"][bad], 360.0)
        bad = c[PRECIP] < 0
        flag(bad, "precip_rate >= 0", (PRECIP,))
        if repair:
            c[PRECIP][bad] = 0.0
    return out, report


def process_station(series: StationSeries, window_hours: float = 2.5) -> tuple[StationSeries, ViolationReport]:
    """Full cleaning pipeline; the report lists violations found before repair."""
    out = series.copy()
    for name in CONTINUOUS + NONNEGATIVE_WIND:
        col = out.columns[name]
        if np.isnan(col).any():
            col = spline_fill(out.timestamps, col)
            if name in NONNEGATIVE_WIND:
                col = np.maximum(col, 0.0)
            if name.startswith("humidity"):
                col = np.clip(col, 0.0, 100.0)
            out.columns[name] = col
    out = wind_fill(out)
    out = precip_contextual_fill(out, window_hours)
    return validate_physical(out, repair=True)


# --- CSV ------------------------------------------------------------------------

def parse_iso(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_iso(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def read_station_csv(path) -> StationSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        expected = ["ts_utc", *VARIABLES]
        if header != expected:
            raise FormatError(f"{path}:1: header mismatch, expected {','.join(expected)}")
        ts, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise FormatError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            try:
                ts.append(parse_iso(row[0]))
                rows.append([float(x) if x.strip() else np.nan for x in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(VARIABLES))
    try:
        return StationSeries(np.array(ts, dtype=np.int64), {v: data[:, k] for k, v in enumerate(VARIABLES)})
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def station_csv_text(series: StationSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ts_utc", *VARIABLES])
    mat = series.matrix()
    for t, row in zip(series.timestamps, mat):
        writer.writerow([format_iso(t), *("" if np.isnan(x) else repr(float(x)) for x in row)])
    return buf.getvalue()


def write_station_csv(path, series: StationSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(station_csv_text(series))
