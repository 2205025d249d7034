"""Seeded synthetic radar volumes and station records with a known Z-R link.

Storms are Gaussian reflectivity blobs advecting across a periodic grid. The
station's rain rate is the Z-R rain rate of the composite reflectivity over
its cell, so radar frames upstream of the station carry information about its
future rainfall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import CellOutOfBounds, ConfigError
from .evalkit import zr_rainfall
from .gridproc import GriddedVolume, composite_reflectivity, write_gvol
from .stationproc import VARIABLES, StationSeries, write_station_csv

ELEVATION_FACTORS = (1.0, 0.9, 0.8, 0.7)
RAIN_FLOOR_DBZ = 10.0  # gauge reports no rain below this reflectivity


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_steps: int = 288
    ny: int = 16
    nx: int = 16
    storm_count: int = 3
    velocity_y: float = 0.3  # cells per radar step
    velocity_x: float = 0.6
    noise_std: float = 0.5  # dBZ
    pws_cadence_seconds: int = 300
    gap_fraction: float = 0.05
    radar_cadence_seconds: int = 600
    radar_jitter_seconds: int = 60
    start_ts: int = 1_717_200_000  # 2024-06-01T00:00:00Z
    lat0: float = 30.0
    lon0: float = -93.5
    spacing_deg: float = 0.009
    station_i: int = -1  # -1: grid center
    station_j: int = -1
    precip_noise_std: float = 0.2  # mm/hr, applied only while raining

    def __post_init__(self):
        if not 0 <= self.gap_fraction < 1:
            raise ConfigError("gap_fraction must lie in [0, 1)")
        if self.ny < 8 or self.nx < 8:
            raise ConfigError("grid must be at least 8x8")
        if self.n_steps < 2 or self.storm_count < 0:
            raise ConfigError("n_steps must be >= 2 and storm_count >= 0")
        if self.radar_jitter_seconds * 2 >= self.radar_cadence_seconds:
            raise ConfigError("radar jitter must be under half the cadence")

    @property
    def station_cell(self) -> tuple[int, int]:
        i = self.ny // 2 if self.station_i < 0 else self.station_i
        j = self.nx // 2 if self.station_j < 0 else self.station_j
        return i, j

    def station_latlon(self) -> tuple[float, float]:
        i, j = self.station_cell
        return self.lat0 + i * self.spacing_deg, self.lon0 + j * self.spacing_deg

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kind = known[k].type
            kw[k] = float(v) if kind == "float" else int(v)
        return cls(**kw)


@dataclass(frozen=True)
class Storm:
    y0: float
    x0: float
    vy: float
    vx: float
    peak: float  # dBZ
    sigma: float  # cells
    period: float  # radar steps, intensity cycle
    phase: float


def _storms(spec: SynthSpec, rng: np.random.Generator) -> list[Storm]:
    out = []
    for _ in range(spec.storm_count):
        out.append(
            Storm(
                y0=rng.uniform(0, spec.ny),
                x0=rng.uniform(0, spec.nx),
                vy=spec.velocity_y * rng.uniform(0.7, 1.3),
                vx=spec.velocity_x * rng.uniform(0.7, 1.3),
                peak=rng.uniform(35.0, 55.0),
                sigma=rng.uniform(1.5, 3.0),
                period=rng.uniform(40.0, 120.0),
                phase=rng.uniform(0, 2 * math.pi),
            )
        )
    return out


def storm_field(storms: list[Storm], step: float, ny: int, nx: int) -> np.ndarray:
    """Noise-free reflectivity at fractional radar step ``step``: max over storm blobs."""
    yy, xx = np.mgrid[0:ny, 0:nx].astype(np.float64)
    z = np.zeros((ny, nx))
    for s in storms:
        cy = (s.y0 + s.vy * step) % ny
        cx = (s.x0 + s.vx * step) % nx
        dy = (yy - cy + ny / 2) % ny - ny / 2  # minimum-image distance on the torus
        dx = (xx - cx + nx / 2) % nx - nx / 2
        intensity = s.peak * (0.75 + 0.25 * math.sin(2 * math.pi * step / s.period + s.phase))
        z = np.maximum(z, intensity * np.exp(-(dy * dy + dx * dx) / (2 * s.sigma * s.sigma)))
    return z


def radar_times(spec: SynthSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 1])
    jitter = rng.integers(-spec.radar_jitter_seconds, spec.radar_jitter_seconds + 1, spec.n_steps)
    return spec.start_ts + np.arange(spec.n_steps, dtype=np.int64) * spec.radar_cadence_seconds + jitter


def grid_coords(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.mgrid[0 : spec.ny, 0 : spec.nx]
    return spec.lat0 + ii * spec.spacing_deg, spec.lon0 + jj * spec.spacing_deg


def gen_radar(spec: SynthSpec) -> list[GriddedVolume]:
    rng = np.random.default_rng([spec.seed, 0])
    storms = _storms(spec, rng)
    lat, lon = grid_coords(spec)
    times = radar_times(spec)
    vols = []
    for t in times:
        step = (t - spec.start_ts) / spec.radar_cadence_seconds
        base = storm_field(storms, step, spec.ny, spec.nx)
        levels = []
        for f in ELEVATION_FACTORS:
            lvl = base * f
            if spec.noise_std > 0 and spec.storm_count > 0:
                lvl = lvl + rng.normal(0.0, spec.noise_std, lvl.shape)
            levels.append(np.clip(lvl, 0.0, 70.0))
        vols.append(GriddedVolume(int(t), lat, lon, np.stack(levels).astype(np.float32)))
    return vols


def _smooth_noise(rng, n: int, scale: float, corr: float = 0.98) -> np.ndarray:
    """AR(1) process with stationary std ``scale``."""
    eps = rng.normal(0.0, scale * math.sqrt(1 - corr * corr), n)
    out = np.empty(n)
    acc = rng.normal(0.0, scale)
    for k in range(n):
        acc = corr * acc + eps[k]
        out[k] = acc
    return out


def gen_pws(spec: SynthSpec, radar: list[GriddedVolume], station_cell: tuple[int, int] | None = None) -> StationSeries:
    i, j = station_cell if station_cell is not None else spec.station_cell
    ny, nx = radar[0].ny, radar[0].nx
    if not (0 <= i < ny and 0 <= j < nx):
        raise CellOutOfBounds(f"station cell ({i}, {j}) outside {ny}x{nx} grid")
    rng = np.random.default_rng([spec.seed, 2])
    rt = np.array([v.timestamp for v in radar], dtype=np.int64)
    local = np.array([composite_reflectivity(v).z[i, j] for v in radar])
    ts = np.arange(rt[0] - rt[0] % spec.pws_cadence_seconds, rt[-1] + 1, spec.pws_cadence_seconds, dtype=np.int64)
    n = len(ts)
    z = np.interp(ts, rt, local)
    raining = z >= RAIN_FLOOR_DBZ
    precip = np.where(raining, zr_rainfall(z), 0.0)
    precip = np.where(raining, np.maximum(precip + rng.normal(0.0, spec.precip_noise_std, n), 0.0), 0.0)

    hours = (ts - ts[0]) / 3600.0
    wet = np.convolve(raining.astype(float), np.ones(12) / 12, mode="same")
    temp = 78 + 8 * np.sin(2 * math.pi * (hours - 9) / 24) - 6 * wet + _smooth_noise(rng, n, 1.5)
    t_spread = 1.0 + np.abs(_smooth_noise(rng, n, 0.6))
    rh = np.clip(65 - 10 * np.sin(2 * math.pi * (hours - 9) / 24) + 25 * wet + _smooth_noise(rng, n, 4.0), 5, 97)
    rh_spread = 1.0 + np.abs(_smooth_noise(rng, n, 1.0))
    dew = temp - (100 - rh) / 5.0
    pressure = 29.92 + _smooth_noise(rng, n, 0.08, 0.995) - 0.05 * wet
    trend = np.gradient(pressure) * 12  # inHg per hour at 5-minute cadence
    speed = np.abs(6 + 4 * wet + _smooth_noise(rng, n, 2.0))
    direction = np.mod(200 + np.cumsum(rng.normal(0, 3.0, n)), 360.0)
    spd_spread = 0.5 + np.abs(_smooth_noise(rng, n, 0.8))
    gust_extra = 2.0 + 4 * wet + np.abs(_smooth_noise(rng, n, 1.5))

    cols = {
        "temp_max": temp + t_spread, "temp_min": temp - t_spread, "temp_avg": temp,
        "humidity_max": np.minimum(rh + rh_spread, 100.0), "humidity_min": np.maximum(rh - rh_spread, 0.0),
        "humidity_avg": rh,
        "dewpoint_max": dew + t_spread / 2, "dewpoint_min": dew - t_spread / 2, "dewpoint_avg": dew,
        "pressure_max": pressure + 0.01, "pressure_min": pressure - 0.01, "pressure_trend": trend,
        "wind_dir_avg": direction,
        "wind_speed_max": speed + spd_spread, "wind_speed_min": np.maximum(speed - spd_spread, 0.0),
        "wind_speed_avg": speed,
        "wind_gust_max": speed + spd_spread + gust_extra,
        "wind_gust_min": np.maximum(speed - spd_spread, 0.0) + gust_extra,
        "wind_gust_avg": speed + gust_extra,
        "precip_rate": precip,
    }  # fmt: skip
    # round to sensor resolution so CSV text is short and exact
    cols = {k: np.round(v, 3) for k, v in cols.items()}
    cols["wind_dir_avg"] = np.mod(cols["wind_dir_avg"], 360.0)
    if spec.gap_fraction > 0:
        blank = rng.random(n) < spec.gap_fraction
        # keep the ends so every column has knots at both extremes
        blank[0] = blank[-1] = False
        for k in cols:
            cols[k][blank] = np.nan
    return StationSeries(ts, {k: cols[k] for k in VARIABLES})


def write_corpus(spec: SynthSpec, out_dir) -> dict:
    """Write ``radar/*.gvol``, ``pws.csv`` and ``site.cfg`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "radar").mkdir(parents=True, exist_ok=True)
    vols = gen_radar(spec)
    for v in vols:
        write_gvol(out / "radar" / f"vol_{v.timestamp}.gvol", v)
    pws = gen_pws(spec, vols)
    write_station_csv(out / "pws.csv", pws)
    lat, lon = spec.station_latlon()
    roi = min(spec.ny, spec.nx)
    roi -= roi % 2
    (out / "site.cfg").write_text(f"target_lat={lat!r}\ntarget_lon={lon!r}\nroi_size={roi}\n", encoding="utf-8")
    return {"volumes": len(vols), "pws_rows": len(pws), "target_lat": lat, "target_lon": lon, "roi_size": roi}
