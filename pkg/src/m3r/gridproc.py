"""Radar volume processing: ROI extraction, column-max composite, 15-minute regularization.

Volumes arrive already gridded on a Cartesian lat/lon mesh (GVOL files). The
pipeline for one radar site is::

    vol = read_gvol(path)
    i, j = nearest_grid_point(vol, lat, lon)
    frame = composite_reflectivity(extract_roi(vol, (i, j)))
    series = temporal_regularize(FrameSeries(frames), 900)
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InsufficientFrames,
    RoiOutOfBounds,
    ShapeMismatch,
    TargetOutsideGrid,
)

log = logging.getLogger(__name__)

GVOL_MAGIC = b"GVOL"
GVOL_VERSION = 1
FRAMES_MAGIC = b"M3RF"
FRAMES_VERSION = 1

DBZ_MIN = -32.0
DBZ_MAX = 95.0
N_COMPOSITE_LEVELS = 4
DEFAULT_STEP = 900
DEFAULT_ROI = 100


@dataclass
class GriddedVolume:
    timestamp: int
    lat: np.ndarray  # [ny, nx] degrees
    lon: np.ndarray  # [ny, nx] degrees
    refl: np.ndarray  # [n_elev, ny, nx] dBZ, NaN = missing

    def __post_init__(self):
        self.timestamp = int(self.timestamp)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.refl = np.asarray(self.refl, dtype=np.float32)
        if self.refl.ndim != 3 or self.lat.ndim != 2:
            raise ShapeMismatch("refl must be 3-D and lat/lon 2-D")
        if self.lat.shape != self.lon.shape or self.refl.shape[1:] != self.lat.shape:
            raise ShapeMismatch(
                f"inconsistent shapes: lat {self.lat.shape}, lon {self.lon.shape}, refl {self.refl.shape}"
            )
        if self.refl.shape[0] < 1:
            raise ShapeMismatch("volume needs at least one elevation level")
        if self.timestamp <= 0:
            raise FormatError(f"timestamp must be positive, got {self.timestamp}")
        if np.any(np.abs(self.lat) > 90) or np.any(np.abs(self.lon) > 180):
            raise FormatError("lat/lon out of range")

    @property
    def n_elev(self) -> int:
        return self.refl.shape[0]

    @property
    def ny(self) -> int:
        return self.refl.shape[1]

    @property
    def nx(self) -> int:
        return self.refl.shape[2]


@dataclass
class CompositeFrame:
    timestamp: int
    z: np.ndarray  # [ny, nx] dBZ, NaN = missing

    @property
    def ny(self) -> int:
        return self.z.shape[0]

    @property
    def nx(self) -> int:
        return self.z.shape[1]


@dataclass
class FrameSeries:
    frames: list[CompositeFrame]
    step_seconds: int | None = None
    # lat/lon of the ROI cell nearest the target, carried through for bookkeeping
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames], dtype=np.int64)

    def stack(self) -> np.ndarray:
        return np.stack([f.z for f in self.frames])


def nearest_grid_point(vol: GriddedVolume, target_lat: float, target_lon: float) -> tuple[int, int]:
    """Row/col of the cell minimizing Euclidean distance in raw degrees.

    Ties go to the smallest row, then the smallest column (row-major argmin).
    """
    if not (vol.lat.min() <= target_lat <= vol.lat.max() and vol.lon.min() <= target_lon <= vol.lon.max()):
        raise TargetOutsideGrid(f"target ({target_lat}, {target_lon}) outside grid bounding box")
    d = np.sqrt((vol.lon - target_lon) ** 2 + (vol.lat - target_lat) ** 2)
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    return int(i), int(j)


def extract_roi(vol: GriddedVolume, center: tuple[int, int], size: int = DEFAULT_ROI) -> GriddedVolume:
    i, j = center
    half = size // 2
    r0, c0 = i - half, j - half
    if r0 < 0 or c0 < 0 or r0 + size > vol.ny or c0 + size > vol.nx:
        raise RoiOutOfBounds(
            f"ROI of size {size} centered at {center} exceeds grid {vol.ny}x{vol.nx}"
        )
    rows, cols = slice(r0, r0 + size), slice(c0, c0 + size)
    return GriddedVolume(
        timestamp=vol.timestamp,
        lat=vol.lat[rows, cols].copy(),
        lon=vol.lon[rows, cols].copy(),
        refl=vol.refl[:, rows, cols].copy(),
    )


def composite_reflectivity(vol: GriddedVolume) -> CompositeFrame:
    """NaN-aware column maximum over the four lowest elevation levels."""
    n = min(N_COMPOSITE_LEVELS, vol.n_elev)
    if vol.n_elev < N_COMPOSITE_LEVELS:
        log.warning("volume at %d has %d elevation levels; compositing all of them", vol.timestamp, vol.n_elev)
    levels = vol.refl[:n].astype(np.float64)
    all_nan = np.all(np.isnan(levels), axis=0)
    z = np.max(np.where(np.isnan(levels), -np.inf, levels), axis=0)
    z[all_nan] = np.nan
    z = np.clip(z, DBZ_MIN, DBZ_MAX)
    return CompositeFrame(vol.timestamp, z)


def _aligned_start(t: int, step: int) -> int:
    return -(-t // step) * step


def temporal_regularize(series: FrameSeries, step_seconds: int = DEFAULT_STEP) -> FrameSeries:
    """Piecewise-linear resampling onto epoch-anchored multiples of ``step_seconds``.

    A grid time equal to an input time copies that frame; otherwise a cell is NaN
    when either bracketing input cell is NaN.
    """
    frames = series.frames
    if len(frames) < 2:
        raise InsufficientFrames(f"need at least 2 frames, got {len(frames)}")
    ts = series.timestamps
    if np.any(np.diff(ts) <= 0):
        raise FormatError("input frame timestamps must be strictly increasing")
    start = _aligned_start(int(ts[0]), step_seconds)
    if start > ts[-1]:
        raise InsufficientFrames("input span does not contain a step boundary")
    grid = np.arange(start, int(ts[-1]) + 1, step_seconds, dtype=np.int64)

    out = []
    for tj in grid:
        i = int(np.searchsorted(ts, tj, side="right")) - 1
        if ts[i] == tj:
            z = frames[i].z.copy()
        else:
            t0, t1 = ts[i], ts[i + 1]
            z0, z1 = frames[i].z, frames[i + 1].z
            z = z0 + (z1 - z0) / float(t1 - t0) * float(tj - t0)
        out.append(CompositeFrame(int(tj), z))
    return FrameSeries(out, step_seconds=step_seconds, meta=dict(series.meta))


def process_volume(vol: GriddedVolume, target_lat: float, target_lon: float, roi_size: int = DEFAULT_ROI) -> CompositeFrame:
    center = nearest_grid_point(vol, target_lat, target_lon)
    return composite_reflectivity(extract_roi(vol, center, roi_size))


# --- GVOL files ---------------------------------------------------------------

_GVOL_HEAD = struct.Struct("<4sIqIII")


def write_gvol(path, vol: GriddedVolume) -> None:
    with open(path, "wb") as fh:
        fh.write(_GVOL_HEAD.pack(GVOL_MAGIC, GVOL_VERSION, vol.timestamp, vol.n_elev, vol.ny, vol.nx))
        fh.write(vol.lat.astype("<f8").tobytes())
        fh.write(vol.lon.astype("<f8").tobytes())
        fh.write(vol.refl.astype("<f4").tobytes())


def read_gvol(path) -> GriddedVolume:
    data = Path(path).read_bytes()
    if len(data) < _GVOL_HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, ts, n_elev, ny, nx = _GVOL_HEAD.unpack_from(data)
    if magic != GVOL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != GVOL_VERSION:
        raise FormatError(f"{path}: unsupported GVOL version {version}")
    ncell = ny * nx
    expected = _GVOL_HEAD.size + 16 * ncell + 4 * n_elev * ncell
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _GVOL_HEAD.size
    lat = np.frombuffer(data, "<f8", ncell, off).reshape(ny, nx)
    off += 8 * ncell
    lon = np.frombuffer(data, "<f8", ncell, off).reshape(ny, nx)
    off += 8 * ncell
    refl = np.frombuffer(data, "<f4", n_elev * ncell, off).reshape(n_elev, ny, nx)
    try:
        return GriddedVolume(ts, lat.copy(), lon.copy(), refl.copy())
    except (ShapeMismatch, FormatError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


# --- intermediate frame store (M3RF) -------------------------------------------
# magic "M3RF"; u32 version; u32 n_frames; u32 ny; u32 nx; i64 step_seconds;
# i64 ts[n]; f32 z[n*ny*nx] row-major, NaN = missing.

_FRAMES_HEAD = struct.Struct("<4sIIIIq")


def write_frames(path, series: FrameSeries) -> None:
    stack = series.stack().astype("<f4")
    n, ny, nx = stack.shape
    with open(path, "wb") as fh:
        fh.write(_FRAMES_HEAD.pack(FRAMES_MAGIC, FRAMES_VERSION, n, ny, nx, int(series.step_seconds or 0)))
        fh.write(series.timestamps.astype("<i8").tobytes())
        fh.write(stack.tobytes())


def read_frames(path) -> FrameSeries:
    data = Path(path).read_bytes()
    if len(data) < _FRAMES_HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, ny, nx, step = _FRAMES_HEAD.unpack_from(data)
    if magic != FRAMES_MAGIC or version != FRAMES_VERSION:
        raise FormatError(f"{path}: not an M3RF v{FRAMES_VERSION} file")
    expected = _FRAMES_HEAD.size + 8 * n + 4 * n * ny * nx
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    ts = np.frombuffer(data, "<i8", n, _FRAMES_HEAD.size)
    z = np.frombuffer(data, "<f4", n * ny * nx, _FRAMES_HEAD.size + 8 * n).reshape(n, ny, nx)
    frames = [CompositeFrame(int(t), z[k].astype(np.float64)) for k, t in enumerate(ts)]
    return FrameSeries(frames, step_seconds=step or None)


def frame_count(t_first: int, t_last: int, step: int) -> int:
    """Number of regularized frames between two raw timestamps."""
    return math.floor((t_last - _aligned_start(t_first, step)) / step) + 1
