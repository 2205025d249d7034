"""Event selection, radar/PWS synchronization, quantization and the M3RD container."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    FormatError,
    InvalidCode,
    NoMatchWithinWindow,
    SeriesTooShort,
)
from .gridproc import CompositeFrame, FrameSeries
from .stationproc import PRECIP, VARIABLES, StationSeries

Z_THRESHOLD = 3.0
WINDOW = 8
HALF_WINDOW = 4
STRIDE = 4
MATCH_TOLERANCE = 450
TRAIN_FRAC = 0.85
MISSING_CODE = 255
MAX_CODE = 70

VALID_CODES = frozenset([0, 8, 16, *range(20, 71), MISSING_CODE])


def quantize(z):
    """Map dBZ to 8-bit codes: coarse bins below 20 dBZ, 1-dBZ bins up to 70, 255 for missing."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        codes = np.where(
            z < 8, 0,
            np.where(z < 16, 8,
            np.where(z < 20, 16,
            np.where(z < 70, np.floor(np.where(np.isfinite(z), z, 0)), 70))))  # fmt: skip
    codes = np.where(np.isnan(z), MISSING_CODE, codes).astype(np.uint8)
    return int(codes) if codes.ndim == 0 else codes


def dequantize(code):
    """Code to (normalized reflectivity in [0, 1], missing flag)."""
    c = np.asarray(code)
    bad = ~np.isin(c, list(VALID_CODES))
    if bad.any():
        raise InvalidCode(f"invalid quantization code(s): {sorted(set(np.atleast_1d(c[bad]).tolist()))}")
    missing = c == MISSING_CODE
    value = np.where(missing, 0.0, c.astype(np.float64) / MAX_CODE)
    if value.ndim == 0:
        return float(value), bool(missing)
    return value, missing


def spatial_mean(z) -> float:
    """Arithmetic mean over every cell; missing cells count as 0."""
    arr = z.z if isinstance(z, CompositeFrame) else np.asarray(z, dtype=np.float64)
    return float(np.where(np.isnan(arr), 0.0, arr).sum() / arr.size)


def code_mean(codes: np.ndarray) -> float:
    """Spatial mean of a quantized frame; the missing code counts as 0."""
    c = np.asarray(codes, dtype=np.float64)
    return float(np.where(c == MISSING_CODE, 0.0, c).sum() / c.size)


@dataclass
class EventCandidate:
    center_index: int
    indices: list[int]
    timestamps: list[int]
    spatial_means: list[float]
    cumulative_significance: float


def select_events(series: FrameSeries, threshold: float = Z_THRESHOLD) -> list[EventCandidate]:
    """Stride-4 scan over the quantized series emitting 8-frame windows.

    Frames are quantized first and the significance test uses the spatial mean
    of the codes, so sub-8 dBZ echo contributes nothing.
    """
    codes = np.stack([quantize(f.z) for f in series.frames]) if len(series) else np.zeros((0, 1, 1))
    return select_events_codes(codes, series.timestamps, threshold)


def select_events_codes(codes: np.ndarray, timestamps, threshold: float = Z_THRESHOLD) -> list[EventCandidate]:
    T = len(codes)
    if T <= WINDOW:
        raise SeriesTooShort(f"series of {T} frames is too short for an {WINDOW}-frame window")
    means = [code_mean(c) for c in codes]
    timestamps = [int(t) for t in timestamps]
    events = []
    i = HALF_WINDOW
    while i + HALF_WINDOW < T:
        if means[i] > threshold:
            idx = list(range(i - HALF_WINDOW, i + HALF_WINDOW))
            window_means = [means[k] for k in idx]
            events.append(
                EventCandidate(i, idx, [timestamps[k] for k in idx], window_means, float(sum(window_means)))
            )
        i += STRIDE
    return events


def match_pws(radar_ts: int, pws: StationSeries | np.ndarray, tolerance: int = MATCH_TOLERANCE) -> int:
    """Index of the nearest station sample, ties to the earlier one."""
    ts = pws.timestamps if isinstance(pws, StationSeries) else np.asarray(pws, dtype=np.int64)
    if ts.size == 0:
        raise NoMatchWithinWindow("station series is empty")
    d = np.abs(ts - int(radar_ts))
    k = int(np.argmin(d))  # first minimum = earlier timestamp
    if d[k] > tolerance:
        raise NoMatchWithinWindow(
            f"no station sample within {tolerance} s of radar time {radar_ts} (nearest is {int(d[k])} s away)"
        )
    return k


@dataclass
class EventSequence:
    frames: np.ndarray  # [8, ny, nx] uint8 codes
    pws_rows: np.ndarray  # [8, 20]
    pws_timestamps: np.ndarray  # [8] int64
    radar_timestamps: np.ndarray  # [8] int64
    target: np.ndarray  # [8] mm/hr

    @property
    def center_timestamp(self) -> int:
        return int(self.radar_timestamps[HALF_WINDOW])


@dataclass
class DatasetSplit:
    train: list[EventSequence]
    test: list[EventSequence]
    n_candidates: int = 0
    n_dropped: int = 0

    @property
    def sequences(self) -> list[EventSequence]:
        return self.train + self.test

    def report_text(self) -> str:
        return (
            f"candidates: {self.n_candidates}\n"
            f"dropped_no_pws_match: {self.n_dropped}\n"
            f"sequences: {len(self.train) + len(self.test)}\n"
            f"train: {len(self.train)}\n"
            f"test: {len(self.test)}\n"
        )


def partition(sequences: list, train_frac: float = TRAIN_FRAC) -> DatasetSplit:
    n = len(sequences)
    if n == 0:
        raise EmptyDataset("no sequences to partition")
    k = math.floor(train_frac * n)
    return DatasetSplit(list(sequences[:k]), list(sequences[k:]))


def build_dataset(
    frames: FrameSeries,
    pws: StationSeries,
    threshold: float = Z_THRESHOLD,
    train_frac: float = TRAIN_FRAC,
) -> DatasetSplit:
    codes = np.stack([quantize(f.z) for f in frames.frames])
    radar_ts = frames.timestamps
    candidates = select_events_codes(codes, radar_ts, threshold)
    pws_mat = pws.matrix()
    precip = pws.columns[PRECIP]
    sequences, dropped = [], 0
    for cand in candidates:
        try:
            rows = [match_pws(radar_ts[k], pws) for k in cand.indices]
        except NoMatchWithinWindow:
            dropped += 1
            continue
        sequences.append(
            EventSequence(
                frames=codes[cand.indices].copy(),
                pws_rows=pws_mat[rows].astype(np.float32),
                pws_timestamps=pws.timestamps[rows].copy(),
                radar_timestamps=radar_ts[cand.indices].copy(),
                target=precip[rows].astype(np.float32),
            )
        )
    if not sequences:
        raise EmptyDataset(
            f"no event sequences ({len(candidates)} candidates above {threshold} dBZ, {dropped} dropped)"
        )
    split = partition(sequences, train_frac)
    split.n_candidates = len(candidates)
    split.n_dropped = dropped
    return split


# --- M3RD container ---------------------------------------------------------------
# v1 (as specified): magic, u32 version, u32 n_seq, u32 split_point, then per sequence
#   i64 radar_ts[8]; i64 pws_ts[8]; u8 frames[8*100*100]; f32 pws[8*20]; f32 target[8]
# v2 is identical except that u32 ny, u32 nx follow split_point, for grids other than 100x100.

M3RD_MAGIC = b"M3RD"
_HEAD = struct.Struct("<4sIII")
_DIMS = struct.Struct("<II")
N_VARS = len(VARIABLES)


def _record_size(ny: int, nx: int) -> int:
    return 8 * WINDOW * 2 + WINDOW * ny * nx + 4 * WINDOW * N_VARS + 4 * WINDOW


def container_bytes(split: DatasetSplit) -> bytes:
    seqs = split.sequences
    if not seqs:
        raise EmptyDataset("cannot write an empty container")
    ny, nx = seqs[0].frames.shape[1:]
    version = 1 if (ny, nx) == (100, 100) else 2
    parts = [_HEAD.pack(M3RD_MAGIC, version, len(seqs), len(split.train))]
    if version == 2:
        parts.append(_DIMS.pack(ny, nx))
    for s in seqs:
        if s.frames.shape != (WINDOW, ny, nx):
            raise FormatError("all sequences in a container must share frame dimensions")
        parts.append(np.asarray(s.radar_timestamps, dtype="<i8").tobytes())
        parts.append(np.asarray(s.pws_timestamps, dtype="<i8").tobytes())
        parts.append(np.asarray(s.frames, dtype=np.uint8).tobytes())
        parts.append(np.asarray(s.pws_rows, dtype="<f4").tobytes())
        parts.append(np.asarray(s.target, dtype="<f4").tobytes())
    return b"".join(parts)


def write_container(path, split: DatasetSplit) -> None:
    Path(path).write_bytes(container_bytes(split))


def read_container(path) -> DatasetSplit:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_seq, split_point = _HEAD.unpack_from(data)
    if magic != M3RD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    off = _HEAD.size
    if version == 1:
        ny = nx = 100
    elif version == 2:
        ny, nx = _DIMS.unpack_from(data, off)
        off += _DIMS.size
    else:
        raise FormatError(f"{path}: unsupported M3RD version {version}")
    rec = _record_size(ny, nx)
    if len(data) != off + n_seq * rec:
        raise FormatError(f"{path}: expected {off + n_seq * rec} bytes, found {len(data)}")
    if split_point > n_seq:
        raise FormatError(f"{path}: split point {split_point} exceeds sequence count {n_seq}")
    seqs = []
    for _ in range(n_seq):
        radar_ts = np.frombuffer(data, "<i8", WINDOW, off).astype(np.int64)
        off += 8 * WINDOW
        pws_ts = np.frombuffer(data, "<i8", WINDOW, off).astype(np.int64)
        off += 8 * WINDOW
        frames = np.frombuffer(data, np.uint8, WINDOW * ny * nx, off).reshape(WINDOW, ny, nx).copy()
        off += WINDOW * ny * nx
        pws = np.frombuffer(data, "<f4", WINDOW * N_VARS, off).reshape(WINDOW, N_VARS).copy()
        off += 4 * WINDOW * N_VARS
        target = np.frombuffer(data, "<f4", WINDOW, off).copy()
        off += 4 * WINDOW
        seqs.append(EventSequence(frames, pws, pws_ts, radar_ts, target))
    return DatasetSplit(seqs[:split_point], seqs[split_point:])


@dataclass
class AuditResult:
    path: str
    n_seq: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def audit_container(path, tolerance: int = MATCH_TOLERANCE) -> AuditResult:
    """Check alignment tolerance, code validity and chronology of a stored dataset."""
    result = AuditResult(str(path))
    split = read_container(path)
    seqs = split.sequences
    result.n_seq = len(seqs)
    for n, s in enumerate(seqs):
        dt = np.abs(s.radar_timestamps - s.pws_timestamps)
        if np.any(dt > tolerance):
            result.problems.append(f"sequence {n}: |radar_ts - pws_ts| up to {int(dt.max())} s > {tolerance} s")
        if not np.all(np.isin(s.frames, list(VALID_CODES))):
            result.problems.append(f"sequence {n}: invalid quantization codes")
        if np.any(np.diff(s.radar_timestamps) <= 0):
            result.problems.append(f"sequence {n}: radar timestamps not increasing")
    if split.train and split.test:
        if max(s.center_timestamp for s in split.train) >= min(s.center_timestamp for s in split.test):
            result.problems.append("train split does not precede test split")
    return result
