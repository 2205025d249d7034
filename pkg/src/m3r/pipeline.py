"""End-to-end glue shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

from .aligner import Z_THRESHOLD, DatasetSplit, build_dataset
from .gridproc import DEFAULT_ROI, DEFAULT_STEP, FrameSeries, GriddedVolume, process_volume, read_gvol, temporal_regularize
from .stationproc import StationSeries, process_station
from .synth import SynthSpec, gen_pws, gen_radar

log = logging.getLogger(__name__)


def ingest_volumes(
    volumes: list[GriddedVolume],
    target_lat: float,
    target_lon: float,
    roi_size: int = DEFAULT_ROI,
    step_seconds: int = DEFAULT_STEP,
) -> FrameSeries:
    frames = sorted((process_volume(v, target_lat, target_lon, roi_size) for v in volumes), key=lambda f: f.timestamp)
    return temporal_regularize(FrameSeries(frames), step_seconds)


def ingest_files(paths, target_lat, target_lon, roi_size=DEFAULT_ROI, step_seconds=DEFAULT_STEP, jobs=1) -> FrameSeries:
    def one(path):
        return process_volume(read_gvol(path), target_lat, target_lon, roi_size)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        frames = list(pool.map(one, sorted(paths)))
    frames.sort(key=lambda f: f.timestamp)
    log.info("ingested %d volumes", len(frames))
    return temporal_regularize(FrameSeries(frames), step_seconds)


def synth_dataset(spec: SynthSpec, threshold: float = Z_THRESHOLD) -> tuple[DatasetSplit, FrameSeries, StationSeries]:
    """In-memory version of synth -> ingest -> fill -> align."""
    vols = gen_radar(spec)
    pws = gen_pws(spec, vols)
    lat, lon = spec.station_latlon()
    roi = min(spec.ny, spec.nx)
    roi -= roi % 2
    frames = ingest_volumes(vols, lat, lon, roi)
    filled, _ = process_station(pws)
    return build_dataset(frames, filled, threshold), frames, filled
