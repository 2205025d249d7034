"""Verification scores, reference baselines and the ablation runner."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, LengthMismatch

log = logging.getLogger(__name__)

CSI_THRESHOLDS = (0.1, 5.0, 10.0)
ZR_A = 200.0
ZR_B = 1.6
CSV_HEADER = ["variant", "rmse", "mae", "r2", "cc", "csi_0.1", "csi_5", "csi_10", "flags"]


@dataclass
class ContingencyTable:
    hits: int
    misses: int
    false_alarms: int
    correct_negatives: int

    @classmethod
    def from_arrays(cls, pred, target, threshold: float) -> "ContingencyTable":
        p = np.asarray(pred) >= threshold
        t = np.asarray(target) >= threshold
        return cls(
            hits=int(np.sum(p & t)),
            misses=int(np.sum(~p & t)),
            false_alarms=int(np.sum(p & ~t)),
            correct_negatives=int(np.sum(~p & ~t)),
        )

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_negatives

    def csi(self) -> float | None:
        """hits / (hits + misses + false alarms); None when no event was forecast or observed."""
        denom = self.hits + self.misses + self.false_alarms
        return None if denom == 0 else self.hits / denom


@dataclass
class MetricReport:
    rmse: float
    mae: float
    r2: float
    cc: float
    csi: dict[float, float]
    flags: list[str] = field(default_factory=list)

    def row(self, variant: str) -> list[str]:
        return [
            variant,
            *(f"{x:.6f}" for x in (self.rmse, self.mae, self.r2, self.cc)),
            *(f"{self.csi[t]:.6f}" for t in CSI_THRESHOLDS),
            ";".join(self.flags),
        ]


def compute_metrics(pred, target, thresholds=CSI_THRESHOLDS) -> MetricReport:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size != target.size:
        raise LengthMismatch(f"{pred.size} predictions vs {target.size} targets")
    if pred.size == 0:
        raise EmptyInput("no prediction/target pairs")
    flags = []
    e = pred - target
    rmse = float(np.sqrt(np.mean(e * e)))
    mae = float(np.mean(np.abs(e)))
    tc = target - target.mean()
    sst = float(np.sum(tc * tc))
    if sst == 0:
        flags.append("constant_target")
        r2 = 0.0
    else:
        r2 = 1.0 - float(np.sum(e * e)) / sst
    pc = pred - pred.mean()
    denom = float(np.sqrt(np.sum(pc * pc) * sst))
    if denom == 0:
        flags.append("cc_undefined")
        cc = 0.0
    else:
        cc = float(np.clip(np.sum(pc * tc) / denom, -1.0, 1.0))
    csi = {}
    for t in thresholds:
        value = ContingencyTable.from_arrays(pred, target, t).csi()
        if value is None:
            flags.append(f"csi_{t:g}_empty")
            value = 0.0
        csi[t] = value
    return MetricReport(rmse, mae, r2, cc, csi, flags)


def metrics_csv(rows: list[tuple[str, MetricReport]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for name, report in rows:
        writer.writerow(report.row(name))
    return buf.getvalue()


def zr_rainfall(z, a: float = ZR_A, b: float = ZR_B):
    """Rain rate (mm/hr) from reflectivity (dBZ) via z = a * R**b."""
    r = (np.power(10.0, np.asarray(z, dtype=np.float64) / 10.0) / a) ** (1.0 / b)
    return float(r) if r.ndim == 0 else r


def persistence_baseline(batch, stats=None, horizon: int | None = None) -> np.ndarray:
    """Repeat the last observed station rain rate for every future step.

    ``batch.met`` is standardized; pass the :class:`Standardizer` used to build it
    so the rain rate can be mapped back to mm/hr.
    """
    from .stationproc import PRECIP_INDEX

    last = batch.met[:, -1, PRECIP_INDEX].astype(np.float64)
    if stats is not None:
        last = stats.invert(last, PRECIP_INDEX)
    steps = horizon or batch.met.shape[1]
    return np.repeat(last[:, None], steps, axis=1)


def run_ablation(dataset, config, hyper, variants=("ts_only", "no_decoder", "full")):
    """Train each wiring with identical seeds and score it on the test split.

    Returns ``(rows, csv_text)``, one row per variant in ``variants`` order.
    """
    from .m3rnet.model import ablation_variant
    from .m3rnet.train import make_batch, predict, train

    if not dataset.test:
        raise EmptyInput("test split is empty")
    rows = []
    for kind in variants:
        cfg = ablation_variant(kind, config)
        log.info("ablation: training %s", kind)
        result = train(dataset, cfg, hyper)
        pred = predict(result.params, dataset.test, result.stats)
        target = make_batch(dataset.test, result.stats, cfg.T_in).target
        rows.append((kind, compute_metrics(pred, target)))
    return rows, metrics_csv(rows)
