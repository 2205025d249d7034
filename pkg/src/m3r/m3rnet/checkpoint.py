"""M3RC checkpoint files.

Layout (little-endian): magic "M3RC"; u32 version; ModelConfig as u32 fields in
``CONFIG_FIELDS`` order; u32 n_arrays; per array u16 name length, UTF-8 name,
u8 rank, u32 dims[rank], f32 data row-major; then f32 mean[20], f32 std[20].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..stationproc import VARIABLES
from .config import VARIANTS, ModelConfig
from .model import ModelParams
from .train import Standardizer

MAGIC = b"M3RC"
VERSION = 1
CONFIG_FIELDS = (
    "T_in", "H", "W", "C", "D", "P", "d_model",
    "n_heads_enc", "d_head_enc", "n_heads_dec", "d_head_dec", "mlp_dim",
    "L_enc", "L_mm", "L_ts", "L_dec", "horizon", "variant", "pe_per_token",
)  # fmt: skip
N_STATS = len(VARIABLES)


def _config_values(cfg: ModelConfig) -> list[int]:
    out = []
    for name in CONFIG_FIELDS:
        v = getattr(cfg, name)
        if name == "variant":
            v = VARIANTS.index(v)
        out.append(int(v))
    return out


def checkpoint_bytes(params: ModelParams, stats: Standardizer) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack(f"<{len(CONFIG_FIELDS)}I", *_config_values(params.config)))
    parts.append(struct.pack("<I", len(params.arrays)))
    for name, arr in params.arrays.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    parts.append(np.asarray(stats.mean, dtype="<f4").tobytes())
    parts.append(np.asarray(stats.std, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, params: ModelParams, stats: Standardizer) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, stats))


def load_checkpoint(path) -> tuple[ModelParams, Standardizer]:
    data = Path(path).read_bytes()
    try:
        return _parse(data)
    except (struct.error, ValueError, IndexError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _parse(data: bytes) -> tuple[ModelParams, Standardizer]:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 8
    values = struct.unpack_from(f"<{len(CONFIG_FIELDS)}I", data, off)
    off += 4 * len(CONFIG_FIELDS)
    kw = dict(zip(CONFIG_FIELDS, values))
    kw["variant"] = VARIANTS[kw["variant"]]
    kw["pe_per_token"] = bool(kw["pe_per_token"])
    cfg = ModelConfig(**kw)
    (n_arrays,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(n_arrays):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(data, "<f4", size, off).reshape(dims).astype(np.float32)
        off += 4 * size
    mean = np.frombuffer(data, "<f4", N_STATS, off).copy()
    off += 4 * N_STATS
    std = np.frombuffer(data, "<f4", N_STATS, off).copy()
    off += 4 * N_STATS
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes")
    return ModelParams(cfg, arrays), Standardizer(mean, std)
