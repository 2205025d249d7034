"""``key=value`` run configuration with defaults < file < command-line layering."""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

# key -> (type, default, help)
SETTINGS: dict[str, tuple[type, object, str]] = {
    "target_lat": (float, None, "latitude of the station the ROI is centered on"),
    "target_lon": (float, None, "longitude of the station the ROI is centered on"),
    "roi_size": (int, 100, "ROI edge length in grid cells"),
    "step_seconds": (int, 900, "regular frame spacing in seconds"),
    "window_hours": (float, 2.5, "precipitation activity window in hours"),
    "threshold": (float, 3.0, "event significance threshold on mean quantized reflectivity (dBZ)"),
    "train_frac": (float, 0.85, "chronological train fraction"),
    "epochs": (int, 200, "training epochs"),
    "batch_size": (int, 64, "minibatch size"),
    "lr": (float, 1e-3, "peak learning rate"),
    "warmup_epochs": (int, 20, "linear warmup epochs before cosine annealing"),
    "weight_decay": (float, 0.05, "AdamW decoupled weight decay"),
    "P": (int, 10, "radar patch size"),
    "d_model": (int, 128, "model width"),
    "n_heads_enc": (int, 4, "heads in encoder and fusion blocks"),
    "d_head_enc": (int, 64, "head size in encoder and fusion blocks"),
    "n_heads_dec": (int, 6, "decoder heads"),
    "d_head_dec": (int, 128, "decoder head size"),
    "mlp_dim": (int, 512, "MLP hidden size"),
    "L_enc": (int, 2, "vision encoder layers"),
    "L_ts": (int, 2, "station encoder layers"),
    "L_mm": (int, 2, "multimodal fusion layers"),
    "L_dec": (int, 2, "decoder layers"),
    "pe_per_token": (int, 0, "1: separate radar positional encoding per (frame, patch)"),
    "variant": (str, "full", "model wiring: full, no_decoder or ts_only"),
    "seed": (int, 0, "random seed"),
    "jobs": (int, 1, "worker threads for file ingestion"),
}

MODEL_KEYS = (
    "P", "d_model", "n_heads_enc", "d_head_enc", "n_heads_dec", "d_head_dec", "mlp_dim",
    "L_enc", "L_ts", "L_mm", "L_dec", "pe_per_token", "variant",
)  # fmt: skip
HYPER_KEYS = ("epochs", "batch_size", "lr", "warmup_epochs", "weight_decay", "seed")


def parse_kv(text: str, source: str = "<config>", allowed=None) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if allowed is not None and key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def read_kv_file(path, allowed=None) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_kv(p.read_text(encoding="utf-8"), str(p), allowed)


class RunConfig(dict):
    """Typed settings; unknown keys are rejected."""

    @classmethod
    def build(cls, file_path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls({k: v[1] for k, v in SETTINGS.items()})
        if file_path is not None:
            for k, v in read_kv_file(file_path, SETTINGS).items():
                cfg[k] = cls._coerce(k, v, str(file_path))
        for k, v in (overrides or {}).items():
            if v is None:
                continue
            if k not in SETTINGS:
                raise ConfigError(f"unknown setting {k!r}")
            cfg[k] = cls._coerce(k, v, "command line")
        return cfg

    @staticmethod
    def _coerce(key, value, source):
        kind = SETTINGS[key][0]
        try:
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{source}: {key}={value!r} is not a valid {kind.__name__}") from None

    def subset(self, keys) -> dict:
        return {k: self[k] for k in keys}
