"""Flat ``key = value`` experiment configuration.

Every key has a typed default below. Files may contain ``#`` comments and
blank lines; command-line ``key=value`` overrides are applied afterwards.
The config hash covers every key except the path-valued ones, so moving an
experiment to a different directory does not change its hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gan import VARIANTS, GanConfig, variant_config

DEFAULTS: dict = {
    # paths
    "manifest": "",
    "out": "out",
    "seed": 0,
    # spectrograms
    "sample_rate": 16000,
    "frame_ms": 50.0,
    "overlap": 0.5,
    "n": 32,
    "n_scales": 0,  # 0 -> same as n
    "f_min": 40.0,
    "omega0": 6.0,
    "scale_kinds": ["linear", "log", "logRe"],
    "pitch_scales": [0.75, 0.9, 1.15, 1.5],
    "augment_below_s": 2.0,
    # training
    "variants": ["lsgan011", "lsgan-110", "lsgan011-dfn", "lsgan-110-dfn"],
    "penalty_weight": 1.0,
    "penalty_mode": "hinge",
    "lagrange_rate": 0.01,
    "epsilon": "auto",
    "latent_dim": 32,
    "gen_channels": [32, 16, 8],
    "disc_channels": [8, 16, 32],
    "batch_size": 32,
    "lr": 2e-4,
    "beta1": 0.5,
    "beta2": 0.999,
    "init_std": 0.02,
    "symmetric_d_loss": False,
    "eig_backend": "lapack",
    "max_iters": 5000,
    "checkpoint_every": 500,
    # evaluation
    "fid_every": 2500,
    "fid_sample_count": 256,
    "snr_sample_count": 32,
    "embed_seed": 0,
    "checkpoint": "",
    # Gaussian-mixture benchmark
    "gmm_repeats": 5,
    "gmm_iters": 5000,
    "gmm_batch": 64,
    "gmm_lr": 2e-4,
    "gmm_hidden": 64,
    "gmm_latent": 16,
    "gmm_samples": 2500,
    "gmm_radius": 2.0,
    "gmm_sigma": 0.05,
    "gmm_point_matrix": "scatter",
    "capture_mult": 3.0,
    "min_fraction": 0.01,
}

PATH_KEYS = ("manifest", "out", "checkpoint")


def _coerce(key: str, raw, default):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = raw if isinstance(raw, list) else [s.strip() for s in str(raw).split(",") if s.strip()]
            elem = default[0] if default else ""
            return [_coerce(key, v, elem) for v in items]
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def set(self, key: str, raw) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, raw, DEFAULTS[key])

    def update(self, pairs) -> "ExperimentConfig":
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value: {item!r}")
            k, v = item.split("=", 1)
            self.set(k.strip(), v)
        self.validate()
        return self

    def validate(self) -> None:
        v = self.values
        n = v["n"]
        if n < 16 or n & (n - 1):
            raise ConfigError("n must be a power of two >= 16")
        ups = n.bit_length() - 3  # doublings from the 4x4 seed map
        if len(v["gen_channels"]) != ups or len(v["disc_channels"]) != ups:
            raise ConfigError(f"n={n} needs {ups} entries in gen_channels and disc_channels")
        for kind in v["scale_kinds"]:
            if kind not in ("linear", "log", "logRe"):
                raise ConfigError(f"unknown scale kind {kind!r}")
        if not 0 <= v["overlap"] < 1:
            raise ConfigError("overlap must be in [0, 1)")
        if not v["variants"]:
            raise ConfigError("variants must name at least one model")
        for name in v["variants"]:
            if name not in VARIANTS:
                raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
        if v["checkpoint_every"] < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if v["epsilon"] != "auto":
            try:
                if float(v["epsilon"]) < 0:
                    raise ConfigError("epsilon must be >= 0")
            except ValueError as exc:
                raise ConfigError(f"epsilon must be 'auto' or a number, got {v['epsilon']!r}") from exc

    @property
    def scales(self) -> int:
        return self.values["n_scales"] or self.values["n"]

    def path(self, key: str) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_dir(self) -> Path:
        return self.path("out")

    def hashed_values(self) -> dict:
        return {k: v for k, v in sorted(self.values.items()) if k not in PATH_KEYS}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_values(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def spectrogram_hash(self) -> str:
        keys = ("sample_rate", "frame_ms", "overlap", "n", "n_scales", "f_min", "omega0",
                "pitch_scales", "augment_below_s", "seed")
        blob = json.dumps({k: self.values[k] for k in keys}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def gan_config(self, variant: str) -> GanConfig:
        v = self.values
        eps = None if v["epsilon"] == "auto" else float(v["epsilon"])
        return variant_config(
            variant,
            penalty_weight=v["penalty_weight"],
            penalty_mode=v["penalty_mode"],
            lagrange_rate=v["lagrange_rate"],
            epsilon=eps,
            latent_dim=v["latent_dim"],
            n=v["n"],
            gen_channels=tuple(v["gen_channels"]),
            disc_channels=tuple(v["disc_channels"]),
            batch_size=v["batch_size"],
            lr=v["lr"],
            beta1=v["beta1"],
            beta2=v["beta2"],
            init_std=v["init_std"],
            seed=v["seed"],
            checkpoint_every=v["checkpoint_every"],
            symmetric_d_loss=v["symmetric_d_loss"],
            eig_backend=v["eig_backend"],
        )

    def gmm_config(self, variant: str, seed: int) -> GanConfig:
        v = self.values
        eps = None if v["epsilon"] == "auto" else float(v["epsilon"])
        return variant_config(
            variant,
            arch="mlp",
            point_matrix=v["gmm_point_matrix"],
            penalty_weight=v["penalty_weight"],
            penalty_mode=v["penalty_mode"],
            lagrange_rate=v["lagrange_rate"],
            epsilon=eps,
            latent_dim=v["gmm_latent"],
            hidden=v["gmm_hidden"],
            batch_size=v["gmm_batch"],
            lr=v["gmm_lr"],
            beta1=v["beta1"],
            beta2=v["beta2"],
            init_std=v["init_std"],
            seed=seed,
            checkpoint_every=v["checkpoint_every"],
            symmetric_d_loss=v["symmetric_d_loss"],
            eig_backend=v["eig_backend"],
        )


def parse_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides=(), **values) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        cfg.base_dir = p.resolve().parent
        for k, v in parse_text(p.read_text()).items():
            cfg.set(k, v)
    for k, v in values.items():
        cfg.set(k, v)
    cfg.update(overrides)
    return cfg


def dump_text(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.values.items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
