"""Run configuration: profiles, layered key-value config files, config hashing.

A config file is plain text, one `key = value` per line.  Keys are dotted
paths into the config tree (``mel.hop = 64``).  Values are parsed as JSON
with a bare-string fallback.  The special key ``profile`` selects the base
profile whose defaults the remaining lines override; the ``desk`` profile
itself inherits from ``paper`` and only overrides sizes and iteration
counts, so every knob exists in every profile.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MelConfig:
    """STFT / mel analysis parameters. The paper profile is bit-fixed."""

    sample_rate: int = 16000
    window: int = 1024
    hop: int = 64
    fft_size: int = 2048
    mel_bins: int = 512
    frames: int = 512
    amp_floor: float = 1e-5
    log_floor_db: float = -100.0
    norm_min_db: float = -100.0
    norm_max_db: float = 60.0

    def __post_init__(self):
        if self.fft_size < self.window:
            raise ConfigError(f"fft_size {self.fft_size} < window {self.window}")
        if self.mel_bins <= 0 or self.frames <= 0:
            raise ConfigError("mel_bins and frames must be positive")
        if self.norm_max_db <= self.norm_min_db:
            raise ConfigError("norm_max_db must exceed norm_min_db")

    @property
    def num_samples(self) -> int:
        """Waveform length that yields exactly `frames` STFT frames."""
        return self.frames * self.hop

    def with_norm(self, norm_min_db: float, norm_max_db: float) -> "MelConfig":
        d = self.as_dict()
        d["norm_min_db"] = float(norm_min_db)
        d["norm_max_db"] = float(norm_max_db)
        return MelConfig(**d)

    def as_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "window": self.window,
            "hop": self.hop,
            "fft_size": self.fft_size,
            "mel_bins": self.mel_bins,
            "frames": self.frames,
            "amp_floor": self.amp_floor,
            "log_floor_db": self.log_floor_db,
            "norm_min_db": self.norm_min_db,
            "norm_max_db": self.norm_max_db,
        }


MIDI_MIN = 21
MIDI_MAX = 108
NUM_PITCHES = MIDI_MAX - MIDI_MIN + 1  # 88


# Profile defaults. `paper` carries the published analysis/training settings;
# `desk` shrinks sizes and iteration counts for CPU-scale runs; `micro` is a
# 16x16 profile used by gradient checks and unit tests.
_PAPER: dict[str, Any] = {
    "profile": "paper",
    "seed": 0,
    "mel": {
        "sample_rate": 16000,
        "window": 1024,
        "hop": 64,
        "fft_size": 2048,
        "mel_bins": 512,
        "frames": 512,
        "amp_floor": 1e-5,
        "log_floor_db": -100.0,
        "norm_min_db": -100.0,
        "norm_max_db": 60.0,
    },
    "model": {
        "feat_dim": 512,
        "z_dim": 512,
        "w_dim": 512,
        "pitch_embed_dim": 64,
        "base_res": 8,
        "channels": {"8": 512, "16": 512, "32": 512, "64": 256, "128": 128, "256": 64, "512": 32},
        "mapping_layers": 3,
        "extractor_channels": [32, 64, 128, 256],
        "classifier_channels": [32, 64, 128],
        "classifier_feat_dim": 128,
        "disc_channels": {"512": 16, "256": 32, "128": 64, "64": 128, "32": 256, "16": 512, "8": 512},
        "hypernet_latent": 512,
        "hypernet_hidden": 512,
        "hypernet_grouping": "resolution",
        "hypernet_input": "features",
    },
    "train": {
        "batch_size": 8,
        "lr": 2.5e-3,
        "adam_beta1": 0.0,
        "adam_beta2": 0.99,
        "p_recon": 0.2,
        "knn_k": 5,
        "r1_gamma": 10.0,
        "r1_interval": 16,
        "lambda_timbre_pre": 1.0,
        "lambda_recon_pre": 100.0,
        "lambda_timbre_fine": 20.0,
        "lambda_recon_fine": 200.0,
        "pre_iters": 200000,
        "fine_iters": 200000,
        "base_iters": 200000,
        "extractor_iters": 2000,
        "extractor_lr": 1e-3,
        "extractor_batch": 32,
        "invariance_weight": 1.0,
        "invariance_shift": 5,
        "classifier_iters": 1500,
        "classifier_lr": 1e-3,
        "classifier_batch": 32,
        "base_lambda_recon": 100.0,
        "base_lambda_timbre": 1.0,
        "grad_clip": 10.0,
        "checkpoint_every": 500,
        "log_every": 1,
        "divergence_guard_steps": 500,
        "divergence_guard_floor": 1e-4,
    },
    "toy": {
        "n_timbres": 8,
        "pitches": list(range(48, 60)),
        "samples_per_timbre_pitch": 16,
        "noise_level": 0.003,
        "valid_every": 8,
        "rng_seed": 1234,
    },
    "paths": {
        "data_dir": "data/toy",
        "runs_root": "runs",
    },
    "eval": {
        "griffin_lim_iters": 32,
        "latency_samples": 20,
    },
}

_DESK_OVERRIDES: dict[str, Any] = {
    "profile": "desk",
    "mel": {"window": 256, "fft_size": 512, "mel_bins": 64, "frames": 64, "norm_max_db": 40.0},
    "model": {
        "feat_dim": 64,
        "z_dim": 64,
        "w_dim": 128,
        "pitch_embed_dim": 32,
        "channels": {"8": 96, "16": 64, "32": 48, "64": 24},
        "extractor_channels": [24, 48, 96],
        "classifier_channels": [16, 32, 48],
        "classifier_feat_dim": 64,
        "disc_channels": {"64": 32, "32": 64, "16": 96, "8": 128},
        "hypernet_latent": 64,
        "hypernet_hidden": 128,
    },
    "train": {
        "pre_iters": 2000,
        "fine_iters": 2000,
        "base_iters": 2000,
        "extractor_iters": 1200,
        "classifier_iters": 1200,
    },
}

_MICRO_OVERRIDES: dict[str, Any] = {
    "profile": "micro",
    "mel": {"window": 128, "fft_size": 256, "mel_bins": 16, "frames": 16, "norm_max_db": 40.0},
    "model": {
        "feat_dim": 16,
        "z_dim": 16,
        "w_dim": 32,
        "pitch_embed_dim": 8,
        "channels": {"8": 24, "16": 16},
        "extractor_channels": [8, 16],
        "classifier_channels": [8, 16],
        "classifier_feat_dim": 16,
        "disc_channels": {"16": 16, "8": 24},
        "hypernet_latent": 16,
        "hypernet_hidden": 32,
    },
    "train": {
        "batch_size": 4,
        "pre_iters": 50,
        "fine_iters": 50,
        "base_iters": 50,
        "extractor_iters": 50,
        "classifier_iters": 50,
    },
    "toy": {"n_timbres": 3, "pitches": [52, 55, 58], "samples_per_timbre_pitch": 4, "valid_every": 4},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def profile_defaults(profile: str) -> dict:
    if profile == "paper":
        return copy.deepcopy(_PAPER)
    if profile == "desk":
        return _deep_merge(_PAPER, _DESK_OVERRIDES)
    if profile == "micro":
        return _deep_merge(_deep_merge(_PAPER, _DESK_OVERRIDES), _MICRO_OVERRIDES)
    raise ConfigError(f"unknown profile {profile!r} (expected paper, desk or micro)")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    """Parse layered key-value text into a full config tree."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), _parse_value(value.strip())))

    profile = "desk"
    for key, value in pairs:
        if key == "profile":
            profile = str(value)
    tree = profile_defaults(profile)
    for key, value in pairs:
        if key == "profile":
            continue
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return tree


@dataclass
class RunConfig:
    """Resolved configuration for one run; hashable for checkpoint pinning."""

    tree: dict = field(default_factory=lambda: profile_defaults("desk"))

    @classmethod
    def from_profile(cls, profile: str = "desk", **dotted_overrides: Any) -> "RunConfig":
        cfg = cls(profile_defaults(profile))
        for key, value in dotted_overrides.items():
            cfg.set(key.replace("__", "."), value)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls(parse_config_text(Path(path).read_text()))

    def get(self, dotted: str) -> Any:
        node: Any = self.tree
        for part in dotted.split("."):
            node = node[part]
        return node

    def set(self, dotted: str, value: Any) -> None:
        node = self.tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = value

    @property
    def profile(self) -> str:
        return self.tree["profile"]

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    @property
    def mel(self) -> MelConfig:
        return MelConfig(**self.tree["mel"])

    def model(self, key: str) -> Any:
        return self.tree["model"][key]

    def train(self, key: str) -> Any:
        return self.tree["train"][key]

    def channels(self) -> dict[int, int]:
        return {int(k): int(v) for k, v in self.tree["model"]["channels"].items()}

    def disc_channels(self) -> dict[int, int]:
        return {int(k): int(v) for k, v in self.tree["model"]["disc_channels"].items()}

    def canonical_json(self) -> str:
        return json.dumps(self.tree, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """Hash of the architecture/DSP contract a checkpoint must match.

        Only the profile, mel analysis and model sections participate; seeds,
        paths and training-control knobs are run parameters, not shape.
        """
        relevant = {k: self.tree[k] for k in ("profile", "mel", "model")}
        blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_text(self) -> str:
        """Flatten back to key-value text (profile line first)."""
        lines = [f"profile = {self.profile}"]

        def walk(node: dict, prefix: str):
            for k in sorted(node):
                v = node[k]
                if isinstance(v, dict):
                    walk(v, f"{prefix}{k}.")
                else:
                    lines.append(f"{prefix}{k} = {json.dumps(v)}")

        for section in sorted(self.tree):
            if section == "profile":
                continue
            v = self.tree[section]
            if isinstance(v, dict):
                walk(v, f"{section}.")
            else:
                lines.append(f"{section} = {json.dumps(v)}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())
