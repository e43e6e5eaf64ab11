"""Line-based configuration for the CLI: dotted keys, documented defaults.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are rejected. `--set key=value` on the command line overrides
file values. All randomness derives from the top-level `seed` unless a
component seed is set explicitly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .dtw import DtwConfig
from .errors import PenliveError
from .features import FeatureConfig
from .slm import NoiseConfig
from .train import TrainConfig


class ConfigError(PenliveError):
    """Bad key, bad value, or unreadable config file (a usage error)."""


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}

# key -> (type tag, default); single source of truth for validation and docs
SCHEMA: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "jobs": ("int", 1),
    "synth.rate_hz": ("float", 100.0),
    "synth.per_sample": ("int", 1),
    "noise.sd_d_rel": ("float", 0.08),
    "noise.sd_t0": ("float", 0.004),
    "noise.sd_mu": ("float", 0.04),
    "noise.sd_sigma": ("float", 0.02),
    "noise.sd_theta": ("float", 0.035),
    "noise.seed": ("optint", None),          # defaults to top-level seed
    "extract.max_strokes": ("int", 12),
    "extract.refine_passes": ("int", 2),
    "features.smooth": ("bool", True),
    "features.downsample_half": ("bool", False),
    "features.cap": ("int", 400),
    "dtw.band_radius": ("optint", None),
    "dtw.early_abandon": ("bool", True),
    "train.learning_rate": ("float", 0.0005),
    "train.beta1": ("float", 0.9),
    "train.beta2": ("float", 0.999),
    "train.adam_epsilon": ("float", 1e-8),
    "train.batch_size": ("int", 128),
    "train.max_epochs": ("int", 400),
    "train.patience": ("int", 40),
    "train.seed": ("optint", None),
    "train.dtype": ("str", "float64"),
    "split.train": ("float", 0.7),
    "split.val": ("float", 0.1),
    "split.test": ("float", 0.2),
    "split.seed": ("optint", None),
    "split.stratify": ("bool", True),
    "model.system": ("str", "gru"),
    "model.hidden": ("int", 100),
    "model.image_size": ("int", 64),
    "model.seed": ("optint", None),
    "experiment.train_device": ("optstr", None),
    "experiment.test_device": ("optstr", None),
}


def _parse_value(key: str, raw: str):
    kind, _ = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        if kind == "optint":
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "optstr":
            return None if raw.lower() in ("", "none") else raw
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})") from None


@dataclass
class AppConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[list[str]] = None) -> "AppConfig":
        values = {k: default for k, (_, default) in SCHEMA.items()}
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    lines = fh.readlines()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from None
            for line_no, line in enumerate(lines, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
                key, raw = (part.strip() for part in stripped.split("=", 1))
                if key not in SCHEMA:
                    raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
                values[key] = _parse_value(key, raw)
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, raw = (part.strip() for part in item.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _parse_value(key, raw)
        return cls(values=values)

    def __getitem__(self, key: str):
        return self.values[key]

    def _seed(self, key: str) -> int:
        v = self.values[key]
        return self.values["seed"] if v is None else v

    def digest(self) -> str:
        text = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # typed views ---------------------------------------------------------

    def noise(self) -> NoiseConfig:
        return NoiseConfig(
            sd_D_rel=self["noise.sd_d_rel"],
            sd_t0=self["noise.sd_t0"],
            sd_mu=self["noise.sd_mu"],
            sd_sigma=self["noise.sd_sigma"],
            sd_theta=self["noise.sd_theta"],
            rng_seed=self._seed("noise.seed"),
        )

    def features(self) -> FeatureConfig:
        return FeatureConfig(
            smooth_window=3 if self["features.smooth"] else 1,
            downsample=self["features.downsample_half"],
            cap=self["features.cap"],
        )

    def dtw(self) -> DtwConfig:
        return DtwConfig(
            band_radius=self["dtw.band_radius"],
            early_abandon=self["dtw.early_abandon"],
        )

    def train(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["train.learning_rate"],
            beta1=self["train.beta1"],
            beta2=self["train.beta2"],
            adam_epsilon=self["train.adam_epsilon"],
            batch_size=self["train.batch_size"],
            max_epochs=self["train.max_epochs"],
            patience=self["train.patience"],
            seed=self._seed("train.seed"),
        )

    def split(self):
        from .evaluate import SplitSpec

        return SplitSpec(
            fractions=(self["split.train"], self["split.val"], self["split.test"]),
            seed=self._seed("split.seed"),
            stratify_by_label=self["split.stratify"],
        )

    def provenance(self, extra: Optional[dict] = None) -> dict:
        from . import __version__

        out = {"config_sha256": self.digest(), "seed": self.values["seed"],
               "package_version": __version__, "format": "penlive-run"}
        if extra:
            out.update(extra)
        return out
