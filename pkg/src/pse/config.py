"""Config files, dotted-key overrides, and resolved-config snapshots.

Precedence: built-in defaults < config file < --override flags. Unknown
keys are rejected anywhere in the tree. Every command writes the fully
resolved config next to its outputs so a run can be replayed exactly.
"""

from __future__ import annotations

import copy
import json
import os


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "seed": 0,
    "data_root": None,
    "stft": {
        "fft_size": 512,
        "window_size": 512,
        "hop_size": 256,
        "window": "hann",
        "drop_dc": True,
    },
    "simulate": {
        "n_speakers": 6,
        "utterances_per_speaker": 4,
        "utterance_seconds": 6.0,
        "enrollment_clips": 3,
        "enrollment_clip_seconds": 4.0,
        "n_noises": 4,
        "noise_seconds": 8.0,
        "train_samples": 24,
        "valid_samples": 6,
        "test_mixtures_per_scenario": 6,
        "segment_seconds": 10.0,
        "ts1_fraction": 0.6,
        "snr_db_range": [0.0, 20.0],
        "sir_db_range": [0.0, 10.0],
        "max_reflection_order": 6,
        "longform": False,
    },
    "embedding": {
        "dimension": 128,
        "num_bands": 64,
        "seed": 7,
    },
    "model": {
        "kind": "pdcattunet",
        "preset": "small",
        "config": None,
    },
    "loss": {
        "loss": "plcpa",
        "alpha": None,
        "beta": 1.0,
        "p": 0.3,
        "mt": {"enabled": False, "lambda": 1.0},
    },
    "train": {
        "optimizer": "adam",
        "learning_rate": 1e-3,
        "grad_clip": 5.0,
        "batch_size": 4,
        "segment_seconds": 10.0,
        "max_steps": 500,
        "validation_interval": 100,
        "dvector_source": None,
    },
}

# subtrees whose values are free-form (not validated against the defaults)
_FREE_KEYS = {("model", "config")}


def _check_keys(base: dict, incoming: dict, path=()):
    for key, value in incoming.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(where)!r}")
        if where in _FREE_KEYS:
            continue
        if isinstance(base[key], dict) and isinstance(value, dict):
            _check_keys(base[key], value, where)


def _merge(base: dict, incoming: dict, path=()):
    out = copy.deepcopy(base)
    for key, value in incoming.items():
        where = path + (key,)
        if isinstance(base.get(key), dict) and isinstance(value, dict) and where not in _FREE_KEYS:
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """Parse ``dotted.key=value``; the value is JSON when it parses, else a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_override(cfg: dict, keys: list[str], value) -> None:
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key {'.'.join(keys)!r}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {'.'.join(keys)!r}")
    node[keys[-1]] = value


def load_config(path=None, overrides=(), seed=None, preset=None) -> dict:
    """Defaults, then the config file, then overrides, then CLI fields."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            try:
                incoming = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(incoming, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        _check_keys(cfg, incoming)
        cfg = _merge(cfg, incoming)
    for text in overrides:
        keys, value = parse_override(text)
        apply_override(cfg, keys, value)
    if seed is not None:
        cfg["seed"] = seed
    if preset is not None:
        cfg["model"]["preset"] = preset
    return cfg


def write_snapshot(cfg: dict, out_dir, name="resolved_config.json") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(os.fspath(out_dir), name)
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)
    return path


def train_config_from(cfg: dict) -> "TrainConfig":
    from .training import TrainConfig

    loss = cfg["loss"]
    trn = cfg["train"]
    model = cfg["model"]
    return TrainConfig(
        model_kind=model["kind"],
        preset=model["preset"],
        model_config=model["config"],
        loss=loss["loss"],
        alpha=loss["alpha"],
        beta=loss["beta"],
        p=loss["p"],
        mt_enabled=loss["mt"]["enabled"],
        mt_lambda=loss["mt"]["lambda"],
        optimizer=trn["optimizer"],
        learning_rate=trn["learning_rate"],
        grad_clip=trn["grad_clip"],
        batch_size=trn["batch_size"],
        segment_seconds=trn["segment_seconds"],
        max_steps=trn["max_steps"],
        validation_interval=trn["validation_interval"],
        seed=cfg["seed"],
        dvector_source=trn["dvector_source"],
    )


def stft_config_from(cfg: dict) -> "StftConfig":
    from .dsp import StftConfig

    return StftConfig.from_dict(cfg["stft"])
