"""Versioned checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON
header (model kind and config, STFT config, array directory, config hash,
free-form training metadata), then the raw little-endian array bytes in
directory order. Every byte is a pure function of the saved content, so
identical training runs produce identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np
import torch

from ..dsp import StftConfig

MAGIC = b"PSECKPT1"
FORMAT_VERSION = 1


def _config_hash(model_kind: str, model_config: dict, stft_config: dict) -> str:
    blob = json.dumps(
        {"model_kind": model_kind, "model_config": model_config, "stft": stft_config},
        sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path: str | os.PathLike, model_kind: str, model_config: dict,
                    state_dict: dict, stft_config: StftConfig,
                    extra: dict | None = None) -> None:
    stft_dict = stft_config.to_dict()
    arrays = []
    blobs = []
    for name, tensor in state_dict.items():
        arr = tensor.detach().cpu().numpy()
        arrays.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr).tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "model_config": model_config,
        "stft": stft_dict,
        "config_hash": _config_hash(model_kind, model_config, stft_dict),
        "extra": extra or {},
        "arrays": arrays,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | os.PathLike) -> dict:
    """Parse and validate a checkpoint; returns header fields + state_dict."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        expected = _config_hash(header["model_kind"], header["model_config"], header["stft"])
        if header["config_hash"] != expected:
            raise ValueError(f"{path}: config hash mismatch; file corrupt or edited")
        state_dict = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
            state_dict[entry["name"]] = torch.from_numpy(arr)
    return {
        "model_kind": header["model_kind"],
        "model_config": header["model_config"],
        "stft": StftConfig.from_dict(header["stft"]),
        "extra": header["extra"],
        "state_dict": state_dict,
    }
