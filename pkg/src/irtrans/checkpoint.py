"""Self-describing checkpoint files: JSON header + raw tensor payload.

The header carries the format version, model config, vocab hash, step
count, tensor directory, optimizer moments and RNG state, so training
resumes bit-exactly. save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointMismatch
from .model import ModelConfig, ModelState

MAGIC = b"IRTRCKP1"
FORMAT_VERSION = 1


def save_checkpoint(path: str, state: ModelState, step: int, vocab_hash: str,
                    opt_moments: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
                    opt_t: int = 0, rng_state: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {k: p.data for k, p in state.params.items()}
    if opt_moments:
        for k, (m, v) in opt_moments.items():
            arrays[f"adam.m.{k}"] = m
            arrays[f"adam.v.{k}"] = v

    names = sorted(arrays)
    directory = []
    offset = 0
    for name in names:
        a = arrays[name]
        directory.append({"name": name, "shape": list(a.shape),
                          "dtype": str(a.dtype), "offset": offset})
        offset += a.nbytes
    header = {
        "version": FORMAT_VERSION,
        "config": asdict(state.config),
        "vocab_hash": vocab_hash,
        "step": step,
        "opt_t": opt_t,
        "rng_state": rng_state,
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(arrays[name]).tobytes())


def load_checkpoint(path: str) -> dict:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointMismatch(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        if header["version"] != FORMAT_VERSION:
            raise CheckpointMismatch(
                f"checkpoint version {header['version']} != {FORMAT_VERSION}")
        payload = f.read()

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        a = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        arrays[entry["name"]] = a.reshape(entry["shape"]).copy()

    config = ModelConfig(**header["config"])
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()
              if not k.startswith("adam.")}
    state = ModelState(config, params)
    opt_moments = {}
    for k in arrays:
        if k.startswith("adam.m."):
            name = k[len("adam.m."):]
            opt_moments[name] = (arrays[k], arrays[f"adam.v.{name}"])
    return {
        "state": state,
        "step": header["step"],
        "vocab_hash": header["vocab_hash"],
        "opt_moments": opt_moments or None,
        "opt_t": header.get("opt_t", 0),
        "rng_state": header.get("rng_state"),
    }
