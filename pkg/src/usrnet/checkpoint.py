"""Checkpoint archives.

A checkpoint is a zip file holding `manifest.json` (format version, model
hyperparameters, node order, run counters, per-entry shapes and SHA-256
digests) plus one raw little-endian float32 blob per parameter array. Loading
fails loudly on any missing, extra, mis-shaped, or corrupted entry. Optimizer
moment buffers ride along under an `optim/` prefix using the same encoding.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch

FORMAT_VERSION = 1

_OPTIM_KEYS = ("exp_avg", "exp_avg_sq", "step")


def _to_bytes(tensor: torch.Tensor) -> tuple[bytes, tuple]:
    arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
    return np.ascontiguousarray(arr).tobytes(), tuple(arr.shape)


@dataclass
class Checkpoint:
    model_config: dict
    arrays: dict  # entry name -> float32 ndarray
    epoch: int = 0
    step: int = 0
    train_config: dict | None = None

    def model_entries(self) -> dict:
        return {n[len("model/"):]: a for n, a in self.arrays.items() if n.startswith("model/")}

    def optim_entries(self) -> dict:
        return {n[len("optim/"):]: a for n, a in self.arrays.items() if n.startswith("optim/")}


def save_checkpoint(path, model, optimizer=None, epoch: int = 0, step: int = 0,
                    train_config: dict | None = None) -> None:
    """Atomically write the archive (temp file + rename)."""
    blobs: dict[str, bytes] = {}
    entries = []

    def add(name, tensor):
        data, shape = _to_bytes(tensor)
        blobs[name] = data
        entries.append(
            {"name": name, "shape": list(shape), "sha256": hashlib.sha256(data).hexdigest()}
        )

    for name, p in model.named_parameters():
        add(f"model/{name}", p)

    if optimizer is not None:
        params_by_id = {id(p): name for name, p in model.named_parameters()}
        for p, state in optimizer.state.items():
            name = params_by_id.get(id(p))
            if name is None:
                raise ValueError("optimizer holds a parameter not found in the model")
            for key in _OPTIM_KEYS:
                value = state[key]
                if not torch.is_tensor(value):
                    value = torch.tensor(float(value))
                add(f"optim/{name}/{key}", value)

    manifest = {
        "format_version": FORMAT_VERSION,
        "model": dict(model.config),
        "epoch": int(epoch),
        "step": int(step),
        "train_config": train_config,
        "entries": entries,
    }

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            stamp = (1980, 1, 1, 0, 0, 0)  # fixed timestamps keep saves byte-stable
            zf.writestr(zipfile.ZipInfo("manifest.json", stamp), json.dumps(manifest, indent=1))
            for name, data in blobs.items():
                zf.writestr(zipfile.ZipInfo(f"data/{name}.bin", stamp), data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path) -> Checkpoint:
    """Read and verify an archive; checksum or structure failures raise before
    any state is returned."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format_version") != FORMAT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint format version {manifest.get('format_version')!r}"
                )
            listed = {e["name"] for e in manifest["entries"]}
            stored = {
                n[len("data/"):-len(".bin")]
                for n in zf.namelist()
                if n.startswith("data/") and n.endswith(".bin")
            }
            if listed != stored:
                raise ValueError(
                    f"archive entries disagree with manifest: missing {sorted(listed - stored)}, "
                    f"unlisted {sorted(stored - listed)}"
                )
            arrays = {}
            for entry in manifest["entries"]:
                data = zf.read(f"data/{entry['name']}.bin")
                digest = hashlib.sha256(data).hexdigest()
                if digest != entry["sha256"]:
                    raise ValueError(f"checksum mismatch for entry {entry['name']!r}")
                arr = np.frombuffer(data, dtype="<f4")
                expected = tuple(entry["shape"])
                if arr.size != int(np.prod(expected, dtype=np.int64)):
                    raise ValueError(f"entry {entry['name']!r} has wrong byte length")
                arrays[entry["name"]] = arr.reshape(expected).copy()
    except zipfile.BadZipFile as exc:
        raise ValueError(f"corrupt checkpoint archive {path}: {exc}") from exc
    except KeyError as exc:
        raise ValueError(f"malformed checkpoint archive {path}: {exc}") from exc
    return Checkpoint(
        model_config=manifest["model"],
        arrays=arrays,
        epoch=int(manifest.get("epoch", 0)),
        step=int(manifest.get("step", 0)),
        train_config=manifest.get("train_config"),
    )


def load_model_state(model, ckpt: Checkpoint) -> None:
    """Copy parameters into `model`; the entry set must match exactly."""
    params = dict(model.named_parameters())
    saved = ckpt.model_entries()
    missing = sorted(set(params) - set(saved))
    extra = sorted(set(saved) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint/model mismatch: missing {missing}, extra {extra}")
    for name, p in params.items():
        arr = saved[name]
        if tuple(arr.shape) != tuple(p.shape):
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {tuple(arr.shape)} vs model {tuple(p.shape)}"
            )
        with torch.no_grad():
            p.copy_(torch.from_numpy(arr))


def load_optimizer_state(optimizer, model, ckpt: Checkpoint) -> None:
    """Rebuild Adam moments exactly; parameters without saved state stay fresh."""
    saved = ckpt.optim_entries()
    grouped: dict[str, dict] = {}
    for key, arr in saved.items():
        name, _, slot = key.rpartition("/")
        grouped.setdefault(name, {})[slot] = arr
    params = dict(model.named_parameters())
    for name, slots in grouped.items():
        if name not in params:
            raise ValueError(f"optimizer state for unknown parameter {name!r}")
        if set(slots) != set(_OPTIM_KEYS):
            raise ValueError(f"incomplete optimizer state for {name!r}")
        p = params[name]
        optimizer.state[p] = {
            "step": torch.from_numpy(slots["step"].reshape(())).clone(),
            "exp_avg": torch.from_numpy(slots["exp_avg"]).clone(),
            "exp_avg_sq": torch.from_numpy(slots["exp_avg_sq"]).clone(),
        }


def build_model(ckpt: Checkpoint):
    """Instantiate the architecture recorded in the manifest and load weights."""
    from .model import USRNet

    model = USRNet.from_config(ckpt.model_config)
    load_model_state(model, ckpt)
    return model
