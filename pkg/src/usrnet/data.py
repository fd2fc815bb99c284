"""Dataset manifests (JSON lines), paired/synthetic sample realization, and
kind-uniform batch assembly."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import degrade, imgio
from .degrade import KIND_ORDER, KINDS, DegradationSpec

_ENTRY_FIELDS = {"clean_path", "degraded_path", "kind", "spec"}


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset record: a clean image paired with either a degraded file
    on disk or a synthesis spec (exactly one of the two)."""

    clean_path: str
    kind: str
    degraded_path: Optional[str] = None
    spec: Optional[DegradationSpec] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if (self.degraded_path is None) == (self.spec is None):
            raise ValueError("exactly one of degraded_path / spec must be present")


@dataclass(frozen=True)
class Sample:
    degraded: np.ndarray
    clean: np.ndarray
    kind: str


@dataclass(frozen=True)
class Batch:
    degraded: np.ndarray  # B x H x W x 3 float32
    clean: np.ndarray
    kind: str


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a JSON-lines manifest; relative image paths resolve against the
    manifest's directory. Errors name the offending line."""
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            unknown = set(record) - _ENTRY_FIELDS
            if unknown:
                raise ValueError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            if "clean_path" not in record or "kind" not in record:
                raise ValueError(f"{path}:{lineno}: clean_path and kind are required")
            try:
                spec = (
                    DegradationSpec.from_json_dict(record["spec"])
                    if record.get("spec") is not None
                    else None
                )
                entry = ManifestEntry(
                    clean_path=resolve(record["clean_path"]),
                    kind=record["kind"],
                    degraded_path=(
                        resolve(record["degraded_path"])
                        if record.get("degraded_path") is not None
                        else None
                    ),
                    spec=spec,
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            entries.append(entry)
    return entries


def realize(entry: ManifestEntry) -> Sample:
    """Load the clean image and produce its degraded counterpart, either from
    disk (paired mode) or by applying the spec (seed-deterministic)."""
    clean = imgio.read_image(entry.clean_path)
    if entry.spec is not None:
        degraded = degrade.degrade_image(clean, entry.spec)
    else:
        degraded = imgio.read_image(entry.degraded_path)
        if degraded.shape != clean.shape:
            raise ValueError(
                f"paired images disagree: {entry.degraded_path} is {degraded.shape[:2]}, "
                f"{entry.clean_path} is {clean.shape[:2]}"
            )
    return Sample(degraded=degraded, clean=clean, kind=entry.kind)


def present_kinds(entries) -> tuple:
    """Kinds appearing in the entries, in canonical order."""
    seen = {e.kind for e in entries}
    return tuple(k for k in KINDS if k in seen)


def batches(entries, patch: int, batch_size: int, seed: int,
            flip: bool = True) -> Iterator[Batch]:
    """One epoch of kind-uniform batches.

    Entries are grouped by kind, shuffled within each kind by `seed`, cropped
    to aligned `patch` x `patch` windows (identical offsets for degraded and
    clean, plus an optional shared horizontal flip), and emitted round-robin
    across kinds. The full sequence is a pure function of (entries, seed).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if patch < 1:
        raise ValueError(f"patch must be >= 1, got {patch}")
    entries = list(entries)
    kinds = present_kinds(entries)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBA7C)))

    grouped = {}
    for kind in kinds:
        group = [e for e in entries if e.kind == kind]
        order = rng.permutation(len(group))
        grouped[kind] = [group[i] for i in order]

    chunks = {
        kind: [group[i : i + batch_size] for i in range(0, len(group), batch_size)]
        for kind, group in grouped.items()
    }
    rounds = max((len(c) for c in chunks.values()), default=0)
    for step in range(rounds):
        for kind in kinds:
            if step >= len(chunks[kind]):
                continue
            degraded_stack, clean_stack = [], []
            for entry in chunks[kind][step]:
                sample = realize(entry)
                h, w = sample.clean.shape[:2]
                if patch > min(h, w):
                    raise ValueError(
                        f"patch {patch} exceeds image dims {h}x{w} ({entry.clean_path})"
                    )
                i = int(rng.integers(0, h - patch + 1))
                j = int(rng.integers(0, w - patch + 1))
                deg = sample.degraded[i : i + patch, j : j + patch]
                cln = sample.clean[i : i + patch, j : j + patch]
                if flip and rng.random() < 0.5:
                    deg = deg[:, ::-1]
                    cln = cln[:, ::-1]
                degraded_stack.append(deg)
                clean_stack.append(cln)
            yield Batch(
                degraded=np.stack(degraded_stack).astype(np.float32),
                clean=np.stack(clean_stack).astype(np.float32),
                kind=kind,
            )
