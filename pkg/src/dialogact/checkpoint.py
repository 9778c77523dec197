"""Checkpoint archives.

A checkpoint is a zip file holding ``manifest.json`` (config, labels,
vocabulary with content hashes, parameter names/shapes/dtypes) and one
``params/NNN.bin`` payload per parameter: the raw row-major little-endian
array bytes. Archive entries carry a fixed timestamp, so identical models
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path

import numpy as np

from dialogact.config import ModelConfig
from dialogact.corpus import LabelSet, Vocabulary
from dialogact.errors import FormatError
from dialogact.model import ConversationModel

FORMAT = "dialogact-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _digest(items: list[str]) -> str:
    return hashlib.sha256("\n".join(items).encode("utf-8")).hexdigest()


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(model: ConversationModel, path: str | Path, extra: dict | None = None) -> None:
    from dataclasses import asdict

    params = []
    payloads = []
    for i, (name, t) in enumerate(model.params.items()):
        le = t.data.astype(t.data.dtype.newbyteorder("<"), copy=False)
        fname = f"params/{i:03d}.bin"
        params.append({"name": name, "shape": list(t.shape), "dtype": le.dtype.str,
                       "trainable": t.requires_grad, "file": fname})
        payloads.append((fname, np.ascontiguousarray(le).tobytes()))
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "precision": model.config.precision,
        "config": asdict(model.config),
        "labels": model.labels.labels,
        "vocabulary": {
            "words": model.vocab.words,
            "chars": model.vocab.chars,
            "words_sha256": _digest(model.vocab.words),
            "chars_sha256": _digest(model.vocab.chars),
        },
        "labels_sha256": _digest(model.labels.labels),
        "params": params,
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry("manifest.json"), json.dumps(manifest, indent=1, sort_keys=True))
        for fname, blob in payloads:
            zf.writestr(_entry(fname), blob)


def read_manifest(path: str | Path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{path}: unknown checkpoint format {manifest.get('format')!r}")
    return manifest


def load_checkpoint(path: str | Path) -> ConversationModel:
    manifest = read_manifest(path)
    voc = manifest["vocabulary"]
    if _digest(voc["words"]) != voc["words_sha256"] or _digest(voc["chars"]) != voc["chars_sha256"]:
        raise FormatError(f"{path}: vocabulary hash mismatch")
    if _digest(manifest["labels"]) != manifest["labels_sha256"]:
        raise FormatError(f"{path}: label set hash mismatch")
    config = ModelConfig(**manifest["config"])
    model = ConversationModel(config, Vocabulary(voc["words"], voc["chars"]), LabelSet(manifest["labels"]))
    listed = {p["name"] for p in manifest["params"]}
    if listed != set(model.params):
        raise FormatError(f"{path}: parameter set differs from the model built by its config")
    with zipfile.ZipFile(path) as zf:
        for p in manifest["params"]:
            arr = np.frombuffer(zf.read(p["file"]), dtype=np.dtype(p["dtype"]))
            target = model.params[p["name"]]
            if arr.size != int(np.prod(p["shape"])) or tuple(p["shape"]) != target.shape:
                raise FormatError(f"{path}: parameter {p['name']} has the wrong size")
            target.data[...] = arr.reshape(p["shape"])
    return model
