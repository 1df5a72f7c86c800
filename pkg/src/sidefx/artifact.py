"""Save and load trained models as self-describing JSON files.

Floats are written with Python's shortest round-trip representation, so a
reloaded model reproduces predictions bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import VocabEntry
from .fileio import atomic_write_text
from .gnn import GnnParams
from .molgraph import ELEMENT_GROUPS
from .nn import Dense, Mlp

MODEL_FORMAT = "sidefx-model"
MODEL_VERSION = 1


class ArtifactError(ValueError):
    """A model file is malformed, inconsistent, or of another format version."""


@dataclass
class ModelArtifact:
    params: GnnParams
    vocab: list[VocabEntry]
    train_config: dict = field(default_factory=dict)
    dataset_fingerprint: str = ""
    grouping: dict = field(default_factory=lambda: dict(ELEMENT_GROUPS))

    def __post_init__(self):
        if len(self.vocab) != self.params.num_classes:
            raise ArtifactError(
                f"vocabulary has {len(self.vocab)} entries but the model predicts {self.params.num_classes}"
            )
        if dict(self.grouping) != dict(ELEMENT_GROUPS):
            raise ArtifactError("element grouping differs from the built-in table")


def file_fingerprint(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "init": mlp.init,
        "layers": [
            {"activation": l.activation, "weight": l.weight.tolist(), "bias": l.bias.tolist()}
            for l in mlp.layers
        ],
    }


def _mlp_from_dict(d: dict) -> Mlp:
    return Mlp(
        [
            Dense(
                np.array(l["weight"], dtype=np.float64).reshape(len(l["bias"]), -1),
                np.array(l["bias"], dtype=np.float64),
                l["activation"],
            )
            for l in d["layers"]
        ],
        d["init"],
    )


def dumps_model(art: ModelArtifact) -> str:
    p = art.params
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "architecture": {
            "state_dim": p.state_dim,
            "iterations": p.iterations,
            "aggregation": p.aggregation,
            "num_classes": p.num_classes,
        },
        "grouping": dict(sorted(art.grouping.items())),
        "vocab": [{"id": v.id, "name": v.name, "count": v.count} for v in art.vocab],
        "train_config": art.train_config,
        "dataset_fingerprint": art.dataset_fingerprint,
        "weights": {"f_w": _mlp_to_dict(p.f_w), "g_w": _mlp_to_dict(p.g_w)},
    }
    return json.dumps(doc, indent=1) + "\n"


def loads_model(text: str) -> ModelArtifact:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"not a JSON model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ArtifactError(f"not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ArtifactError(
            f"model format version {doc.get('version')!r} is not supported (expected {MODEL_VERSION})"
        )
    try:
        arch = doc["architecture"]
        params = GnnParams(
            _mlp_from_dict(doc["weights"]["f_w"]),
            _mlp_from_dict(doc["weights"]["g_w"]),
            int(arch["state_dim"]),
            int(arch["iterations"]),
            float(arch["aggregation"]),
        )
        vocab = [VocabEntry(v["id"], v["name"], int(v["count"])) for v in doc["vocab"]]
        return ModelArtifact(
            params,
            vocab,
            doc.get("train_config", {}),
            doc.get("dataset_fingerprint", ""),
            doc["grouping"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ArtifactError):
            raise
        raise ArtifactError(f"malformed model file: {exc}") from None


def save_model(art: ModelArtifact, path: str | Path) -> None:
    atomic_write_text(path, dumps_model(art))


def load_model(path: str | Path) -> ModelArtifact:
    return loads_model(Path(path).read_text())
