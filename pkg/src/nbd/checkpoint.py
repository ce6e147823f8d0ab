"""JSON checkpoints for learned divergence models.

Floats are written with ``repr`` precision, so a reload is bit-exact and
the same model always serializes to the same bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import MahalanobisModel
from .divergences import DivergenceModel, GeneratorFn, closed_form_generator
from .encoder import EncoderConfig, EncoderParams
from .icnn import IcnnConfig, IcnnParams

FORMAT = "nbd-checkpoint/1"


def _pack(arrays: dict[str, np.ndarray]) -> dict:
    return {k: {"shape": list(np.shape(v)), "data": [float(t) for t in np.ravel(v)]} for k, v in sorted(arrays.items())}


def _unpack(doc: dict) -> dict[str, np.ndarray]:
    return {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc.items()}


def model_header(model) -> dict:
    if isinstance(model, MahalanobisModel):
        return {"type": "mahalanobis", "dim": model.input_dim, "variant": model.variant}
    if not isinstance(model, DivergenceModel):
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    if isinstance(model.phi, IcnnParams):
        phi = {"kind": "icnn", "config": model.phi.config.to_dict()}
    else:
        if model.phi.name == "mahalanobis":
            raise ValueError("fixed mahalanobis generators are not checkpointed")
        phi = {"kind": "closed-form", "name": model.phi.name}
    enc = None if model.encoder is None else model.encoder.config.to_dict()
    return {"type": "divergence", "variant": model.variant, "phi": phi, "encoder": enc}


def to_document(model, meta: dict | None = None) -> dict:
    return {"format": FORMAT, "model": model_header(model), "params": _pack(model.arrays()), "meta": meta or {}}


def from_document(doc: dict):
    if doc.get("format") != FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    head, arrays = doc["model"], _unpack(doc["params"])
    if head["type"] == "mahalanobis":
        return MahalanobisModel(arrays["maha.L"], head.get("variant", "plain"))
    phi_head = head["phi"]
    phi: IcnnParams | GeneratorFn
    if phi_head["kind"] == "icnn":
        phi = IcnnParams.from_arrays(IcnnConfig(**phi_head["config"]), arrays)
    else:
        phi = closed_form_generator(phi_head["name"])
    enc = None
    if head["encoder"] is not None:
        enc = EncoderParams.from_arrays(EncoderConfig(**head["encoder"]), arrays)
    return DivergenceModel(phi, enc, head["variant"])


def save_checkpoint(model, path, meta: dict | None = None) -> None:
    text = json.dumps(to_document(model, meta), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def load_checkpoint(path):
    """Returns ``(model, meta)``."""
    doc = json.loads(Path(path).read_text())
    return from_document(doc), doc.get("meta", {})
