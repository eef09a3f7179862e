"""Self-describing checkpoint files.

Layout: a magic line, a pretty-printed JSON header, an ``END_HEADER`` line,
then every parameter array in header order as little-endian float64.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .net import MultiStreamNet

MAGIC = b"PSGESTURE-CHECKPOINT\n"
END = b"\nEND_HEADER\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def architecture(net: MultiStreamNet) -> dict:
    return {
        "variant": net.arch,
        "streams": [list(s) for s in net.streams],
        "block_dims": net.block_dims,
        "n_classes": net.n_classes,
        "hidden": net.hidden,
        "dropout": net.dropout,
        "activation": net.activation,
        "ttm": net.ttm,
        "n_frames": net.n_frames,
        "ln_hidden": net.ln_hidden,
        "ln_activation": net.ln_activation,
    }


def save_checkpoint(path, net: MultiStreamNet, meta: dict | None = None) -> None:
    """Write ``net`` and free-form ``meta`` (config, hashes, class names)."""
    layout, offset, chunks = [], 0, []
    for name, arr in net.params.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        offset += len(data)
        chunks.append(data)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture(net),
        "params": layout,
        "dtype": "<f8",
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    text = json.dumps(header, indent=2, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC + text + END + payload)


def read_header(path) -> dict:
    raw = Path(path).read_bytes()
    return _split(raw)[0]


def _split(raw: bytes) -> tuple[dict, bytes]:
    if not raw.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic line)")
    end = raw.find(END)
    if end < 0:
        raise CheckpointError("checkpoint header is not terminated")
    header = json.loads(raw[len(MAGIC):end].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    return header, raw[end + len(END):]


def load_checkpoint(path) -> tuple[MultiStreamNet, dict]:
    header, payload = _split(Path(path).read_bytes())
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError("checkpoint payload is corrupt (hash mismatch)")
    arch = dict(header["architecture"])
    arch.pop("variant")
    net = MultiStreamNet(**arch)
    params = {}
    for entry in header["params"]:
        chunk = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(entry["shape"]).astype(np.float64)
    net.params = params
    return net, header["meta"]


def save_classifier(path, clf, meta: dict | None = None) -> None:
    """Checkpoint a fitted ``MultiStreamClassifier`` with what is needed to rebuild it."""
    params = clf.get_params()
    if params["aoh"] is not None:
        params["aoh"] = params["aoh"].to_dict()
    params["features"] = list(params["features"])
    params["augment"] = list(params["augment"])
    fz = clf.featurizer_
    full = {
        "estimator_params": params,
        "classes": clf.classes_.tolist(),
        "input_shape": [fz.n_frames_, fz.n_joints_, fz.aoh_.d],
        "feature_config_hash": fz.config_hash_,
        "feature_dims": fz.feature_dims_,
    }
    full.update(meta or {})
    save_checkpoint(path, clf.net_, full)


def load_classifier(path):
    """Inverse of ``save_classifier``; returns ``(classifier, meta)``."""
    from .estimator import MultiStreamClassifier
    from .features import AohConfig

    net, meta = load_checkpoint(path)
    try:
        params = dict(meta["estimator_params"])
        F, J, d = meta["input_shape"]
        classes = meta["classes"]
    except KeyError as exc:
        raise CheckpointError(f"checkpoint has no classifier metadata ({exc.args[0]!r})") from exc
    if params["aoh"] is not None:
        params["aoh"] = AohConfig.from_dict(params["aoh"])
    params["features"] = tuple(params["features"])
    params["augment"] = tuple(params["augment"])
    clf = MultiStreamClassifier(**params)
    clf.featurizer_ = clf._make_featurizer().fit(np.zeros((1, F, J, d)))
    if clf.featurizer_.config_hash_ != meta["feature_config_hash"]:
        raise CheckpointError("stored feature configuration does not reproduce its hash")
    clf.classes_ = np.asarray(classes)
    clf.net_ = net
    return clf, meta
