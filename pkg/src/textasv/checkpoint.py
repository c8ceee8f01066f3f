"""Checkpoint file format.

One file: a JSON header line (UTF-8, newline-terminated) followed by
row-major little-endian float64 tensor payloads. The header declares
dims, seed, epoch, the class-index-to-speaker mapping, and the byte
offset and size of every tensor relative to the end of the header.
"""

import json

import numpy as np

from .aam import ClassifierWeights
from .encoder import EncoderConfig, EncoderParams
from .errors import BadCheckpoint

FORMAT_NAME = "textasv-checkpoint"
TENSOR_ORDER = ("token_embeddings", "hidden_weight", "hidden_bias",
                "penult_weight", "penult_bias", "classifier_weight")


def save_checkpoint(path, params, classifier, config, seed, epoch,
                    class_speakers):
    tensors = dict(params.tensors())
    tensors["classifier_weight"] = classifier.weight
    entries = []
    offset = 0
    for name in TENSOR_ORDER:
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        nbytes = arr.size * 8
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format": FORMAT_NAME,
        "version": 1,
        "dims": {
            "vocab_size": config.vocab_size,
            "embed_dim": config.embed_dim,
            "hidden_dim": config.hidden_dim,
            "penult_dim": config.penult_dim,
            "dropout_p": config.dropout_p,
            "max_seq_len": config.max_seq_len,
            "activation": config.activation,
            "num_classes": classifier.weight.shape[0],
        },
        "seed": seed,
        "epoch": epoch,
        "class_speakers": list(class_speakers),
        "tensors": entries,
    }
    with open(path, "wb") as handle:
        handle.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for name in TENSOR_ORDER:
            handle.write(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, classifier, config, header)."""
    with open(path, "rb") as handle:
        header_line = handle.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadCheckpoint(f"unreadable checkpoint header: {exc}") from exc
        if header.get("format") != FORMAT_NAME:
            raise BadCheckpoint("not a textasv checkpoint file")
        payload = handle.read()

    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise BadCheckpoint(f"tensor {entry['name']} overruns the file")
        flat = np.frombuffer(payload[start:start + nbytes], dtype="<f8")
        tensors[entry["name"]] = flat.reshape(entry["shape"]).astype(np.float64)

    missing = [n for n in TENSOR_ORDER if n not in tensors]
    if missing:
        raise BadCheckpoint(f"checkpoint missing tensors {missing}")

    dims = header["dims"]
    config = EncoderConfig(
        vocab_size=dims["vocab_size"], embed_dim=dims["embed_dim"],
        hidden_dim=dims["hidden_dim"], penult_dim=dims["penult_dim"],
        dropout_p=dims["dropout_p"], max_seq_len=dims["max_seq_len"],
        activation=dims.get("activation", "tanh"))
    params = EncoderParams(
        token_embeddings=tensors["token_embeddings"],
        hidden_weight=tensors["hidden_weight"],
        hidden_bias=tensors["hidden_bias"],
        penult_weight=tensors["penult_weight"],
        penult_bias=tensors["penult_bias"])
    classifier = ClassifierWeights(weight=tensors["classifier_weight"])
    return params, classifier, config, header
