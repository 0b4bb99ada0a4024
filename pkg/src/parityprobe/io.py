"""JSON records for operators, POVMs, channels and instruments.

A matrix is stored as ``{"dim": d, "re": [[...]], "im": [[...]]}``; non-square
matrices (Kraus operators) additionally carry ``"shape": [rows, cols]``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .opcore import Channel, OperatorError, Povm, QuantumInstrument


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=complex)
    rec = {"dim": int(A.shape[1]), "re": A.real.tolist(), "im": A.imag.tolist()}
    if A.shape[0] != A.shape[1]:
        rec["shape"] = list(A.shape)
    return rec


def matrix_from_json(rec: dict) -> np.ndarray:
    try:
        A = np.asarray(rec["re"], dtype=float) + 1j * np.asarray(rec["im"], dtype=float)
    except KeyError as exc:
        raise OperatorError(f"matrix record missing field {exc}") from None
    A = A.reshape(rec.get("shape", A.shape))
    if A.shape[1] != rec["dim"]:
        raise OperatorError("matrix record 'dim' disagrees with its entries")
    return A


def povm_to_json(povm: Povm) -> dict:
    return {"type": "povm", "dim": povm.dim, "effects": [matrix_to_json(E) for E in povm.effects]}


def povm_from_json(rec: dict) -> Povm:
    return Povm(tuple(matrix_from_json(r) for r in rec["effects"]))


def channel_to_json(ch: Channel) -> dict:
    d_in, d_out = ch.dims
    return {
        "type": "channel",
        "dims": [d_in, d_out],
        "trace_preserving": ch.trace_preserving,
        "kraus": [matrix_to_json(K) for K in ch.kraus],
    }


def channel_from_json(rec: dict) -> Channel:
    return Channel(tuple(matrix_from_json(r) for r in rec["kraus"]),
                   trace_preserving=rec.get("trace_preserving", True))


def instrument_to_json(qi: QuantumInstrument) -> dict:
    return {
        "type": "instrument",
        "dim": qi.dim,
        "labels": [lab if isinstance(lab, (int, str)) else list(lab) for lab in qi.labels],
        "branches": [[matrix_to_json(K) for K in b.kraus] for b in qi.branches],
    }


def instrument_from_json(rec: dict) -> QuantumInstrument:
    branches = tuple(
        Channel(tuple(matrix_from_json(r) for r in ks), trace_preserving=False)
        for ks in rec["branches"]
    )
    labels = tuple(tuple(lab) if isinstance(lab, list) else lab for lab in rec.get("labels", ()))
    return QuantumInstrument(branches, labels)


_DUMPERS = {Povm: povm_to_json, Channel: channel_to_json, QuantumInstrument: instrument_to_json}
_LOADERS = {"povm": povm_from_json, "channel": channel_from_json, "instrument": instrument_from_json}


def to_json(obj) -> dict:
    for cls, dump in _DUMPERS.items():
        if isinstance(obj, cls):
            return dump(obj)
    return matrix_to_json(obj)


def from_json(rec: dict):
    loader = _LOADERS.get(rec.get("type"))
    return loader(rec) if loader else matrix_from_json(rec)


def dump(obj, path) -> None:
    Path(path).write_text(json.dumps(to_json(obj), sort_keys=True))


def load(path):
    return from_json(json.loads(Path(path).read_text()))
