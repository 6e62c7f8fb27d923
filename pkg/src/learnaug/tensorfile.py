"""Byte-deterministic container for named float64 arrays.

Layout::

    LEARNAUG-TENSORS 1\n
    <one-line JSON header, keys sorted>\n
    <array payloads, little-endian float64, C order, in header order>

The header holds ``kind``, a free ``meta`` dict and ``arrays``: a list of
``[name, shape]`` pairs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .augment import ARRAY_NAMES, AugmentParams
from .encoder import EncoderConfig, EncoderState, config_dict
from .errors import ParseError

MAGIC = b"LEARNAUG-TENSORS 1\n"


def save_arrays(path, kind: str, arrays: dict[str, np.ndarray], meta: dict | None = None,
                order=None) -> None:
    names = list(order) if order is not None else sorted(arrays)
    header = {"kind": kind, "meta": meta or {},
              "arrays": [[n, list(np.shape(arrays[n]))] for n in names]}
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def load_arrays(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ParseError(f"{path}: not a tensor file")
    end = raw.find(b"\n", len(MAGIC))
    try:
        header = json.loads(raw[len(MAGIC):end]) if end > 0 else None
        kind, meta, layout = header["kind"], header["meta"], header["arrays"]
        layout = [(str(name), tuple(int(d) for d in shape)) for name, shape in layout]
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad header: {exc!r}", row=2) from exc
    offset = end + 1
    arrays = {}
    for name, shape in layout:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise ParseError(f"{path}: truncated payload for {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise ParseError(f"{path}: trailing bytes after payload")
    return kind, meta, arrays


def save_augment(path, params: AugmentParams) -> None:
    save_arrays(path, "augment", params.arrays(), {"sharpness": params.sharpness}, ARRAY_NAMES)


def load_augment(path) -> AugmentParams:
    kind, meta, arrays = load_arrays(path)
    if kind != "augment":
        raise ParseError(f"{path}: expected augment parameters, found {kind!r}")
    return AugmentParams(**arrays, sharpness=meta["sharpness"])


def save_encoder(path, state: EncoderState) -> None:
    save_arrays(path, "encoder", state.weights, {"config": config_dict(state.cfg)})


def load_encoder(path) -> EncoderState:
    kind, meta, arrays = load_arrays(path)
    if kind != "encoder":
        raise ParseError(f"{path}: expected encoder weights, found {kind!r}")
    return EncoderState(EncoderConfig(**meta["config"]), arrays)
