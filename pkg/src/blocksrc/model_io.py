"""Model archive: learned per-block dictionaries in one flat binary file.

Layout (little-endian):
  magic "BLKD", u32 version, u32 header_length, header JSON (UTF-8),
  then raw float64/int32 array payloads in the order the header lists them.

A JSON sidecar (``<archive>.json``) duplicates the parameters for human
inspection.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .dictlearn import DiscriminativeDictionary, TrainParams
from .solvers import Dictionary

MAGIC = b"BLKD"
VERSION = 1

_DTYPES = {"f8": "<f8", "i4": "<i4"}


def _array_entry(name: str, arr: np.ndarray, kind: str, chunks: list[bytes]) -> dict:
    arr = np.ascontiguousarray(arr.astype(_DTYPES[kind]))
    chunks.append(arr.tobytes())
    return {"name": name, "shape": list(arr.shape), "kind": kind}


def save_model(path: str, blocks: list[DiscriminativeDictionary], params: TrainParams, meta: dict | None = None) -> None:
    """Write all block models to ``path`` plus the JSON sidecar."""
    chunks: list[bytes] = []
    block_headers = []
    for model in blocks:
        arrays = [
            _array_entry("atoms", model.D.atoms, "f8", chunks),
            _array_entry("atom_labels", model.D.atom_labels, "i4", chunks),
            _array_entry("scales", model.D.scales, "f8", chunks),
            _array_entry("objective_trace", np.asarray(model.objective_trace, dtype=float), "f8", chunks),
        ]
        if model.A is not None:
            arrays.append(_array_entry("A", model.A, "f8", chunks))
        if model.W is not None:
            arrays.append(_array_entry("W", model.W, "f8", chunks))
        block_headers.append({"mode": model.mode, "arrays": arrays})

    params_dict = {
        "K": params.K,
        "T": params.T,
        "alpha": params.alpha,
        "beta": params.beta,
        "iterations": params.iterations,
        "seed": params.seed,
        "min_rel_improvement": params.min_rel_improvement,
    }
    header = {"params": params_dict, "meta": meta or {}, "blocks": block_headers}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for chunk in chunks:
            fh.write(chunk)

    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump({"params": params_dict, "meta": meta or {}}, fh, indent=2, sort_keys=True)


def load_model(path: str) -> tuple[list[DiscriminativeDictionary], TrainParams, dict]:
    """Read an archive written by :func:`save_model`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"not a model archive: bad magic {data[:4]!r}")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported archive version {version} (expected {VERSION})")
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    pos = 12 + hlen

    def take(entry: dict) -> np.ndarray:
        nonlocal pos
        shape = tuple(entry["shape"])
        dtype = np.dtype(_DTYPES[entry["kind"]])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(data):
            raise ValueError("truncated archive payload")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(shape)
        pos += nbytes
        return np.array(arr)

    blocks: list[DiscriminativeDictionary] = []
    for bh in header["blocks"]:
        arrays = {e["name"]: take(e) for e in bh["arrays"]}
        dictionary = Dictionary(
            atoms=arrays["atoms"],
            atom_labels=arrays["atom_labels"],
            scales=arrays["scales"],
        )
        blocks.append(
            DiscriminativeDictionary(
                D=dictionary,
                A=arrays.get("A"),
                W=arrays.get("W"),
                mode=bh["mode"],
                objective_trace=arrays["objective_trace"],
            )
        )
    p = header["params"]
    params = TrainParams(
        K=p["K"],
        T=p["T"],
        alpha=p["alpha"],
        beta=p["beta"],
        iterations=p["iterations"],
        seed=p["seed"],
        min_rel_improvement=p["min_rel_improvement"],
    )
    return blocks, params, header.get("meta", {})
