"""Versioned container used by every persisted object in the package.

Layout::

    FI2I1 <kind>\n
    <json metadata, sorted keys>\n
    <npy array> ...   (in the order listed under metadata["arrays"])

Arrays are written with ``np.save`` so dtype and byte content round-trip
exactly, and the JSON line uses sorted keys so identical inputs produce
identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"FI2I1"


class FormatError(ValueError):
    """Raised when a file is not a valid FI2I1 container of the expected kind."""


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    meta = dict(meta)
    meta["arrays"] = list(arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC + b" " + kind.encode("ascii") + b"\n")
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
        for name in meta["arrays"]:
            np.save(fh, np.ascontiguousarray(arrays[name]), allow_pickle=False)


def read_container(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().rstrip(b"\n")
        parts = header.split(b" ", 1)
        if parts[0] != MAGIC:
            raise FormatError(f"{path}: missing {MAGIC.decode()} header")
        if len(parts) != 2 or parts[1].decode("ascii", "replace") != kind:
            found = parts[1].decode("ascii", "replace") if len(parts) == 2 else "?"
            raise FormatError(f"{path}: expected a {kind!r} file, found {found!r}")
        try:
            meta = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: corrupt metadata line") from exc
        arrays = {}
        for name in meta.pop("arrays"):
            arrays[name] = np.load(fh, allow_pickle=False)
    return meta, arrays
