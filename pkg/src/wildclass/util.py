"""Small shared helpers: atomic file writes, canonical JSON, stable seeds."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write file durably: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    """Deterministic, human-readable JSON used for every structured-text file."""
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def atomic_write_json(path: Path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: Path):
    with open(path, "rb") as f:
        return json.loads(f.read().decode("utf-8"))


def stable_seed(*parts) -> int:
    """Derive a 64-bit RNG seed from arbitrary parts, stable across processes.

    Python's hash() is salted per process, so seeds are taken from sha256
    of the repr of the parts instead.
    """
    digest = hashlib.sha256("|".join(repr(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def round_half_up(x: float) -> int:
    """round() with deterministic half-up ties (banker's rounding would not do)."""
    import math

    return int(math.floor(x + 0.5))


def sanitize_filename(name: str) -> str:
    """Make an id safe to use as a file name ('/', ':' and similar replaced)."""
    return "".join(c if c.isalnum() or c in "._#-+=@" else "_" for c in name)
