"""Versioned checkpoint container: magic, format version, config hash, named
tensor table.  Byte layout is deterministic (sorted tensor names, canonical
JSON header) so identical state serializes to identical bytes, which the
frozen-parameter audit relies on.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"HSCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, sections: dict[str, dict[str, np.ndarray]],
                    config_hash: str, meta: dict | None = None) -> None:
    """Write sections of named tensors; `sections["generator"]["conv.weight"]`
    is stored as tensor name `generator/conv.weight`."""
    flat: dict[str, np.ndarray] = {}
    for section, tensors in sections.items():
        for name, arr in tensors.items():
            flat[f"{section}/{name}"] = np.ascontiguousarray(arr)

    index = []
    offset = 0
    for name in sorted(flat):
        arr = flat[name]
        index.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape),
                      "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "meta": meta or {},
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(FORMAT_VERSION.to_bytes(4, "little"))
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for name in sorted(flat):
            f.write(flat[name].tobytes())
    tmp.replace(path)


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"not a checkpoint file: {path}")
        version = int.from_bytes(f.read(4), "little")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        hlen = int.from_bytes(f.read(8), "little")
        return json.loads(f.read(hlen))


def load_checkpoint(path: str | Path, expect_config_hash: str | None = None,
                    force: bool = False) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    """Load sections back; fails closed on config-hash mismatch unless forced."""
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"not a checkpoint file: {path}")
        version = int.from_bytes(f.read(4), "little")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen))
        payload = f.read()

    if expect_config_hash is not None and header["config_hash"] != expect_config_hash:
        if not force:
            raise CheckpointError(
                f"config hash mismatch: checkpoint {header['config_hash']} vs run {expect_config_hash} "
                f"(pass force=True to override)"
            )

    sections: dict[str, dict[str, np.ndarray]] = {}
    for rec in header["tensors"]:
        section, name = rec["name"].split("/", 1)
        raw = payload[rec["offset"] : rec["offset"] + rec["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"]).copy()
        sections.setdefault(section, {})[name] = arr
    return sections, header


def section_checksum(sections: dict[str, dict[str, np.ndarray]], section: str) -> str:
    """Order-independent digest of one section's tensors (frozen audit)."""
    if section not in sections:
        raise CheckpointError(f"no section {section!r} in checkpoint")
    h = hashlib.sha256()
    for name in sorted(sections[section]):
        arr = np.ascontiguousarray(sections[section][name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
