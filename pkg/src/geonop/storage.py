"""Bit-exact on-disk container for datasets, model checkpoints, and
results: a directory with manifest.json plus one raw array file per named
tensor (row-major little-endian float64, no header), each carrying an
FNV-1a 64-bit checksum.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["Container", "fnv1a64", "ChecksumError"]

FORMAT_VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


class ChecksumError(IOError):
    """Stored bytes do not match the manifest checksum."""


def fnv1a64(data):
    """FNV-1a 64-bit hash of a bytes-like object."""
    h = _FNV_OFFSET
    for b in bytes(data):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


class Container:
    """Named float64 arrays plus a JSON metadata block in one directory."""

    def __init__(self, arrays=None, meta=None):
        self.arrays = dict(arrays or {})
        self.meta = dict(meta or {})

    def __contains__(self, name):
        return name in self.arrays

    def __getitem__(self, name):
        return self.arrays[name]

    def __setitem__(self, name, value):
        self.arrays[name] = np.ascontiguousarray(value, dtype=np.float64)

    def names(self):
        return sorted(self.arrays)

    def save(self, directory):
        """Write manifest.json and raw array files; deterministic layout."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for name in self.names():
            arr = np.ascontiguousarray(self.arrays[name], dtype=np.float64)
            raw = arr.astype("<f8", copy=False).tobytes()
            fname = name.replace("/", "_").replace(".", "_") + ".f64"
            (directory / fname).write_bytes(raw)
            entries.append({
                "name": name,
                "shape": list(arr.shape),
                "dtype": "f64le",
                "file": fname,
                "fnv1a64": f"{fnv1a64(raw):016x}",
            })
        manifest = {
            "format_version": FORMAT_VERSION,
            "arrays": entries,
            "meta": self.meta,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        return directory

    @classmethod
    def load(cls, directory, verify=True):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise IOError(
                f"unsupported container format {manifest.get('format_version')}")
        out = cls(meta=manifest.get("meta", {}))
        for entry in manifest["arrays"]:
            raw = (directory / entry["file"]).read_bytes()
            if verify and f"{fnv1a64(raw):016x}" != entry["fnv1a64"]:
                raise ChecksumError(
                    f"array {entry['name']!r}: checksum mismatch")
            arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"])
            out.arrays[entry["name"]] = arr.astype(np.float64)
        return out

    def checksums(self):
        """name -> hex checksum of the current in-memory arrays."""
        out = {}
        for name in self.names():
            arr = np.ascontiguousarray(self.arrays[name], dtype=np.float64)
            out[name] = f"{fnv1a64(arr.astype('<f8', copy=False).tobytes()):016x}"
        return out
