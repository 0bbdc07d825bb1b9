"""Binary snapshot files.

Layout: the magic line ``HFLOWSNP1\\n``, an unsigned little-endian 64-bit
header length, a UTF-8 JSON header, then each field's raw ``<c16`` payload in
header order.  Floats in the header are written with ``repr`` precision, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .domain import DomainError, domain_from_description
from .fields import HoloVolumeForm, MetricField
from .flow import FlowState

MAGIC = b"HFLOWSNP1\n"
FORMAT_VERSION = 1
_MAX_HEADER = 1 << 24


class SnapshotError(ValueError):
    """Unreadable, truncated or inconsistent snapshot file."""


def _pack(header: dict, arrays: list) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(head)), head]
    parts += [np.ascontiguousarray(a, dtype="<c16").tobytes() for a in arrays]
    return b"".join(parts)


def save_state(path, state: FlowState, meta: dict = None) -> Path:
    """Write ``state`` (metric with signature ``(d, db)`` and volume-form coefficient)."""
    path = Path(path)
    fields = [("g", ("d", "db"), state.g.G), ("omega", (), state.omega.coef)]
    entries = []
    offset = 0
    for name, sig, arr in fields:
        nbytes = arr.size * 16
        entries.append({"name": name, "sig": list(sig), "shape": list(arr.shape),
                        "dtype": "<c16", "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {"format": FORMAT_VERSION, "domain": state.domain.describe(),
              "t": float(state.t), "fields": entries, "meta": meta or {}}
    path.write_bytes(_pack(header, [a for _, _, a in fields]))
    return path


def read_header(data: bytes) -> tuple:
    if not data.startswith(MAGIC):
        raise SnapshotError("bad magic: not a snapshot file")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise SnapshotError("truncated header length")
    (hlen,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    if hlen > _MAX_HEADER or pos + hlen > len(data):
        raise SnapshotError(f"header length {hlen} is inconsistent with the file size")
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupted header: {exc}") from exc
    if not isinstance(header, dict):
        raise SnapshotError("corrupted header: not a mapping")
    for key in ("format", "domain", "t", "fields"):
        if key not in header:
            raise SnapshotError(f"corrupted header: missing {key!r}")
    if header["format"] != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot format {header['format']!r}")
    return header, pos + hlen


def load_arrays(path) -> tuple:
    """``(header, {name: array})`` without interpreting the fields."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read {path}: {exc}") from exc
    header, start = read_header(data)
    arrays = {}
    try:
        for entry in header["fields"]:
            lo = start + int(entry["offset"])
            hi = lo + int(entry["nbytes"])
            shape = tuple(int(s) for s in entry["shape"])
            if entry["dtype"] != "<c16" or hi > len(data) or int(np.prod(shape)) * 16 != hi - lo:
                raise SnapshotError(f"payload of field {entry['name']!r} is inconsistent")
            arrays[entry["name"]] = np.frombuffer(data[lo:hi], dtype="<c16").reshape(shape).copy()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SnapshotError):
            raise
        raise SnapshotError(f"corrupted field table: {exc}") from exc
    return header, arrays


def load_state(path, domain=None) -> tuple:
    """``(FlowState, meta)``.  Pass ``domain`` to share one domain object across snapshots."""
    header, arrays = load_arrays(path)
    try:
        desc = header["domain"]
        if domain is None:
            domain = domain_from_description(desc)
        elif domain.describe() != desc:
            raise SnapshotError("snapshot domain differs from the supplied domain")
        state = FlowState(float(header["t"]), MetricField(domain, arrays["g"]),
                          HoloVolumeForm(domain, arrays["omega"]))
    except SnapshotError:
        raise
    except (KeyError, DomainError, ValueError) as exc:
        raise SnapshotError(f"snapshot content is invalid: {exc}") from exc
    return state, header.get("meta", {})
