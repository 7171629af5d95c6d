"""Checkpoint container: a text header followed by a little-endian float64 blob.

Layout::

    DPGAN-CKPT\\n
    <header byte length>\\n
    <header JSON>\\n
    <blob>

The header lists every array as ``{"name", "shape", "offset", "nbytes"}``
(offsets into the blob) plus a free-form ``meta`` object.
"""
import json
import os
import tempfile

import numpy as np

from .errors import CheckpointError

MAGIC = b"DPGAN-CKPT\n"
SCHEMA_VERSION = 1
_LE_F64 = np.dtype("<f8")


def dumps(arrays, meta=None):
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype=_LE_F64)
        raw = a.tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"schema": SCHEMA_VERSION, "blob_bytes": offset, "tensors": entries, "meta": meta or {}}
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + str(len(text)).encode("ascii") + b"\n" + text + b"\n" + b"".join(chunks)


def loads(buf):
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    nl = buf.find(b"\n", pos)
    if nl < 0:
        raise CheckpointError("truncated checkpoint: missing header length")
    try:
        hlen = int(buf[pos:nl])
    except ValueError as exc:
        raise CheckpointError("corrupt checkpoint: bad header length") from exc
    start = nl + 1
    if len(buf) < start + hlen + 1:
        raise CheckpointError("truncated checkpoint: header incomplete")
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint: header is not valid JSON") from exc
    if header.get("schema") != SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema {header.get('schema')!r} does not match supported version {SCHEMA_VERSION}"
        )
    blob = buf[start + hlen + 1:]
    if len(blob) != header["blob_bytes"]:
        raise CheckpointError(f"corrupt checkpoint: blob has {len(blob)} bytes, header says {header['blob_bytes']}")
    arrays = {}
    for e in header["tensors"]:
        shape = tuple(e["shape"])
        if e["nbytes"] != 8 * int(np.prod(shape, dtype=np.int64)) or e["offset"] + e["nbytes"] > len(blob):
            raise CheckpointError(f"corrupt checkpoint: entry {e['name']!r} out of bounds")
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=_LE_F64).reshape(shape).astype(np.float64)
    return arrays, header["meta"]


def save(path, arrays, meta=None):
    """Write atomically so an interrupted save never clobbers the previous file."""
    data = dumps(arrays, meta)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(buf)
