"""Binary instance container.

Layout (all integers little-endian)::

    magic      8 bytes   b"THRATTN\\0"
    hlen       u32       length of the JSON header
    header     hlen bytes, UTF-8 JSON with sorted keys
    Q, K, V    row-major '<f8' blocks, shapes given in the header
    truth      per row: LEB128 count, then LEB128 column indices (ascending)

Support scores are not stored; they are recomputed from Q and K on load with
the same accumulation order used everywhere else, so a round trip is exact.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .instances import Instance, InstanceSpec
from .linalg import SupportSets, pair_scores

MAGIC = b"THRATTN\x00"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


def _put_varint(buf: bytearray, x: int) -> None:
    if x < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = x & 0x7F
        x >>= 7
        if x:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _get_varint(data: bytes, pos: int) -> tuple[int, int]:
    x = shift = 0
    while True:
        if pos >= len(data):
            raise ContainerError("truncated varint")
        byte = data[pos]
        pos += 1
        x |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return x, pos
        shift += 7
        if shift > 63:
            raise ContainerError("varint too long")


def encode(inst: Instance) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "spec": inst.spec.to_json(),
        "shapes": {"q": list(inst.q.shape), "k": list(inst.k_mat.shape), "v": list(inst.v.shape)},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", len(hbytes)))
    out.write(hbytes)
    for m in (inst.q, inst.k_mat, inst.v):
        out.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
    tail = bytearray()
    for idx in inst.truth.rows:
        _put_varint(tail, idx.size)
        for j in idx.tolist():
            _put_varint(tail, j)
    out.write(bytes(tail))
    return out.getvalue()


def decode(data: bytes) -> Instance:
    if data[:8] != MAGIC:
        raise ContainerError("not an instance container (bad magic)")
    if len(data) < 12:
        raise ContainerError("truncated header")
    (hlen,) = struct.unpack_from("<I", data, 8)
    try:
        header = json.loads(data[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {header.get('format_version')!r}")
    spec = InstanceSpec(**header["spec"])
    pos = 12 + hlen
    mats = []
    for key in ("q", "k", "v"):
        r, c = header["shapes"][key]
        nbytes = 8 * r * c
        if pos + nbytes > len(data):
            raise ContainerError(f"truncated {key} block")
        mats.append(np.frombuffer(data, dtype="<f8", count=r * c, offset=pos).reshape(r, c).astype(np.float64))
        pos += nbytes
    q, k_mat, v = mats
    rows, scores = [], []
    for i in range(q.shape[0]):
        count, pos = _get_varint(data, pos)
        idx = np.empty(count, dtype=np.int64)
        for t in range(count):
            idx[t], pos = _get_varint(data, pos)
        if count and (idx.max() >= k_mat.shape[0]):
            raise ContainerError(f"row {i}: support index out of range")
        rows.append(idx)
        scores.append(pair_scores(q[i], k_mat[idx]))
    if pos != len(data):
        raise ContainerError(f"{len(data) - pos} trailing bytes")
    return Instance(spec, q, k_mat, v, SupportSets.from_lists(q.shape[0], rows, scores))


def save(inst: Instance, path) -> None:
    Path(path).write_bytes(encode(inst))


def load(path) -> Instance:
    return decode(Path(path).read_bytes())
