"""Clustered quantization and bit-packed serialization of update vectors.

The quantizer groups nearby coordinate values and keeps one representative
per group, bounding the round-trip error by ``tol`` in the infinity norm.
The container stores the representative table once and the per-coordinate
group index at ceil(log2 c) bits, which is where the savings come from
when an update owns few distinct value levels.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CodecError",
    "ClusteredUpdate",
    "cluster_quantize",
    "reconstruct",
    "bits_per_coordinate",
    "encode",
    "decode",
    "encoded_nbytes",
    "size_report",
]

_HEADER = struct.Struct("<IId")  # dimension, cluster count, tolerance


class CodecError(ValueError):
    """Raised for malformed or truncated encoded containers."""


@dataclass(frozen=True)
class ClusteredUpdate:
    """Quantized vector: ascending representative values plus, for every
    original coordinate, the index of its representative."""

    values: np.ndarray
    membership: np.ndarray
    d: int
    tol: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        membership = np.asarray(self.membership, dtype=np.int64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "membership", membership)
        if values.ndim != 1 or membership.shape != (self.d,):
            raise ValueError("values must be 1-D and membership of length d")
        if not np.isfinite(values).all():
            raise ValueError("representative values must be finite")
        if values.size > self.d:
            raise ValueError("more clusters than coordinates")
        if np.any(np.diff(values) < 0):
            raise ValueError("representative values must be ascending")
        if self.d > 0:
            if values.size == 0:
                raise ValueError("non-empty vector with empty value table")
            if membership.min() < 0 or membership.max() >= values.size:
                raise ValueError("membership index out of range")
        if not (math.isfinite(self.tol) and self.tol >= 0):
            raise ValueError("tol must be finite and >= 0")
        values.setflags(write=False)
        membership.setflags(write=False)

    @property
    def n_clusters(self) -> int:
        return int(self.values.size)


def cluster_quantize(delta, tol: float) -> ClusteredUpdate:
    """Greedy one-dimensional clustering of the vector's sorted values.

    Walking the values in ascending order, the next value joins the running
    cluster unless that would stretch the cluster span beyond 2*tol or park
    any member more than tol away from the updated cluster mean; otherwise
    the cluster is closed and a new one starts. Each cluster's
    representative is its mean, so representatives come out ascending and
    every coordinate reconstructs to within tol.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1:
        raise ValueError(f"expected a vector, got shape {delta.shape}")
    if not np.isfinite(delta).all():
        raise ValueError("cannot quantize non-finite values")
    if not (math.isfinite(tol) and tol >= 0):
        raise ValueError("tol must be finite and >= 0")

    d = delta.size
    membership = np.empty(d, dtype=np.int64)
    reps: list[float] = []
    first = 0.0
    count = 0
    total = 0.0
    for idx in np.argsort(delta, kind="stable"):
        v = float(delta[idx])
        if count > 0:
            new_mean = (total + v) / (count + 1)
            if (v - first) > 2.0 * tol or (v - new_mean) > tol or (new_mean - first) > tol:
                reps.append(total / count)
                count = 0
        if count == 0:
            first = v
            total = 0.0
        membership[idx] = len(reps)
        total += v
        count += 1
    if count > 0:
        reps.append(total / count)
    return ClusteredUpdate(values=np.asarray(reps), membership=membership, d=d, tol=tol)


def reconstruct(cu: ClusteredUpdate) -> np.ndarray:
    """Expand the clustered form back to a full vector."""
    if cu.d == 0:
        return np.empty(0)
    return cu.values[cu.membership]


def bits_per_coordinate(n_clusters: int) -> int:
    """Membership width: ceil(log2 c), with a single cluster taking 0 bits."""
    return 0 if n_clusters <= 1 else (n_clusters - 1).bit_length()


def encode(cu: ClusteredUpdate) -> bytes:
    """Serialize to the self-describing container.

    Layout: header (u32 dimension, u32 cluster count, f64 tol,
    little-endian), then the value table as f64s, then the membership
    stream packed least-significant-bit first at ceil(log2 c) bits per
    coordinate, zero-padded to a byte boundary.
    """
    c = cu.n_clusters
    if cu.d >= 2**32 or c >= 2**32:
        raise CodecError("vector too large for the 32-bit container header")
    out = bytearray(_HEADER.pack(cu.d, c, cu.tol))
    if c:
        out += struct.pack(f"<{c}d", *cu.values.tolist())
    width = bits_per_coordinate(c)
    if width:
        buf = 0
        nbits = 0
        for m in cu.membership.tolist():
            buf |= m << nbits
            nbits += width
            while nbits >= 8:
                out.append(buf & 0xFF)
                buf >>= 8
                nbits -= 8
        if nbits:
            out.append(buf & 0xFF)
    return bytes(out)


def decode(data) -> ClusteredUpdate:
    """Parse a container produced by :func:`encode`, validating the layout.

    Raises :class:`CodecError` on a short or inconsistent header, a
    truncated or oversized payload, out-of-range membership indices, or
    nonzero padding bits.
    """
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise CodecError(f"malformed header: need {_HEADER.size} bytes, got {len(data)}")
    d, c, tol = _HEADER.unpack_from(data)
    if c > d:
        raise CodecError(f"malformed header: {c} clusters for dimension {d}")
    if d > 0 and c == 0:
        raise CodecError("malformed header: no clusters for a non-empty vector")

    values_end = _HEADER.size + 8 * c
    width = bits_per_coordinate(c)
    expected = values_end + (d * width + 7) // 8
    if len(data) < expected:
        raise CodecError(f"truncated payload: need {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise CodecError(f"trailing bytes: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=c, offset=_HEADER.size).astype(float)

    membership = np.zeros(d, dtype=np.int64)
    if width:
        buf = int.from_bytes(data[values_end:], "little")
        mask = (1 << width) - 1
        for i in range(d):
            membership[i] = buf & mask
            buf >>= width
        if buf != 0:
            raise CodecError("malformed membership padding")
        if membership.size and membership.max() >= c:
            raise CodecError("membership index out of range")
    try:
        return ClusteredUpdate(values=values, membership=membership, d=d, tol=tol)
    except ValueError as exc:
        raise CodecError(str(exc)) from exc


def encoded_nbytes(delta, tol: float) -> int:
    """Container size of a vector quantized at the given tolerance."""
    return len(encode(cluster_quantize(delta, tol)))


def size_report(delta_baseline, delta_cer, tol: float) -> dict:
    """Encoded sizes of two updates at equal tolerance, plus the relative
    saving of the second over the first in percent."""
    bytes_baseline = encoded_nbytes(delta_baseline, tol)
    bytes_cer = encoded_nbytes(delta_cer, tol)
    return {
        "bytes_baseline": bytes_baseline,
        "bytes_cer": bytes_cer,
        "reduction_pct": 100.0 * (1.0 - bytes_cer / bytes_baseline),
    }
