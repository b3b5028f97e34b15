"""Shared/personalized split of the model coordinates.

The split acts like a pair of 0/1 selector matrices scattering the shared
block and the personalized block into the full coordinate space. Both are
stored as index maps only; every product with them reduces to a gather or
a scatter, so nothing is ever materialized densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelPartition",
    "compose",
    "compose_columns",
    "project_shared",
    "project_personal",
]


@dataclass(frozen=True)
class ModelPartition:
    """Index maps of the two selectors.

    ``shared_idx[c]`` is the model row holding shared coordinate c, and
    ``personal_idx[c]`` the row holding personalized coordinate c. Every
    model row belongs to exactly one of the two maps, so the selectors have
    orthonormal columns and disjoint row support.
    """

    d: int
    shared_idx: np.ndarray
    personal_idx: np.ndarray

    def __post_init__(self) -> None:
        shared = np.asarray(self.shared_idx, dtype=np.int64)
        personal = np.asarray(self.personal_idx, dtype=np.int64)
        object.__setattr__(self, "shared_idx", shared)
        object.__setattr__(self, "personal_idx", personal)
        combined = np.concatenate([shared, personal])
        if combined.size != self.d or not np.array_equal(
            np.sort(combined), np.arange(self.d)
        ):
            raise ValueError(
                "shared and personalized rows must partition 0..d-1 exactly"
            )
        shared.setflags(write=False)
        personal.setflags(write=False)

    @property
    def d1(self) -> int:
        return int(self.shared_idx.size)

    @property
    def d2(self) -> int:
        return int(self.personal_idx.size)

    @classmethod
    def from_split(cls, d: int, n_shared: int) -> "ModelPartition":
        """First ``n_shared`` coordinates shared, the rest personalized."""
        if not 0 <= n_shared <= d:
            raise ValueError(f"split point must be in [0, {d}], got {n_shared}")
        return cls(d, np.arange(n_shared), np.arange(n_shared, d))

    @classmethod
    def from_rows(cls, d: int, shared_rows, personal_rows) -> "ModelPartition":
        """Build from explicit 1-based row lists (config file convention)."""
        shared = np.asarray(list(shared_rows), dtype=np.int64) - 1
        personal = np.asarray(list(personal_rows), dtype=np.int64) - 1
        return cls(d, shared, personal)


def compose(partition: ModelPartition, x, z) -> np.ndarray:
    """Assemble a full model from its shared and personalized blocks."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != (partition.d1,) or z.shape != (partition.d2,):
        raise ValueError(
            f"expected blocks of shape ({partition.d1},) and ({partition.d2},), "
            f"got {x.shape} and {z.shape}"
        )
    y = np.empty(partition.d)
    y[partition.shared_idx] = x
    y[partition.personal_idx] = z
    return y


def compose_columns(partition: ModelPartition, x, Z) -> np.ndarray:
    """Assemble all per-client models at once: column n is built from
    the common shared block and column n of ``Z``."""
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != partition.d2 or x.shape != (partition.d1,):
        raise ValueError("block shapes do not match the partition")
    Y = np.empty((partition.d, Z.shape[1]))
    Y[partition.shared_idx, :] = x[:, None]
    Y[partition.personal_idx, :] = Z
    return Y


def project_shared(partition: ModelPartition, g) -> np.ndarray:
    """Gather the shared rows of a vector (or of each column of a matrix)."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != partition.d:
        raise ValueError(f"expected leading dimension {partition.d}, got {g.shape}")
    return g[partition.shared_idx]


def project_personal(partition: ModelPartition, g) -> np.ndarray:
    """Gather the personalized rows of a vector (or matrix columns)."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != partition.d:
        raise ValueError(f"expected leading dimension {partition.d}, got {g.shape}")
    return g[partition.personal_idx]
