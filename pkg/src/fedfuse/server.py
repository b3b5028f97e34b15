"""Server-side optimization.

The sharing block moves by an averaged gradient step; the personalized
block (one column per client) is updated by an ADMM that fuses columns
along similarity-network edges through a sum-of-norms penalty on the
edgewise differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .partition import ModelPartition, project_personal, project_shared

__all__ = [
    "ServerHyper",
    "FederatedState",
    "AdmmZState",
    "update_shared",
    "z_step",
    "group_prox",
    "w_step",
    "omega_step",
    "update_personalized",
    "l1p_norm",
    "z_objective",
]

_SUPPORTED_P = (1, 2)


@dataclass(frozen=True)
class ServerHyper:
    """Server hyperparameters: fusion weight ``lam``, ADMM penalty ``rho``,
    step size ``eta``, column norm order ``p`` and inner iteration count."""

    lam: float
    rho: float
    eta: float
    p: int = 2
    admm_iters: int = 50

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.p not in _SUPPORTED_P:
            raise ValueError(f"norm order p must be one of {_SUPPORTED_P}, got {self.p}")
        if self.admm_iters < 1:
            raise ValueError("admm_iters must be >= 1")


@dataclass
class FederatedState:
    """Sharing vector plus the personalized matrix (column n = client n)."""

    x: np.ndarray
    Z: np.ndarray
    hyper: ServerHyper

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        if self.Z.ndim != 2:
            raise ValueError("Z must be a matrix with one column per client")
        if not (np.isfinite(self.x).all() and np.isfinite(self.Z).all()):
            raise ValueError("state contains non-finite values")


def update_shared(x, G, partition: ModelPartition, eta: float) -> np.ndarray:
    """Gradient step on the sharing block from the stacked client updates:
    x - eta * mean over clients of the shared rows of G."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != partition.d:
        raise ValueError(f"expected updates of shape ({partition.d}, N), got {G.shape}")
    return np.asarray(x, dtype=float) - eta * project_shared(partition, G).mean(axis=1)


def _coupling_factor(Q: np.ndarray, eta: float, rho: float):
    A = np.eye(Q.shape[0]) + (eta * rho) * (Q @ Q.T)
    return cho_factor(A, lower=True)


@dataclass
class AdmmZState:
    """Warm-startable state of the personalized-block ADMM.

    Holds the edgewise surrogate ``W``, the dual ``Omega`` and the Cholesky
    factor of the coupling matrix, which stays valid while (eta, rho) and
    the network are unchanged.
    """

    W: np.ndarray
    Omega: np.ndarray
    factor: tuple
    eta: float
    rho: float

    @classmethod
    def fresh(cls, Z_t, Q, eta: float, rho: float) -> "AdmmZState":
        Z_t = np.asarray(Z_t, dtype=float)
        Q = np.asarray(Q, dtype=float)
        return cls(
            W=Z_t @ Q,
            Omega=np.zeros((Z_t.shape[0], Q.shape[1])),
            factor=_coupling_factor(Q, eta, rho),
            eta=eta,
            rho=rho,
        )

    def refresh(self, Q, eta: float, rho: float) -> None:
        if (eta, rho) != (self.eta, self.rho):
            self.factor = _coupling_factor(np.asarray(Q, dtype=float), eta, rho)
            self.eta, self.rho = eta, rho


def z_step(
    Z_t,
    W,
    Omega,
    G,
    partition: ModelPartition,
    Q,
    eta: float,
    rho: float,
    factor=None,
) -> np.ndarray:
    """Exact minimizer of the personalized-block subproblem.

    Solves Z (I + eta*rho*QQ') = eta*(rho*W*Q' - Omega*Q' - N'G/N) + Z_t
    against the (cached) Cholesky factor of the symmetric positive-definite
    coupling matrix.
    """
    Z_t = np.asarray(Z_t, dtype=float)
    Q = np.asarray(Q, dtype=float)
    G = np.asarray(G, dtype=float)
    n_clients = G.shape[1]
    grad_personal = project_personal(partition, G) / n_clients
    rhs = eta * (rho * np.asarray(W) @ Q.T - np.asarray(Omega) @ Q.T - grad_personal) + Z_t
    if factor is None:
        factor = _coupling_factor(Q, eta, rho)
    # finiteness is checked by the caller's divergence guard, not per solve
    return cho_solve(factor, rhs.T, check_finite=False).T


def group_prox(u, threshold: float, p: int = 2) -> np.ndarray:
    """Proximal shrink of one column under the order-p norm.

    p = 2 scales the whole vector toward zero (zero once its norm falls
    below the threshold); p = 1 soft-thresholds elementwise.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    u = np.asarray(u, dtype=float)
    if p == 2:
        nrm = float(np.linalg.norm(u))
        if nrm <= threshold or nrm == 0.0:
            return np.zeros_like(u)
        return (1.0 - threshold / nrm) * u
    if p == 1:
        return np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)
    raise ValueError(f"unsupported norm order {p}; expected one of {_SUPPORTED_P}")


def w_step(Z_next, Omega, Q, lam: float, rho: float, p: int = 2) -> np.ndarray:
    """Columnwise proximal shrink of the edge-difference surrogate at
    Z*Q + Omega/rho with threshold lam/rho."""
    B = np.asarray(Z_next, dtype=float) @ np.asarray(Q, dtype=float) + np.asarray(Omega) / rho
    thr = lam / rho
    if p == 2:
        nrm = np.linalg.norm(B, axis=0)
        scale = np.zeros_like(nrm)
        keep = nrm > thr
        scale[keep] = 1.0 - thr / nrm[keep]
        return B * scale
    if p == 1:
        return np.sign(B) * np.maximum(np.abs(B) - thr, 0.0)
    raise ValueError(f"unsupported norm order {p}; expected one of {_SUPPORTED_P}")


def omega_step(Omega, Z_next, W_next, Q, rho: float) -> np.ndarray:
    """Dual ascent on the edgewise splitting constraint Z*Q = W."""
    return np.asarray(Omega) + rho * (
        np.asarray(Z_next, dtype=float) @ np.asarray(Q, dtype=float) - np.asarray(W_next)
    )


def update_personalized(
    Z_t,
    G,
    partition: ModelPartition,
    Q,
    hyper: ServerHyper,
    state: AdmmZState | None = None,
) -> np.ndarray:
    """Update the personalized block by ``hyper.admm_iters`` ADMM sweeps.

    A fresh call starts feasibly from W = Z_t*Q with zero dual; passing a
    persistent ``state`` warm-starts from the previous call, which cuts the
    iterations needed inside a training run.
    """
    Z_t = np.asarray(Z_t, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if state is None:
        state = AdmmZState.fresh(Z_t, Q, hyper.eta, hyper.rho)
    else:
        state.refresh(Q, hyper.eta, hyper.rho)

    Z = Z_t
    for _ in range(hyper.admm_iters):
        Z = z_step(Z_t, state.W, state.Omega, G, partition, Q, hyper.eta, hyper.rho, state.factor)
        state.W = w_step(Z, state.Omega, Q, hyper.lam, hyper.rho, hyper.p)
        state.Omega = omega_step(state.Omega, Z, state.W, Q, hyper.rho)
    if not (np.isfinite(Z).all() and np.isfinite(state.W).all() and np.isfinite(state.Omega).all()):
        raise FloatingPointError("personalized-block ADMM diverged")
    return Z


def l1p_norm(U, p: int = 2) -> float:
    """Sum over columns of the column-wise order-p norm."""
    U = np.asarray(U, dtype=float)
    if p == 2:
        return float(np.linalg.norm(U, axis=0).sum())
    if p == 1:
        return float(np.abs(U).sum())
    raise ValueError(f"unsupported norm order {p}; expected one of {_SUPPORTED_P}")


def z_objective(Z, Z_t, G, partition: ModelPartition, Q, lam: float, eta: float, p: int = 2) -> float:
    """Objective of the personalized-block subproblem at Z."""
    Z = np.asarray(Z, dtype=float)
    G = np.asarray(G, dtype=float)
    n_clients = G.shape[1]
    lin = float((project_personal(partition, G) * Z).sum()) / n_clients
    quad = float(((Z - np.asarray(Z_t)) ** 2).sum()) / (2.0 * eta)
    return lin + lam * l1p_norm(Z @ np.asarray(Q), p) + quad
