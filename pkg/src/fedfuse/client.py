"""Client-side computation.

Local loss/gradient evaluation plus the communication-efficient update: an
ADMM solve that trades a little extra local compute for an update vector
whose consecutive differences are sparse, i.e. whose entries cluster into
few distinct values and compress well.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit

__all__ = [
    "LocalDataset",
    "CerConfig",
    "DifferenceOperator",
    "CerWorkspace",
    "local_loss",
    "local_gradient",
    "cer_r_step",
    "cer_y_step",
    "cer_omega_step",
    "cer_update",
    "cer_objective",
]


@dataclass(frozen=True)
class LocalDataset:
    """One client's private data: feature rows and aligned labels.

    Labels are -1/+1 for classification or arbitrary reals for ridge.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(
                f"labels of shape {y.shape} do not match {X.shape[0]} rows"
            )
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _check_batch(weights, features, labels):
    w = np.asarray(weights, dtype=float)
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty batch")
    if w.shape != (X.shape[1],) or y.shape != (X.shape[0],):
        raise ValueError(
            f"shape mismatch: weights {w.shape}, features {X.shape}, labels {y.shape}"
        )
    return w, X, y


def local_loss(weights, features, labels, loss_kind: str = "logistic") -> float:
    """Mean loss of ``weights`` over a batch."""
    w, X, y = _check_batch(weights, features, labels)
    if loss_kind == "logistic":
        margins = y * (X @ w)
        return float(np.logaddexp(0.0, -margins).mean())
    if loss_kind == "ridge":
        resid = X @ w - y
        return float(0.5 * (resid**2).mean())
    raise ValueError(f"unknown loss kind: {loss_kind!r}")


def local_gradient(weights, features, labels, loss_kind: str = "logistic") -> np.ndarray:
    """Mean gradient of the local loss over a batch.

    Logistic loss is the minimization form log(1 + exp(-y a'w)); its
    gradient for one row is -y * a * sigmoid(-y a'w). Ridge is
    (a'w - y)^2 / 2 with gradient a (a'w - y).
    """
    w, X, y = _check_batch(weights, features, labels)
    if loss_kind == "logistic":
        margins = y * (X @ w)
        coef = -y * expit(-margins)
        return X.T @ coef / X.shape[0]
    if loss_kind == "ridge":
        resid = X @ w - y
        return X.T @ resid / X.shape[0]
    raise ValueError(f"unknown loss kind: {loss_kind!r}")


@dataclass(frozen=True)
class CerConfig:
    """Knobs of the communication-efficient update.

    ``gamma`` weighs the difference-sparsity penalty, ``rho`` is the ADMM
    penalty, ``eta`` the step size shared with the server, and
    ``inner_iters`` the fixed ADMM iteration count.
    """

    gamma: float
    rho: float
    eta: float
    inner_iters: int = 50

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")


@dataclass(frozen=True)
class DifferenceOperator:
    """Square forward-difference operator.

    Row i maps a vector to v[i] - v[i+1]; the last row keeps v[d-1]. The
    extra last row makes the operator full rank, so its only null vector is
    zero and a fully penalized solve pins the update to the anchor.
    """

    d: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = v.copy()
        out[:-1] -= v[1:]
        return out

    def apply_t(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = u.copy()
        out[1:] -= u[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.eye(self.d) - np.eye(self.d, k=1)

    def gram(self) -> np.ndarray:
        """Dense Gram matrix (tridiagonal, symmetric positive definite)."""
        A = 2.0 * np.eye(self.d)
        A[0, 0] = 1.0
        off = -np.ones(self.d - 1)
        A += np.diag(off, k=1) + np.diag(off, k=-1)
        return A


@lru_cache(maxsize=None)
def _gram_eigendecomposition(d: int) -> tuple[np.ndarray, np.ndarray]:
    eigvals, eigvecs = np.linalg.eigh(DifferenceOperator(d).gram())
    if eigvals[0] <= 0:
        raise AssertionError("difference-operator Gram matrix lost definiteness")
    eigvals.setflags(write=False)
    eigvecs.setflags(write=False)
    return eigvals, eigvecs


@dataclass
class CerWorkspace:
    """Spectral factorization of the difference operator's Gram matrix,
    computed once per dimension, plus the iterates of the latest solve."""

    op: DifferenceOperator
    eigvals: np.ndarray
    eigvecs: np.ndarray
    r: np.ndarray | None = None
    y: np.ndarray | None = None
    omega: np.ndarray | None = None

    @classmethod
    def for_dimension(cls, d: int) -> "CerWorkspace":
        eigvals, eigvecs = _gram_eigendecomposition(d)
        return cls(op=DifferenceOperator(d), eigvals=eigvals, eigvecs=eigvecs)


def cer_r_step(workspace: CerWorkspace, y_cur, y_anchor, omega, rho: float) -> np.ndarray:
    """Exact minimizer of the difference-variable subproblem.

    Two-sided soft threshold at 1/rho of the shifted difference
    residual.
    """
    u = workspace.op.apply(np.asarray(y_cur) - np.asarray(y_anchor)) - np.asarray(omega) / rho
    thr = 1.0 / rho
    return np.maximum(u - thr, 0.0) - np.maximum(-u - thr, 0.0)


def cer_y_step(
    workspace: CerWorkspace,
    r_next,
    y_anchor,
    omega,
    g,
    gamma: float,
    eta: float,
    rho: float,
) -> np.ndarray:
    """Exact minimizer of the model-variable subproblem via the cached
    eigendecomposition; collapses to a plain gradient step when gamma is 0."""
    y_anchor = np.asarray(y_anchor, dtype=float)
    base = y_anchor - eta * np.asarray(g, dtype=float)
    c = rho * eta * gamma
    if c == 0.0:
        return base
    op = workspace.op
    rhs = c * op.apply_t(np.asarray(r_next) + op.apply(y_anchor) + np.asarray(omega) / rho) + base
    return workspace.eigvecs @ ((workspace.eigvecs.T @ rhs) / (c * workspace.eigvals + 1.0))


def cer_omega_step(
    workspace: CerWorkspace, omega, r_next, y_next, y_anchor, rho: float
) -> np.ndarray:
    """Dual ascent on the splitting constraint."""
    residual = np.asarray(r_next) - workspace.op.apply(np.asarray(y_next) - np.asarray(y_anchor))
    return np.asarray(omega) + rho * residual


def cer_update(
    y_anchor,
    g,
    cfg: CerConfig,
    workspace: CerWorkspace | None = None,
) -> np.ndarray:
    """Communication-efficient update of one client's model.

    Runs ``cfg.inner_iters`` ADMM sweeps from the feasible start (r = 0,
    y = anchor, dual = 0) and returns (anchor - y_final) / eta: the update
    the client transmits in place of its raw gradient. With gamma = 0 the
    result equals the gradient exactly.
    """
    y_anchor = np.asarray(y_anchor, dtype=float)
    g = np.asarray(g, dtype=float)
    if y_anchor.shape != g.shape or y_anchor.ndim != 1:
        raise ValueError(f"anchor {y_anchor.shape} and gradient {g.shape} must be equal-length vectors")
    if workspace is None or workspace.op.d != y_anchor.size:
        workspace = CerWorkspace.for_dimension(y_anchor.size)

    r = np.zeros_like(y_anchor)
    y = y_anchor.copy()
    omega = np.zeros_like(y_anchor)
    for _ in range(cfg.inner_iters):
        r = cer_r_step(workspace, y, y_anchor, omega, cfg.rho)
        y = cer_y_step(workspace, r, y_anchor, omega, g, cfg.gamma, cfg.eta, cfg.rho)
        omega = cer_omega_step(workspace, omega, r, y, y_anchor, cfg.rho)
    if not (np.isfinite(r).all() and np.isfinite(y).all() and np.isfinite(omega).all()):
        raise FloatingPointError("CER diverged")
    workspace.r, workspace.y, workspace.omega = r, y, omega
    return (y_anchor - y) / cfg.eta


def cer_objective(v, y_anchor, g, gamma: float, eta: float) -> float:
    """Objective of the update subproblem at candidate point v."""
    v = np.asarray(v, dtype=float)
    y_anchor = np.asarray(y_anchor, dtype=float)
    op = DifferenceOperator(v.size)
    diff = v - y_anchor
    return float(
        np.asarray(g) @ v + gamma * np.abs(op.apply(diff)).sum() + diff @ diff / (2.0 * eta)
    )
