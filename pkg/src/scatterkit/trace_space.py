"""Weighted traces, Schatten norms and the polar factorization of commutators.

The semifinite trace is modeled by ``tau(A) = sum_i w_i A_ii`` on the full
matrix algebra.  With uniform weights this is the usual (cyclic) trace; other
weights break cyclicity and are only meant as a desk model of a non-uniform
tracial weight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .operator_core import maxnorm

FACT_TOL = 1e-10


@dataclass(frozen=True)
class TraceWeight:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("trace weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, dim: int) -> "TraceWeight":
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def total(self) -> float:
        """``tau(I)``."""
        return float(self.weights.sum())

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def _weight(w, dim) -> TraceWeight:
    if w is None:
        return TraceWeight.uniform(dim)
    if not isinstance(w, TraceWeight):
        w = TraceWeight(w)
    if w.dim != dim:
        raise ValidationError(f"dimension mismatch: weight has {w.dim}, matrix has {dim}")
    return w


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    return A


def trace(A, w: TraceWeight | None = None) -> complex:
    """``tau(A) = sum_i w_i A_ii``."""
    A = _square(A)
    w = _weight(w, A.shape[0])
    return complex(np.sum(w.weights * np.diag(A)))


def singular_values(A) -> np.ndarray:
    """Singular values in descending order."""
    A = np.asarray(A, dtype=np.complex128)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def schatten_norm(A, p=1.0, w: TraceWeight | None = None) -> float:
    """Schatten ``p``-norm ``tau(|A|^p)^(1/p)``; ``p=np.inf`` gives the operator norm.

    For non-uniform weights the modulus ``|A|^p`` is formed from the SVD and
    its diagonal is weighted, i.e. ``(sum_i w_i (|A|^p)_ii)^(1/p)``.
    """
    A = _square(A)
    p = float(p)
    if not p >= 1:
        raise ValidationError(f"Schatten index must be >= 1, got {p}")
    w = _weight(w, A.shape[0])
    if p == np.inf:
        s = singular_values(A)
        return float(s[0]) if s.size else 0.0
    if w.is_uniform:
        s = singular_values(A)
        return float(w.weights[0] ** (1 / p) * np.sum(s ** p) ** (1 / p))
    _, s, Yh = np.linalg.svd(A)
    mod_p_diag = np.einsum("ki,k,ki->i", Yh.conj(), s ** p, Yh).real
    return float(np.sum(w.weights * mod_p_diag) ** (1 / p))


@dataclass(frozen=True)
class CommutatorFactorization:
    """``T = G1* G`` with ``G = |T|^(1/2)`` and ``G1* = V |T|^(1/2)``."""

    G: np.ndarray
    G1: np.ndarray
    T: np.ndarray
    V: np.ndarray

    def residual(self) -> float:
        return maxnorm(self.G1.conj().T @ self.G - self.T)


def factor_commutator(T) -> CommutatorFactorization:
    """Polar factorization of ``T`` into two Hilbert-Schmidt factors.

    With ``T = X S Y*`` (SVD), ``|T| = Y S Y*``, the partial isometry is
    ``V = X Y*`` and ``G1* = X S^(1/2) Y*``, so ``G1* G = T`` and
    ``||G||_2^2 = ||G1||_2^2 = ||T||_1``.
    """
    T = _square(T)
    X, s, Yh = np.linalg.svd(T)
    root = np.sqrt(s)
    Y = Yh.conj().T
    G = (Y * root) @ Yh
    G1_adj = (X * root) @ Yh
    # partial isometry only on the support of |T|
    support = s > 1e-14 * (s[0] if s.size and s[0] > 0 else 1.0)
    V = X[:, support] @ Yh[support, :]
    fac = CommutatorFactorization(G=G, G1=G1_adj.conj().T, T=T, V=V)
    res = fac.residual()
    if res > FACT_TOL * max(1.0, maxnorm(T)):
        raise ValidationError(f"commutator factorization residual {res:.3e} too large")
    return fac
