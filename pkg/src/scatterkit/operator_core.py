"""Dense self-adjoint operators and their spectral calculus.

Everything here is built on a :class:`SpectralResolution`: once ``H = U diag(lam) U*``
is known, the propagator, the resolvent, the Poisson kernel ``delta_H`` and any
Borel function of ``H`` are diagonal reweightings of the same eigenbasis.

Finite matrices have pure point spectrum, so every ``eps -> 0`` limit is only
meaningful on scales coarser than the local eigenvalue spacing.  Operations that
take such limits accept an explicit ``eps`` schedule and report whether the
values stabilize instead of pretending the limit exists.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from threading import Lock
from typing import Callable, Iterable, Sequence

import numpy as np

from ._jacobi import jacobi_kernel
from .errors import ConvergenceError, SpectralPoleError, ValidationError

HERMITICITY_TOL = 1e-12
ORTHO_TOL = 1e-10
RECON_TOL = 1e-9
PROJ_TOL = 1e-10
RESOLVENT_GUARD = 1e-12
JACOBI_REL_TOL = 1e-15
JACOBI_MAX_SWEEPS = 60


def as_complex_matrix(A, name="matrix") -> np.ndarray:
    """Return ``A`` as a finite square complex128 array (a copy when converted)."""
    if isinstance(A, (HermitianOperator, Projection)):
        return A.matrix
    M = np.asarray(A, dtype=np.complex128)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class HermitianOperator:
    """A dense self-adjoint matrix, stored symmetrized as ``(A + A*)/2``.

    The hermiticity check is relative: ``||A - A*||_max <= tol * max(1, ||A||_max)``.
    """

    __slots__ = ("_matrix",)

    def __init__(self, A, hermiticity_tol=HERMITICITY_TOL):
        M = as_complex_matrix(A, "operator")
        scale = max(1.0, float(np.max(np.abs(M))))
        asym = float(np.max(np.abs(M - M.conj().T)))
        if asym > hermiticity_tol * scale:
            raise ValidationError(f"operator is not Hermitian: ||A - A*||_max = {asym:.3e}")
        self._matrix = _frozen((M + M.conj().T) / 2)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self._matrix, 2))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._matrix, dtype=dtype)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


class Projection:
    """Orthogonal projection matrix (idempotent and self-adjoint within ``proj_tol``)."""

    __slots__ = ("_matrix",)

    def __init__(self, P, proj_tol=PROJ_TOL):
        M = as_complex_matrix(P, "projection")
        idem = float(np.max(np.abs(M @ M - M)))
        herm = float(np.max(np.abs(M - M.conj().T)))
        if idem > proj_tol or herm > proj_tol:
            raise ValidationError(
                f"not an orthogonal projection: ||P^2-P||={idem:.3e}, ||P-P*||={herm:.3e}"
            )
        self._matrix = _frozen((M + M.conj().T) / 2)

    @classmethod
    def from_columns(cls, Q: np.ndarray, dim: int | None = None) -> "Projection":
        """Projection onto the span of the orthonormal columns of ``Q``."""
        Q = np.asarray(Q, dtype=np.complex128)
        if Q.ndim != 2:
            raise ValidationError("Q must be two-dimensional")
        if Q.shape[1] == 0:
            return cls(np.zeros((dim or Q.shape[0],) * 2))
        return cls(Q @ Q.conj().T)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def rank(self) -> int:
        return int(round(float(np.trace(self._matrix).real)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._matrix, dtype=dtype)

    def __repr__(self):
        return f"Projection(dim={self.dim}, rank={self.rank})"


@dataclass(frozen=True)
class SpectralResolution:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of ``H``.

    ``E_H(lam)`` is the sum of ``u_i u_i*`` over ``lam_i <= lam``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = field(default=0, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        U = np.asarray(self.eigenvectors, dtype=np.complex128)
        if lam.ndim != 1 or U.shape != (lam.size, lam.size):
            raise ValidationError("eigenvalue/eigenvector shapes disagree")
        if np.any(np.diff(lam) < 0):
            raise ValidationError("eigenvalues must be nondecreasing")
        ortho = float(np.max(np.abs(U.conj().T @ U - np.eye(lam.size))))
        if ortho > ORTHO_TOL:
            raise ValidationError(f"eigenvectors not orthonormal: {ortho:.3e}")
        object.__setattr__(self, "eigenvalues", _frozen(lam))
        object.__setattr__(self, "eigenvectors", _frozen(U))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T

    def weighted(self, w: np.ndarray) -> np.ndarray:
        """``U diag(w) U*`` for a weight per eigenvalue."""
        U = self.eigenvectors
        return (U * w) @ U.conj().T

    def to_eigenbasis(self, A) -> np.ndarray:
        U = self.eigenvectors
        return U.conj().T @ np.asarray(A) @ U

    def from_eigenbasis(self, A) -> np.ndarray:
        U = self.eigenvectors
        return U @ np.asarray(A) @ U.conj().T

    def indices_in(self, borel: "BorelSet") -> np.ndarray:
        return np.flatnonzero(borel.contains(self.eigenvalues))

    def counting(self, lam) -> np.ndarray:
        """Number of eigenvalues ``<= lam`` (the trace of ``E_H(lam)``)."""
        return np.searchsorted(self.eigenvalues, np.asarray(lam, dtype=float), side="right")

    def max_spacing(self, lo: float, hi: float) -> float:
        """Largest gap between consecutive eigenvalues touching ``[lo, hi]``.

        Gaps that straddle an endpoint count, so an empty window reports the
        gap that contains it.
        """
        lam = self.eigenvalues
        if lam.size < 2:
            return np.inf
        gaps = np.diff(lam)
        touching = (lam[1:] >= lo) & (lam[:-1] <= hi)
        if not np.any(touching):
            return np.inf
        return float(np.max(gaps[touching]))


def _phase_normalize(U: np.ndarray) -> np.ndarray:
    U = U.copy()
    for k in range(U.shape[1]):
        col = U[:, k]
        mags = np.abs(col)
        idx = int(np.argmax(mags > 1e-10 * mags.max()))
        x = col[idx]
        U[:, k] = col * (np.conj(x) / abs(x))
    return U


_CACHE: "OrderedDict[tuple, SpectralResolution]" = OrderedDict()
_CACHE_LOCK = Lock()
_CACHE_SIZE = 16


def spectral_decompose(H, rel_tol=JACOBI_REL_TOL, max_sweeps=JACOBI_MAX_SWEEPS) -> SpectralResolution:
    """Eigendecomposition of a Hermitian operator by cyclic Jacobi rotations.

    Eigenvalues are sorted ascending (stable for ties) and every eigenvector is
    rotated so its first non-negligible component is real positive.  Output is
    bitwise reproducible for a given input.

    Raises
    ------
    ConvergenceError
        If the off-diagonal mass is still above ``rel_tol * ||H||_F`` after
        ``max_sweeps`` sweeps.
    """
    if not isinstance(H, HermitianOperator):
        H = HermitianOperator(H)
    key = (H.dim, H.matrix.tobytes(), rel_tol, max_sweeps)
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
        if hit is not None:
            _CACHE.move_to_end(key)
            return hit
    S = _decompose(H, rel_tol, max_sweeps)
    with _CACHE_LOCK:
        _CACHE[key] = S
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return S


def _decompose(H: HermitianOperator, rel_tol, max_sweeps) -> SpectralResolution:
    A = np.array(H.matrix, dtype=np.complex128, order="C")
    V, sweeps, ok = jacobi_kernel(A, rel_tol, max_sweeps)
    if not ok:
        raise ConvergenceError("Jacobi eigensolver did not converge", sweeps)
    lam = np.diag(A).real.copy()
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    U = _phase_normalize(V[:, order])
    S = SpectralResolution(lam, U, sweeps=sweeps)
    recon = float(np.max(np.abs(S.reconstruct() - H.matrix)))
    if recon > RECON_TOL * max(1.0, S.norm):
        raise ConvergenceError(f"reconstruction error {recon:.3e} above tolerance", sweeps)
    return S


def _evaluate(phi: Callable, lam: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(phi(lam), dtype=np.complex128)
        if vals.shape != lam.shape:
            vals = np.broadcast_to(vals, lam.shape).astype(np.complex128)
    except (TypeError, ValueError):
        vals = np.array([complex(phi(float(x))) for x in lam], dtype=np.complex128)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise ValidationError(f"function is not finite at eigenvalue {lam[bad][0]!r}")
    return vals


def apply_function(S: SpectralResolution, phi: Callable) -> np.ndarray:
    """Borel functional calculus: ``phi(H) = sum_i phi(lam_i) u_i u_i*``.

    ``phi`` may be vectorized over numpy arrays or a plain scalar function.
    """
    return S.weighted(_evaluate(phi, S.eigenvalues))


@dataclass(frozen=True)
class BorelSet:
    """Finite union of disjoint real intervals, sorted by left endpoint.

    Each interval is ``(lo, hi, lo_closed, hi_closed)``; infinite endpoints are
    allowed and always open.
    """

    intervals: tuple = ()

    def __post_init__(self):
        ivs = []
        for iv in self.intervals:
            if len(iv) == 2:
                lo, hi = iv
                lc, hc = True, True
            else:
                lo, hi, lc, hc = iv
            lo, hi = float(lo), float(hi)
            if np.isnan(lo) or np.isnan(hi) or lo > hi:
                raise ValidationError(f"bad interval ({lo}, {hi})")
            lc = bool(lc) and np.isfinite(lo)
            hc = bool(hc) and np.isfinite(hi)
            if lo == hi and not (lc and hc):
                continue
            ivs.append((lo, hi, lc, hc))
        ivs.sort(key=lambda iv: (iv[0], not iv[2]))
        for a, b in zip(ivs, ivs[1:]):
            if b[0] < a[1] or (b[0] == a[1] and a[3] and b[2]):
                raise ValidationError(f"intervals overlap: {a} and {b}")
        object.__setattr__(self, "intervals", tuple(ivs))

    @classmethod
    def interval(cls, lo, hi, lo_closed=True, hi_closed=True) -> "BorelSet":
        return cls(((lo, hi, lo_closed, hi_closed),))

    @classmethod
    def real_line(cls) -> "BorelSet":
        return cls(((-np.inf, np.inf, False, False),))

    @classmethod
    def empty(cls) -> "BorelSet":
        return cls(())

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi, _, _ in self.intervals))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for lo, hi, lc, hc in self.intervals:
            left = (x >= lo) if lc else (x > lo)
            right = (x <= hi) if hc else (x < hi)
            out |= left & right
        return out

    def intersect(self, other: "BorelSet") -> "BorelSet":
        out = []
        for a in self.intervals:
            for b in other.intervals:
                if a[0] > b[0] or (a[0] == b[0] and not a[2]):
                    lo, lc = a[0], a[2]
                else:
                    lo, lc = b[0], b[2]
                if a[1] < b[1] or (a[1] == b[1] and not a[3]):
                    hi, hc = a[1], a[3]
                else:
                    hi, hc = b[1], b[3]
                if lo < hi or (lo == hi and lc and hc):
                    out.append((lo, hi, lc, hc))
        return BorelSet(tuple(out))

    def complement(self) -> "BorelSet":
        out = []
        lo, lc = -np.inf, False
        for a_lo, a_hi, a_lc, a_hc in self.intervals:
            if lo < a_lo or (lo == a_lo and lc and not a_lc):
                out.append((lo, a_lo, lc, not a_lc))
            lo, lc = a_hi, not a_hc
        if lo < np.inf:
            out.append((lo, np.inf, lc, False))
        return BorelSet(tuple(out))


def spectral_projection(S: SpectralResolution, borel: BorelSet) -> Projection:
    """``E_H(Lambda)``: projection onto eigenvectors with eigenvalue in ``borel``."""
    idx = S.indices_in(borel)
    return Projection.from_columns(S.eigenvectors[:, idx], S.dim)


def propagator(S: SpectralResolution, t: float) -> np.ndarray:
    """Unitary group ``exp(-itH)``."""
    t = float(t)
    if not np.isfinite(t):
        raise ValidationError("t must be finite")
    return S.weighted(np.exp(-1j * t * S.eigenvalues))


def _check_pole(S: SpectralResolution, z: complex, guard: float):
    dist = np.abs(S.eigenvalues - z)
    k = int(np.argmin(dist))
    if dist[k] < guard:
        raise SpectralPoleError(z, float(S.eigenvalues[k]), guard)


def resolvent(S: SpectralResolution, z: complex, guard=RESOLVENT_GUARD) -> np.ndarray:
    """``R_H(z) = (H - z)^{-1}``; refuses ``z`` within ``guard`` of the spectrum."""
    z = complex(z)
    _check_pole(S, z, guard)
    return S.weighted(1.0 / (S.eigenvalues - z))


def resolvent_condition(S: SpectralResolution, z: complex) -> float:
    """``||H|| / dist(z, spec H)``, the scale of the resolvent residual tolerance."""
    return max(1.0, S.norm) / float(np.min(np.abs(S.eigenvalues - complex(z))))


def poisson_weights(lam: np.ndarray, at: float, eps: float) -> np.ndarray:
    """Poisson kernel ``(eps/pi) / ((lam - at)^2 + eps^2)``."""
    return (eps / np.pi) / ((lam - at) ** 2 + eps * eps)


def delta_smoothing(S: SpectralResolution, lam: float, eps: float) -> HermitianOperator:
    """Smoothed spectral density ``delta_H(lam, eps) = (eps/pi) R(lam+i eps) R(lam-i eps)``.

    Positive semidefinite with total mass ``int <delta f, f> d lam = ||f||^2``.
    """
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps!r}")
    return HermitianOperator(S.weighted(poisson_weights(S.eigenvalues, float(lam), float(eps))))


@dataclass(frozen=True)
class DensityTrail:
    """Values of ``<delta(lam, eps_k) f, g>`` along a descending ``eps`` schedule."""

    lam: float
    eps: np.ndarray
    values: np.ndarray
    rel_changes: np.ndarray
    stabilized: bool

    @property
    def value(self) -> complex:
        return complex(self.values[-1])


def _check_schedule(eps_schedule) -> np.ndarray:
    eps = np.asarray(eps_schedule, dtype=float).ravel()
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValidationError("eps schedule must be nonempty, positive and strictly descending")
    return eps


def spectral_density(S: SpectralResolution, f, g, lam: float, eps_schedule: Sequence[float],
                     stab_tol: float = 0.05) -> DensityTrail:
    """Regularized density ``d<E_H(lam) f, g>/d lam`` along an ``eps`` schedule.

    ``stabilized`` is set when every successive relative change is at most
    ``stab_tol``.  Near an isolated eigenvalue the values grow like ``1/eps``
    and the flag stays false; that is a diagnostic, not an error.
    """
    eps = _check_schedule(eps_schedule)
    U = S.eigenvectors
    cf = U.conj().T @ np.asarray(f, dtype=np.complex128)
    cg = U.conj().T @ np.asarray(g, dtype=np.complex128)
    cross = cf * cg.conj()
    vals = np.array([np.sum(poisson_weights(S.eigenvalues, lam, e) * cross) for e in eps])
    if vals.size > 1:
        scale = np.maximum(np.abs(vals[:-1]), 1e-300)
        rel = np.abs(np.diff(vals)) / scale
        # an identically vanishing density is stable
        rel[np.abs(vals[:-1]) < 1e-300] = 0.0
    else:
        rel = np.zeros(0)
    return DensityTrail(float(lam), eps, vals, rel, bool(np.all(rel <= stab_tol)))


def range_projection(A, rank_tol: float = 1e-10) -> Projection:
    """Projection onto the span of left singular vectors with ``sigma > rank_tol * sigma_max``."""
    if not rank_tol > 0:
        raise ValidationError("rank_tol must be positive")
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2:
        raise ValidationError("A must be two-dimensional")
    if A.size == 0 or not np.any(A):
        return Projection(np.zeros((A.shape[0],) * 2))
    X, sig, _ = np.linalg.svd(A, full_matrices=False)
    keep = sig > rank_tol * sig[0]
    return Projection.from_columns(X[:, keep], A.shape[0])


def commutes(A, B, tol) -> bool:
    A = np.asarray(A)
    B = np.asarray(B)
    return float(np.max(np.abs(A @ B - B @ A))) <= tol


def opnorm(A) -> float:
    """Operator (spectral) norm."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def maxnorm(A) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A))) if A.size else 0.0
