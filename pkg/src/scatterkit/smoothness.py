"""Mesh-regularized Kato smoothness.

For an operator ``G`` and a self-adjoint ``H`` the five equivalent smoothness
constants are

* ``gamma_1^2 = (1/2pi) sup_f int ||G e^{-itH} f||^2 dt``
* ``gamma_2^2 = (1/2pi)^2 sup_{f,eps} int ||G R(lam+i eps) f||^2 + ||G R(lam-i eps) f||^2 d lam``
* ``gamma_3^2 = sup_{f,eps} int ||G delta(lam, eps) f||^2 d lam``
* ``gamma_4^2 = sup_{lam,eps} ||G delta(lam, eps) G*||``
* ``gamma_5^2 = sup_Lambda ||G E(Lambda) G*|| / |Lambda|``

On a matrix every one of them diverges unless it is cut off at the mesh scale.
Here ``t`` is truncated to ``[-T, T]``, ``eps`` is pinned to ``eps_min``,
intervals are kept at ``|Lambda| >= len_min``, and ``f`` ranges over the
spectral subspace of ``lambda_window``.  For a genuinely smooth ``G`` the five
numbers then agree up to smoothing bias; their relative ``spread`` is the
smoothness diagnostic.

The functionals ``gamma_1..gamma_3`` are quadratic forms ``f* K f``.  In the
eigenbasis ``K = B o kappa`` (Hadamard product) with ``B = (G U)*(G U)`` and an
energy kernel ``kappa`` obtained by quadrature, so the supremum over ``f`` is
the top eigenvalue of ``K``; its leading eigenvectors are the dominant probes.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshResolutionError, ValidationError
from .operator_core import (
    BorelSet,
    HermitianOperator,
    Projection,
    SpectralResolution,
    opnorm,
    poisson_weights,
    propagator,
    range_projection,
    resolvent,
)

SPACING_FACTOR = 3.0
LAMBDA_PAD = 10.0
TINY = 1e-300
CUTOFF_FAMILIES = ("hard", "ramp", "density")


@dataclass(frozen=True)
class RegularizationParams:
    """Mesh regularization of the smoothness suprema.

    ``t_window`` defaults to ``1/(2 eps_min)``, which gives the time kernel the
    same peak height as the ``eps``-kernels of ``gamma_2`` and ``gamma_3``.
    """

    eps_min: float
    len_min: float
    lambda_window: tuple
    t_window: float | None = None
    probe_count: int = 16
    seed: int = 0

    def __post_init__(self):
        lo, hi = (float(x) for x in self.lambda_window)
        if not lo < hi:
            raise ValidationError("lambda_window must satisfy lo < hi")
        object.__setattr__(self, "lambda_window", (lo, hi))
        if not (self.eps_min > 0 and self.len_min > 0):
            raise ValidationError("eps_min and len_min must be positive")
        if self.t_window is None:
            object.__setattr__(self, "t_window", 1.0 / (2.0 * self.eps_min))
        if not 0 < self.t_window <= np.pi / self.eps_min * (1 + 1e-12):
            raise ValidationError("t_window must lie in (0, pi/eps_min]")
        if int(self.probe_count) < 1:
            raise ValidationError("probe_count must be positive")

    @classmethod
    def checked(cls, S: SpectralResolution, **kwargs) -> "RegularizationParams":
        p = cls(**kwargs)
        p.validate(S)
        return p

    @property
    def window(self) -> BorelSet:
        return BorelSet.interval(*self.lambda_window)

    def validate(self, S: SpectralResolution):
        """Raise :class:`MeshResolutionError` if ``eps_min`` or ``len_min`` is under-resolved."""
        spacing = S.max_spacing(*self.lambda_window)
        need = SPACING_FACTOR * spacing
        if self.eps_min < need or self.len_min < need:
            raise MeshResolutionError(
                f"under-resolved mesh: eps_min={self.eps_min:g}, len_min={self.len_min:g} "
                f"but {SPACING_FACTOR:g} x local spacing = {need:g} in {self.lambda_window}"
            )

    def as_dict(self) -> dict:
        return {
            "eps_min": self.eps_min,
            "len_min": self.len_min,
            "lambda_window": list(self.lambda_window),
            "t_window": self.t_window,
            "probe_count": int(self.probe_count),
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class SmoothnessReport:
    gamma: tuple
    params: RegularizationParams
    spread: float
    probes: tuple = field(default=(), compare=False)

    @property
    def gamma_sq(self) -> tuple:
        return tuple(g * g for g in self.gamma)

    def as_dict(self) -> dict:
        return {
            "gamma": list(self.gamma),
            "gamma_sq": list(self.gamma_sq),
            "spread": self.spread,
            "params": self.params.as_dict(),
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["functional", "probe", "kind", "value"])
        for row in self.probes:
            w.writerow([row[0], row[1], row[2], repr(float(row[3]))])
        return buf.getvalue()


def _spread(gamma) -> float:
    top = max(gamma)
    if top <= 0:
        return 0.0
    return float((top - min(gamma)) / top)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    if x.size > 1:
        d = np.diff(x)
        w[:-1] += d / 2
        w[1:] += d / 2
    return w


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(2, int(np.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class _Kernels:
    """Energy kernels on the window eigenbasis, shared by every ``G``."""

    idx: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    lam_grid: np.ndarray
    dg: np.ndarray


def time_step(S: SpectralResolution) -> float:
    return 0.1 / max(S.norm, 1e-12)


def lambda_quadrature(lo: float, hi: float, eps: float, pad: float = LAMBDA_PAD,
                      tail_nodes: int = 64):
    """Nodes and weights for ``int_R F(lam) d lam`` with ``F = O(lam^-2)``.

    Trapezoid with step ``eps/5`` on ``[lo - pad eps, hi + pad eps]``; each
    tail is mapped to ``(0, 1)`` by ``lam = b + c u/(1-u)`` and integrated by
    Gauss-Legendre, so nothing is cut off.  With the default pad the
    trapezoid end corrections leave a relative error near ``1e-6`` on a
    Poisson kernel centred in the window; a pad of 100 brings it below ``1e-8``.
    """
    a, b = lo - pad * eps, hi + pad * eps
    core = _grid(a, b, eps / 5)
    wc = _trapezoid_weights(core)
    u, wu = np.polynomial.legendre.leggauss(int(tail_nodes))
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    c = max(pad * eps, hi - lo)
    x = c * u / (1.0 - u)
    jac = c / (1.0 - u) ** 2
    nodes = np.concatenate([(a - x)[::-1], core, b + x])
    weights = np.concatenate([(wu * jac)[::-1], wc, wu * jac])
    return nodes, weights


def _row_factor(A: np.ndarray) -> np.ndarray:
    """``r`` with ``r* r = A* A`` and as few rows as the numerical rank of ``A``."""
    _, sv, Vh = np.linalg.svd(A, full_matrices=False)
    keep = sv > 1e-13 * (sv[0] if sv.size else 0.0)
    return sv[keep, None] * Vh[keep]


def _kernels(S: SpectralResolution, params: RegularizationParams) -> _Kernels:
    idx = S.indices_in(params.window)
    lam = S.eigenvalues[idx]
    eps = params.eps_min
    T = params.t_window
    t = _grid(-T, T, time_step(S))
    wt = _trapezoid_weights(t)
    A = np.exp(1j * np.outer(lam, t))
    k1 = ((A * wt) @ A.conj().T) / (2 * np.pi)
    lo, hi = params.lambda_window
    mu, wm = lambda_quadrature(lo, hi, eps)
    k2 = np.zeros((lam.size, lam.size), dtype=np.complex128)
    for sgn in (1.0, -1.0):
        R = 1.0 / (lam[:, None] - mu[None, :] - sgn * 1j * eps)
        k2 += (R.conj() * wm) @ R.T
    k2 /= (2 * np.pi) ** 2
    D = poisson_weights(lam[:, None], mu[None, :], eps)
    k3 = (D * wm) @ D.T
    lg = _grid(lo, hi, eps / 5)
    dg = poisson_weights(lam[:, None], lg[None, :], eps)
    return _Kernels(idx, k1, k2, k3.astype(np.complex128), lg, dg)


def _dyadic_intervals(lo: float, hi: float, len_min: float):
    L = hi - lo
    out = []
    j = 0
    while L / 2 ** j >= len_min:
        h = L / 2 ** j
        for k in range(2 ** j):
            out.append((lo + k * h, lo + (k + 1) * h))
        for k in range(2 ** j - 1):
            out.append((lo + (k + 0.5) * h, lo + (k + 1.5) * h))
        j += 1
    a = lo
    while a + len_min <= hi + 1e-12:
        out.append((a, min(a + len_min, hi)))
        a += len_min / 2
    return out


def _top_eigvecs(K: np.ndarray, count: int):
    w, V = np.linalg.eigh((K + K.conj().T) / 2)
    order = np.argsort(w)[::-1][:count]
    return w[order], V[:, order]


def gamma_estimates(G, S: SpectralResolution, params: RegularizationParams,
                    _kernels_cache: _Kernels | None = None) -> SmoothnessReport:
    """Regularized ``gamma_1..gamma_5`` of ``G`` relative to ``H``.

    Raises
    ------
    MeshResolutionError
        If the regularization scales are finer than ``3x`` the local spacing.
    """
    params.validate(S)
    G = np.asarray(G, dtype=np.complex128)
    if G.ndim != 2 or G.shape[1] != S.dim:
        raise ValidationError("G must have as many columns as H has rows")
    kern = _kernels_cache or _kernels(S, params)
    idx = kern.idx
    if idx.size == 0 or not np.any(G):
        zero = (0.0,) * 5
        return SmoothnessReport(zero, params, 0.0, ())
    # every functional only sees ||A c||, so A can be replaced by a short factor
    r = _row_factor(G @ S.eigenvectors[:, idx])
    B = r.conj().T @ r

    g = np.random.Generator(np.random.PCG64(params.seed))
    n_rand = max(1, int(params.probe_count) // 2)
    n_dom = max(1, int(params.probe_count) - n_rand)
    rand = g.standard_normal((idx.size, n_rand)) + 1j * g.standard_normal((idx.size, n_rand))
    rand /= np.linalg.norm(rand, axis=0)

    probes = []
    gam_sq = []
    for name, kappa in (("gamma1", kern.k1), ("gamma2", kern.k2), ("gamma3", kern.k3)):
        K = B * kappa
        _, dom = _top_eigvecs(K, n_dom)
        best = 0.0
        for kind, block in (("dominant", dom), ("random", rand)):
            vals = np.einsum("ip,ij,jp->p", block.conj(), K, block).real
            for i, v in enumerate(vals):
                probes.append((name, len(probes), kind, float(v)))
            best = max(best, float(vals.max()))
        gam_sq.append(max(best, 0.0))

    g4 = 0.0
    for col in range(kern.lam_grid.size):
        d = kern.dg[:, col]
        M = (r * d) @ r.conj().T
        g4 = max(g4, float(np.linalg.eigvalsh((M + M.conj().T) / 2)[-1]))
    gam_sq.append(g4)

    lam = S.eigenvalues[idx]
    g5 = 0.0
    for a, b in _dyadic_intervals(*params.lambda_window, params.len_min):
        sel = (lam >= a) & (lam <= b)
        if not np.any(sel):
            continue
        Bs = B[np.ix_(sel, sel)]
        g5 = max(g5, float(np.linalg.eigvalsh(Bs)[-1]) / (b - a))
    gam_sq.append(g5)

    gamma = tuple(float(np.sqrt(max(v, 0.0))) for v in gam_sq)
    return SmoothnessReport(gamma, params, _spread(gamma), tuple(probes))


def probe_functional(G, S: SpectralResolution, f, which: str, params: RegularizationParams) -> float:
    """Direct quadrature of one smoothness functional at one vector ``f``.

    This uses full propagators/resolvents in the site basis, independently of
    the Gram-kernel route in :func:`gamma_estimates`; ``f`` is first projected
    onto the spectral subspace of the window.
    """
    G = np.asarray(G, dtype=np.complex128)
    U = S.eigenvectors
    idx = S.indices_in(params.window)
    f = U[:, idx] @ (U[:, idx].conj().T @ np.asarray(f, dtype=np.complex128))
    eps = params.eps_min
    if which == "gamma1":
        t = _grid(-params.t_window, params.t_window, time_step(S))
        vals = [np.linalg.norm(G @ (propagator(S, s) @ f)) ** 2 for s in t]
        return float(np.dot(_trapezoid_weights(t), vals) / (2 * np.pi))
    mu, w = lambda_quadrature(*params.lambda_window, eps)
    if which == "gamma2":
        vals = [
            np.linalg.norm(G @ resolvent(S, m + 1j * eps) @ f) ** 2
            + np.linalg.norm(G @ resolvent(S, m - 1j * eps) @ f) ** 2
            for m in mu
        ]
        return float(np.dot(w, vals) / (2 * np.pi) ** 2)
    if which == "gamma3":
        vals = [np.linalg.norm(G @ S.weighted(poisson_weights(S.eigenvalues, m, eps)) @ f) ** 2 for m in mu]
        return float(np.dot(w, vals))
    raise ValidationError(f"unknown functional {which!r}")


@dataclass(frozen=True)
class ACReport:
    grid: np.ndarray
    cdf_norms: np.ndarray
    max_difference_quotient: float
    lipschitz_flag: bool
    bound: float

    def as_dict(self) -> dict:
        return {
            "max_difference_quotient": self.max_difference_quotient,
            "lipschitz_flag": self.lipschitz_flag,
            "bound": self.bound if np.isfinite(self.bound) else None,
            "grid_points": int(self.grid.size),
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "cdf_norm"])
        for x, v in zip(self.grid, self.cdf_norms):
            w.writerow([repr(float(x)), repr(float(v))])
        return buf.getvalue()


def ac_modulus(P, S: SpectralResolution, grid, bound: float = np.inf) -> ACReport:
    """Absolute-continuity diagnostic for ``lam -> P* E_H(lam) P``.

    ``P`` is usually a :class:`Projection`, but any matrix ``S_op`` is accepted
    and the map ``S_op* E_H(lam) S_op`` is examined instead.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly ascending with at least two points")
    M = P.matrix if isinstance(P, (Projection, HermitianOperator)) else np.asarray(P, dtype=np.complex128)
    A = S.eigenvectors.conj().T @ M
    counts = S.counting(grid)
    cdf = np.array([opnorm(A[:c]) ** 2 if c else 0.0 for c in counts])
    quot = 0.0
    for k in range(grid.size - 1):
        a, b = counts[k], counts[k + 1]
        if b > a:
            quot = max(quot, opnorm(A[a:b]) ** 2 / (grid[k + 1] - grid[k]))
    return ACReport(grid, cdf, float(quot), bool(quot <= bound), float(bound))


def _density_sup_at_eigenvalues(P, S: SpectralResolution, eps: float) -> np.ndarray:
    """``||P delta(lam_k, eps) P||`` at every eigenvalue ``lam_k``."""
    M = np.asarray(P.matrix if isinstance(P, (Projection, HermitianOperator)) else P, dtype=np.complex128)
    r = _row_factor(M @ S.eigenvectors)
    out = np.empty(S.dim)
    for k, lk in enumerate(S.eigenvalues):
        d = poisson_weights(S.eigenvalues, lk, eps)
        X = (r * d) @ r.conj().T
        out[k] = np.linalg.eigvalsh((X + X.conj().T) / 2)[-1]
    return out


def cutoff_weights(S: SpectralResolution, n: int, family: str = "hard", *, P=None,
                   eps: float | None = None) -> np.ndarray:
    """Spectral weights ``omega_n(lam_k)`` of a cutoff family.

    * ``hard``: indicator of ``[-n, n]``.
    * ``ramp``: 1 on ``[-n, n]``, linear shoulder of width 1, 0 beyond ``n + 1``.
    * ``density``: indicator of ``{|lam| <= n, ||P delta(lam, eps) P|| <= n/(2 pi)^2}``;
      requires ``P`` and ``eps``.  For this family ``P omega_n(H)`` has
      regularized ``gamma_5^2 <= n/(2 pi)^2`` by construction.
    """
    if int(n) < 1:
        raise ValidationError("cutoff index n must be >= 1")
    if family not in CUTOFF_FAMILIES:
        raise ValidationError(f"unknown cutoff family {family!r}")
    lam = S.eigenvalues
    if family == "hard":
        return (np.abs(lam) <= n).astype(float)
    if family == "ramp":
        return np.clip(n + 1.0 - np.abs(lam), 0.0, 1.0)
    if P is None or eps is None:
        raise ValidationError("density cutoff family needs P and eps")
    dens = _density_sup_at_eigenvalues(P, S, float(eps))
    return ((np.abs(lam) <= n) & (dens <= n / (2 * np.pi) ** 2)).astype(float)


def cutoff_operator(S: SpectralResolution, n: int, family: str = "hard", *, P=None,
                    eps: float | None = None) -> HermitianOperator:
    """``omega_n(H)``: ``0 <= omega_n(H) <= I``, commuting with ``H``, increasing to ``I``."""
    return HermitianOperator(S.weighted(cutoff_weights(S, n, family, P=P, eps=eps)))


def windowed_time_integral(G, S: SpectralResolution, f, T: float, dt: float | None = None) -> float:
    """Trapezoid quadrature of ``int_{-T}^{T} ||G e^{-itH} f||^2 dt``."""
    G = np.asarray(G, dtype=np.complex128)
    dt = dt or time_step(S)
    t = _grid(-T, T, dt)
    c = S.eigenvectors.conj().T @ np.asarray(f, dtype=np.complex128)
    A = G @ S.eigenvectors
    Y = A @ (c[:, None] * np.exp(-1j * np.outer(S.eigenvalues, t)))
    vals = np.sum(np.abs(Y) ** 2, axis=0)
    return float(np.dot(_trapezoid_weights(t), vals))


def _check_filter_mesh(S: SpectralResolution, eps: float, n_bound: float):
    lo = max(-n_bound, float(S.eigenvalues[0]))
    hi = min(n_bound, float(S.eigenvalues[-1]))
    if lo > hi:
        return
    spacing = S.max_spacing(lo, hi)
    # a lone eigenvalue has no neighbours to resolve
    if np.isfinite(spacing) and eps < SPACING_FACTOR * spacing:
        raise MeshResolutionError(
            f"under-resolved mesh: eps={eps:g} below {SPACING_FACTOR:g} x spacing {spacing:g}"
        )


def smooth_vector_filter(S: SpectralResolution, f, N_bound: float, n_bound: float, eps: float,
                         G=None) -> np.ndarray:
    """Keep the part of ``f`` whose regularized spectral density is bounded.

    ``g = E_H(X) f`` with ``X = {lam_k : |lam_k| <= n_bound, ||G delta(lam_k, eps) f|| <= N_bound}``.
    ``G`` defaults to the identity, so the bound holds for every contraction.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    _check_filter_mesh(S, eps, n_bound)
    f = np.asarray(f, dtype=np.complex128)
    U = S.eigenvectors
    c = U.conj().T @ f
    lam = S.eigenvalues
    W = poisson_weights(lam[None, :], lam[:, None], eps) * c[None, :]
    if G is None:
        F = np.linalg.norm(W, axis=1)
    else:
        F = np.linalg.norm(np.asarray(G, dtype=np.complex128) @ U @ W.T, axis=0)
    keep = (np.abs(lam) <= n_bound) & (F <= N_bound)
    return U[:, keep] @ c[keep]


def classify_smooth(candidates, S: SpectralResolution, params: RegularizationParams,
                    smooth_spread_tol: float, threads: int = 1):
    """Smoothness report and accept/reject verdict for each candidate."""
    params.validate(S)
    kern = _kernels(S, params)

    def one(G):
        rep = gamma_estimates(G, S, params, _kernels_cache=kern)
        finite = all(np.isfinite(rep.gamma))
        nonzero = max(rep.gamma) > 0
        return (finite and nonzero and rep.spread <= smooth_spread_tol), rep

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, candidates))
    return [one(G) for G in candidates]


def pac_infty_estimate(S: SpectralResolution, candidates, params: RegularizationParams,
                       smooth_spread_tol: float = 0.3, rank_tol: float = 1e-8,
                       threads: int = 1) -> Projection:
    """Join of ``R(G*)`` over the candidates classified as mesh-smooth.

    Smoothness is only certified on the spectral window, so each accepted
    candidate contributes the range of ``E_H(window) G*``.  An empty accepted
    set gives the zero projection.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValidationError("need at least one candidate")
    verdicts = classify_smooth(candidates, S, params, smooth_spread_tol, threads)
    idx = S.indices_in(params.window)
    Uw = S.eigenvectors[:, idx]
    Ew = Uw @ Uw.conj().T
    cols = [Ew @ np.asarray(G, dtype=np.complex128).conj().T
            for G, (ok, _) in zip(candidates, verdicts) if ok]
    if not cols:
        return Projection(np.zeros((S.dim, S.dim)))
    return range_projection(np.hstack(cols), rank_tol)
