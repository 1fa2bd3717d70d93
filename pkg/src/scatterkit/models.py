"""Deterministic benchmark operators, perturbations and couplings.

Randomized builders draw from ``numpy.random.Generator(numpy.random.PCG64(seed))``
only, so a fixed seed gives byte-identical matrices.  Sites are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .operator_core import (
    BorelSet,
    HermitianOperator,
    SpectralResolution,
    opnorm,
    spectral_projection,
)

MODEL_KINDS = ("path_laplacian", "multiplication", "diagonal_custom")
PERTURBATION_KINDS = ("rank_k", "local_potential", "random_trace_class")
COUPLING_KINDS = ("identity", "band_limited", "contraction")

_NAMED_G = {
    "identity": lambda x: x,
    "square": lambda x: x ** 2,
    "sqrt": np.sqrt,
    "affine": lambda x: 4.0 * x,
}


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class ModelSpec:
    """Recipe for a benchmark operator.

    ``params`` by kind:

    * ``path_laplacian``: ``embedded`` (list of eigenvalues appended as decoupled
      1x1 blocks; the chain then has ``dim - len(embedded)`` sites).
    * ``multiplication``: ``g`` (name in ``identity, square, sqrt, affine`` or a
      callable); the operator is ``diag(g(k/dim))``, ``k = 1..dim``.
    * ``diagonal_custom``: ``values`` (list of length ``dim``).
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if int(self.dim) < 2:
            raise ValidationError("model dim must be >= 2")


def path_laplacian(n: int) -> np.ndarray:
    """Dirichlet path Laplacian: 2 on the diagonal, -1 on the off-diagonals."""
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def path_laplacian_eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(k * np.pi / (n + 1))


def band_density(lam):
    """Continuum density of states of the path Laplacian, ``1/(pi sqrt(lam (4 - lam)))``."""
    lam = np.asarray(lam, dtype=float)
    return 1.0 / (np.pi * np.sqrt(lam * (4.0 - lam)))


def build_operator(spec: ModelSpec) -> HermitianOperator:
    n = int(spec.dim)
    if spec.kind == "path_laplacian":
        embedded = [float(v) for v in spec.params.get("embedded", [])]
        chain = n - len(embedded)
        if chain < 2:
            raise ValidationError("too many embedded eigenvalues for the model dim")
        M = np.zeros((n, n))
        M[:chain, :chain] = path_laplacian(chain)
        for i, v in enumerate(embedded):
            M[chain + i, chain + i] = v
        return HermitianOperator(M)
    if spec.kind == "multiplication":
        g = spec.params.get("g", "identity")
        if isinstance(g, str):
            if g not in _NAMED_G:
                raise ValidationError(f"unknown multiplication profile {g!r}")
            g = _NAMED_G[g]
        x = np.arange(1, n + 1) / n
        return HermitianOperator(np.diag(np.asarray(g(x), dtype=float)))
    values = spec.params.get("values")
    if values is None or len(values) != n:
        raise ValidationError("diagonal_custom needs 'values' of length dim")
    return HermitianOperator(np.diag(np.asarray(values, dtype=float)))


def center_site(dim: int) -> int:
    return dim // 2


def build_perturbation(kind: str, dim: int, strength: float, seed: int = 0, *,
                       k: int = 1, sites=None, width: float = 2.0) -> HermitianOperator:
    """Trace-class perturbation ``V``.

    * ``rank_k``: ``strength * sum_m e_m e_m*`` over ``k`` sites (default: the
      ``k`` sites starting at the center).
    * ``local_potential``: Gaussian well ``strength * exp(-((x - c)/width)^2)``.
    * ``random_trace_class``: ``Q diag(+-strength 2^-j) Q*`` with ``Q`` Haar
      unitary, ``j = 0..dim-1``, so ``||V||_1 = strength (2 - 2^(1-dim))``.
    """
    if kind not in PERTURBATION_KINDS:
        raise ValidationError(f"unknown perturbation kind {kind!r}")
    if not strength >= 0:
        raise ValidationError("strength must be nonnegative")
    if kind == "rank_k":
        if sites is None:
            if not 1 <= k <= dim:
                raise ValidationError(f"invalid rank {k} for dim {dim}")
            start = min(center_site(dim), dim - k)
            sites = list(range(start, start + k))
        sites = sorted({int(s) for s in sites})
        if not sites or sites[0] < 0 or sites[-1] >= dim:
            raise ValidationError(f"invalid perturbation sites {sites}")
        V = np.zeros((dim, dim))
        V[sites, sites] = strength
        return HermitianOperator(V)
    if kind == "local_potential":
        x = np.arange(dim)
        prof = np.exp(-(((x - center_site(dim)) / float(width)) ** 2))
        return HermitianOperator(np.diag(strength * prof))
    g = rng(seed)
    Z = (g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    signs = np.where(g.random(dim) < 0.5, -1.0, 1.0)
    ev = strength * signs * 2.0 ** -np.arange(dim)
    return HermitianOperator((Q * ev) @ Q.conj().T)


def random_trace_class_norm(dim: int, strength: float) -> float:
    """Analytic trace norm of the ``random_trace_class`` profile."""
    return strength * (2.0 - 2.0 ** (1 - dim))


def build_coupling(kind: str, dim: int, *, S: SpectralResolution | None = None,
                   window=None, c: complex = 0.0, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Identification operator ``J``.

    ``band_limited`` is ``E_H(window) + c E_H(R \\ window)`` with ``|c| <= 1``;
    ``contraction`` is a seeded Gaussian matrix rescaled to operator norm ``scale <= 1``.
    """
    if kind not in COUPLING_KINDS:
        raise ValidationError(f"unknown coupling kind {kind!r}")
    if kind == "identity":
        return np.eye(dim, dtype=np.complex128)
    if kind == "band_limited":
        if S is None or window is None:
            raise ValidationError("band_limited coupling needs S and window")
        if abs(c) > 1:
            raise ValidationError("band_limited coupling needs |c| <= 1")
        win = window if isinstance(window, BorelSet) else BorelSet.interval(*window)
        E = spectral_projection(S, win).matrix
        return E + c * (np.eye(dim) - E)
    if not 0 < scale <= 1:
        raise ValidationError("contraction scale must lie in (0, 1]")
    g = rng(seed)
    M = g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim))
    return M * (scale / opnorm(M))


def position_cutoff(dim: int, sites, normalize: str | None = None) -> np.ndarray:
    """Diagonal projection onto a set of sites; ``normalize='hs'`` scales to unit HS norm."""
    sites = np.asarray(sorted({int(s) for s in sites}), dtype=int)
    if sites.size == 0 or sites[0] < 0 or sites[-1] >= dim:
        raise ValidationError("position cutoff sites out of range")
    G = np.zeros((dim, dim), dtype=np.complex128)
    G[sites, sites] = 1.0
    if normalize == "hs":
        G /= np.sqrt(sites.size)
    return G


def central_sites(dim: int, count: int) -> list:
    start = center_site(dim) - count // 2
    return list(range(start, start + count))


def site_blocks(dim: int, block: int) -> list:
    """Partition of ``range(dim)`` into consecutive blocks of at most ``block`` sites."""
    return [list(range(a, min(a + block, dim))) for a in range(0, dim, block)]
