"""Cyclic Jacobi eigensolver for dense complex Hermitian matrices.

Each rotation first removes the phase of the pivot entry, then applies the
classical real symmetric rotation, so the whole update stays unitary.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _offdiag_norm(A):
    n = A.shape[0]
    s = 0.0
    for p in range(n):
        for q in range(p + 1, n):
            v = A[p, q]
            s += v.real * v.real + v.imag * v.imag
    return np.sqrt(2.0 * s)


@njit(cache=True)
def jacobi_kernel(A, rel_tol, max_sweeps):
    """Diagonalize ``A`` in place.

    Returns ``(V, sweeps, converged)``; on exit ``A`` is diagonal up to
    ``rel_tol * ||A||_F`` and ``V`` holds the eigenvectors column-wise.
    """
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            v = A[i, j]
            fro += v.real * v.real + v.imag * v.imag
    fro = np.sqrt(fro)
    if fro == 0.0:
        return V, 0, True
    target = rel_tol * fro
    for sweep in range(max_sweeps):
        if _offdiag_norm(A) <= target:
            return V, sweep, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                b = abs(apq)
                if b <= 1e-300:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                # rotation is a no-op at double precision for negligible pivots
                if b < 1e-18 * (abs(app) + abs(aqq)):
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    continue
                phase_c = np.conj(apq / b)
                theta = (aqq - app) / (2.0 * b)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                r00 = c + 0j
                r01 = s + 0j
                r10 = -s * phase_c
                r11 = c * phase_c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = akp * r00 + akq * r10
                    A[k, q] = akp * r01 + akq * r11
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = np.conj(r00) * apk + np.conj(r10) * aqk
                    A[q, k] = np.conj(r01) * apk + np.conj(r11) * aqk
                A[p, p] = app - t * b
                A[q, q] = aqq + t * b
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = vkp * r00 + vkq * r10
                    V[k, q] = vkp * r01 + vkq * r11
    return V, max_sweeps, _offdiag_norm(A) <= target
