"""Seeded random matrices shared by the tests."""
import numpy as np


def random_hermitian(n, seed, scale=1.0):
    g = np.random.Generator(np.random.PCG64(seed))
    A = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
    return scale * (A + A.conj().T) / 2


def random_matrix(n, seed):
    g = np.random.Generator(np.random.PCG64(seed))
    return g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))


def random_unit(n, seed):
    g = np.random.Generator(np.random.PCG64(seed))
    v = g.standard_normal(n) + 1j * g.standard_normal(n)
    return v / np.linalg.norm(v)
