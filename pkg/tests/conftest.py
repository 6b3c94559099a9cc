"""Shared helpers for the test suite: seeded generators and random matrices."""

import numpy as np
import pytest

from sketchlr import SparseMatrix


def make_gen(seed: int = 20240817) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_orthonormal(gen: np.random.Generator, n: int, k: int) -> np.ndarray:
    q, _ = np.linalg.qr(gen.standard_normal((n, k)))
    return q


def random_rank_k(gen: np.random.Generator, m: int, n: int, k: int) -> np.ndarray:
    return gen.standard_normal((m, k)) @ gen.standard_normal((k, n))


def random_sparse(
    gen: np.random.Generator, m: int, n: int, density: float = 0.2
) -> SparseMatrix:
    mask = gen.random((m, n)) < density
    vals = gen.standard_normal((m, n))
    dense = np.where(mask & (vals != 0.0), vals, 0.0)
    return SparseMatrix.from_dense(dense)


def lowrank_plus_noise(
    gen: np.random.Generator, m: int, n: int, rank: int, noise: float = 0.05
) -> np.ndarray:
    core = gen.standard_normal((m, rank)) @ gen.standard_normal((rank, n)) / np.sqrt(rank)
    return core + noise * gen.standard_normal((m, n))


@pytest.fixture
def gen() -> np.random.Generator:
    return make_gen()
