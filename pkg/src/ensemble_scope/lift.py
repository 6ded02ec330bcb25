"""Monomial (tensor) lifts of linear maps and linear vector fields.

For ``x`` in R^n the weighted p-form vector ``x^[p]`` collects the degree-p
monomials ``w_p(alpha) * x**alpha`` ordered lexicographically decreasing in
``alpha``, with ``w_p(alpha) = sqrt(p! / (alpha_1! ... alpha_n!))``.  With
these weights lifting commutes with products and with transposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]


def num_monomials(n: int, p: int) -> int:
    """N(n, p) = binom(n + p - 1, p)."""
    return math.comb(n + p - 1, p)


def multinomial(alpha: MultiIndex) -> int:
    out = math.factorial(sum(alpha))
    for a in alpha:
        out //= math.factorial(a)
    return out


def _compositions(n: int, p: int):
    # lexicographically decreasing
    if n == 1:
        yield (p,)
        return
    for first in range(p, -1, -1):
        for rest in _compositions(n - 1, p - first):
            yield (first,) + rest


@dataclass(frozen=True)
class MultiIndexBasis:
    n: int
    p: int
    indices: Tuple[MultiIndex, ...]
    weights: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def position(self) -> Dict[MultiIndex, int]:
        return _positions(self.n, self.p)

    def is_cross_term(self) -> np.ndarray:
        """Boolean mask, True where the multi-index has >= 2 nonzero entries."""
        return np.array([sum(1 for a in alpha if a) >= 2 for alpha in self.indices])


@lru_cache(maxsize=None)
def _positions(n: int, p: int) -> Dict[MultiIndex, int]:
    return {alpha: k for k, alpha in enumerate(enumerate_basis(n, p).indices)}


@lru_cache(maxsize=None)
def enumerate_basis(n: int, p: int) -> MultiIndexBasis:
    """Degree-p multi-indices over n variables and their weights."""
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    indices = tuple(_compositions(n, p))
    weights = np.sqrt(np.array([multinomial(a) for a in indices], dtype=float))
    weights.setflags(write=False)
    return MultiIndexBasis(n=n, p=p, indices=indices, weights=weights)


def weight_matrix(basis: MultiIndexBasis) -> np.ndarray:
    return np.diag(basis.weights)


def monomials(x: np.ndarray, basis: MultiIndexBasis) -> np.ndarray:
    """Unweighted monomials x**alpha; ``x`` may be (n,) or (count, n)."""
    x = np.asarray(x, dtype=float)
    powers = np.array(basis.indices)
    return np.prod(x[..., None, :] ** powers, axis=-1)


def lift_vector(x, basis: MultiIndexBasis) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.n:
        raise ValueError(f"vector of length {x.shape[-1]} does not match n={basis.n}")
    return basis.weights * monomials(x, basis)


def _poly_mul_linear(poly: Dict[MultiIndex, float], row: np.ndarray) -> Dict[MultiIndex, float]:
    out: Dict[MultiIndex, float] = {}
    for alpha, coef in poly.items():
        for j, r in enumerate(row):
            if r == 0.0:
                continue
            beta = alpha[:j] + (alpha[j] + 1,) + alpha[j + 1:]
            out[beta] = out.get(beta, 0.0) + coef * r
    return out


def lift_matrix(M, p: int) -> np.ndarray:
    """The matrix ``M^[p]`` with ``(M x)^[p] = M^[p] x^[p]``.

    Row beta is obtained by expanding ``prod_i (M_i . x)^{beta_i}`` over the
    degree-p monomials in x and rescaling by the weights on both sides.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, n = M.shape
    row_basis = enumerate_basis(m, p)
    col_basis = enumerate_basis(n, p)
    col_pos = col_basis.position
    out = np.zeros((len(row_basis), len(col_basis)))
    zero = (0,) * n
    for r, beta in enumerate(row_basis.indices):
        poly: Dict[MultiIndex, float] = {zero: 1.0}
        for i, b in enumerate(beta):
            for _ in range(b):
                poly = _poly_mul_linear(poly, M[i])
        for alpha, coef in poly.items():
            out[r, col_pos[alpha]] = coef
    out *= row_basis.weights[:, None]
    out /= col_basis.weights[None, :]
    return out


def lift_generator(A, p: int, weighted: bool = True) -> np.ndarray:
    """The matrix ``A_[p]`` with ``d/dt x^[p] = A_[p] x^[p]`` along ``x' = A x``.

    Built from the product rule ``d/dt x^alpha = sum_i alpha_i x^(alpha - e_i) (A x)_i``.
    ``weighted=False`` returns the generator acting on unweighted monomials,
    which is also the generator of the degree-p raw moments.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    basis = enumerate_basis(n, p)
    pos = basis.position
    U = np.zeros((len(basis), len(basis)))
    for r, alpha in enumerate(basis.indices):
        for i in range(n):
            if alpha[i] == 0:
                continue
            lowered = list(alpha)
            lowered[i] -= 1
            for j in range(n):
                if A[i, j] == 0.0:
                    continue
                gamma = list(lowered)
                gamma[j] += 1
                U[r, pos[tuple(gamma)]] += alpha[i] * A[i, j]
    if not weighted:
        return U
    w = basis.weights
    return w[:, None] * U / w[None, :]


@dataclass(frozen=True)
class TensorSystem:
    n: int
    order: int
    a_lift: np.ndarray
    c_lift: np.ndarray
    weight_diag: np.ndarray

    @property
    def basis(self) -> MultiIndexBasis:
        return enumerate_basis(self.n, self.order)


def tensor_system(A, C, p: int) -> TensorSystem:
    """Lifted pair (A_[p], C^[p]) in weighted coordinates, plus the weights."""
    A = np.asarray(A, dtype=float)
    basis = enumerate_basis(A.shape[0], p)
    return TensorSystem(
        n=A.shape[0],
        order=p,
        a_lift=lift_generator(A, p),
        c_lift=lift_matrix(C, p),
        weight_diag=np.array(basis.weights),
    )
