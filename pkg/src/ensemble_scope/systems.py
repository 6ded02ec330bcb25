"""Worked example systems and the initial distributions used with them."""

from __future__ import annotations

import numpy as np

from .ensemble import GaussianMixture, bimodal_example, gaussian
from .observability import LinearSystem

__all__ = [
    "drift_pair", "diagonal_three_mode", "diagonal_covariances",
    "rotation_system", "rotation_covariances", "bimodal_example",
]


def drift_pair(output: str = "observable") -> LinearSystem:
    """A = [[-1, 1], [0, 0]] with C = (1, 0) ("observable") or C = (0, 1) ("unobservable")."""
    a = np.array([[-1.0, 1.0], [0.0, 0.0]])
    if output == "observable":
        c = np.array([[1.0, 0.0]])
    elif output == "unobservable":
        c = np.array([[0.0, 1.0]])
    else:
        raise ValueError("output must be 'observable' or 'unobservable'")
    return LinearSystem(a, c)


def diagonal_three_mode() -> LinearSystem:
    """A = diag(0, -1, -2), C = (1, 1, 1): observable, but blocked at order 2."""
    return LinearSystem(np.diag([0.0, -1.0, -2.0]), np.ones((1, 3)))


def diagonal_covariances(sigma: float = 1.0):
    """Two covariances with identical output variance (1 + e^{-2t} + e^{-4t}) sigma^2."""
    s2 = sigma ** 2
    first = s2 * np.eye(3)
    second = s2 * np.array([[1.0, 0.0, -0.5], [0.0, 2.0, 0.0], [-0.5, 0.0, 1.0]])
    return first, second


def rotation_system() -> LinearSystem:
    """Planar rotation plus a constant mode, C = (1, 1, sqrt 2)."""
    a = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return LinearSystem(a, np.array([[1.0, 1.0, np.sqrt(2.0)]]))


def rotation_covariances(sigma: float = 1.0):
    """Diagonal covariances with the same flat output variance 4 sigma^2."""
    s2 = sigma ** 2
    return s2 * np.eye(3), s2 * np.diag([1.5, 1.5, 0.5])


def gaussian_pair(first, second, mean=None):
    mean = np.zeros(len(first)) if mean is None else np.asarray(mean, dtype=float)
    return gaussian(mean, first), gaussian(mean, second)


def shifted(mix: GaussianMixture, direction, amount: float) -> GaussianMixture:
    return mix.shift(amount * np.asarray(direction, dtype=float))
