"""Gaussian-mixture ensembles pushed through y(t) = C e^{At} x0."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from scipy.stats import multivariate_normal

from ._linalg import max_threads, numerical_rank
from .lift import MultiIndex, enumerate_basis, monomials
from .observability import LinearSystem

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence.spawn"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    # pushforwards through rank-deficient maps carry singular covariances
    allow_singular: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        k, n = mu.shape
        if w.shape != (k,) or cov.shape != (k, n, n):
            raise ValueError(f"inconsistent shapes: weights {w.shape}, means {mu.shape}, covariances {cov.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        for S in cov:
            if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
                raise ValueError("covariances must be symmetric")
            if not self.allow_singular:
                try:
                    np.linalg.cholesky(S)
                except np.linalg.LinAlgError:
                    raise ValueError("covariances must be positive definite") from None
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        second = np.einsum("k,kij->ij", self.weights, self.covariances + np.einsum("ki,kj->kij", self.means, self.means))
        return second - np.outer(mu, mu)

    def shift(self, v) -> "GaussianMixture":
        return GaussianMixture(self.weights, self.means + np.asarray(v, dtype=float), self.covariances, self.allow_singular)

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for w, mu, S in zip(self.weights, self.means, self.covariances):
            out += w * multivariate_normal(mu, S, allow_singular=self.allow_singular).pdf(x)
        return out

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        return cls(np.array(d["weights"], dtype=float), np.array(d["means"], dtype=float),
                   np.array(d["covariances"], dtype=float))


def gaussian(mean, cov) -> GaussianMixture:
    return GaussianMixture(np.ones(1), np.asarray(mean, dtype=float)[None], np.asarray(cov, dtype=float)[None])


def bimodal_example() -> GaussianMixture:
    """0.7 N((1,2), 0.3^2 I) + 0.3 N((2,1), 0.2^2 I)."""
    return GaussianMixture(
        weights=np.array([0.7, 0.3]),
        means=np.array([[1.0, 2.0], [2.0, 1.0]]),
        covariances=np.array([np.diag([0.09, 0.09]), np.diag([0.04, 0.04])]),
    )


def pushforward(mix: GaussianMixture, M) -> GaussianMixture:
    """Distribution of M X for X ~ mix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != mix.dim:
        raise ValueError(f"map with {M.shape[1]} columns cannot act on dimension {mix.dim}")
    singular = numerical_rank(M) < M.shape[0]
    if singular:
        warnings.warn("map is not full row rank; pushed mixture has no density", RuntimeWarning, stacklevel=2)
    cov = np.einsum("ij,kjl,ml->kim", M, mix.covariances, M)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return GaussianMixture(mix.weights, mix.means @ M.T, cov, allow_singular=singular or mix.allow_singular)


def output_variance(sys: LinearSystem, cov, t: float) -> np.ndarray:
    """(C e^{At}) Sigma (C e^{At})^T."""
    if t < 0:
        raise ValueError("t must be >= 0")
    M = sys.output_map(t)
    return M @ np.asarray(cov, dtype=float) @ M.T


def _sample_with_rng(mix: GaussianMixture, count: int, rng: np.random.Generator) -> np.ndarray:
    labels = rng.choice(mix.n_components, size=count, p=mix.weights)
    z = rng.standard_normal((count, mix.dim))
    chol = np.linalg.cholesky(mix.covariances)
    return mix.means[labels] + np.einsum("kij,kj->ki", chol[labels], z)


def sample(mix: GaussianMixture, count: int, seed: int) -> np.ndarray:
    """``count`` draws as a (count, n) array; identical for identical seeds."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if mix.allow_singular:
        raise ValueError("cannot sample a mixture with singular covariances")
    return _sample_with_rng(mix, count, np.random.default_rng(seed))


@dataclass(frozen=True)
class Snapshot:
    time: float
    samples: np.ndarray  # (count, m)


def snapshots(sys: LinearSystem, mix: GaussianMixture, times: Sequence[float],
              count: int, seed: int) -> List[Snapshot]:
    """Fresh individuals at every time point, each with its own spawned seed."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or times != sorted(times):
        raise ValueError("times must be nonnegative and sorted")
    children = np.random.SeedSequence(seed).spawn(len(times))

    def one(k: int) -> Snapshot:
        x0 = _sample_with_rng(mix, count, np.random.default_rng(children[k]))
        return Snapshot(times[k], x0 @ sys.output_map(times[k]).T)

    with ThreadPoolExecutor(max_workers=max(1, min(max_threads(), len(times)))) as pool:
        return list(pool.map(one, range(len(times))))


# ---------------------------------------------------------------------------
# moments


def multi_indices_upto(n: int, p_max: int) -> List[MultiIndex]:
    out = [(0,) * n]
    for p in range(1, p_max + 1):
        out.extend(enumerate_basis(n, p).indices)
    return out


def _gaussian_moments(mu: np.ndarray, S: np.ndarray, p_max: int) -> Dict[MultiIndex, float]:
    # m_{a+e_i} = mu_i m_a + sum_j S_ij a_j m_{a-e_j}
    n = len(mu)
    m: Dict[MultiIndex, float] = {(0,) * n: 1.0}
    for alpha in multi_indices_upto(n, p_max)[1:]:
        i = next(k for k, a in enumerate(alpha) if a > 0)
        base = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
        val = mu[i] * m[base]
        for j in range(n):
            if base[j] > 0:
                lower = base[:j] + (base[j] - 1,) + base[j + 1:]
                val += S[i, j] * base[j] * m[lower]
        m[alpha] = val
    return m


def analytic_moments(mix: GaussianMixture, p_max: int) -> Dict[MultiIndex, float]:
    """Raw moments E[x^alpha] for all |alpha| <= p_max (including the constant 1)."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    out: Dict[MultiIndex, float] = {}
    for w, mu, S in zip(mix.weights, mix.means, mix.covariances):
        for alpha, v in _gaussian_moments(mu, S, p_max).items():
            out[alpha] = out.get(alpha, 0.0) + w * v
    return out


def empirical_moments(samples, p_max: int) -> Dict[MultiIndex, float]:
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("no samples")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    n = x.shape[1]
    out: Dict[MultiIndex, float] = {(0,) * n: 1.0}
    for p in range(1, p_max + 1):
        basis = enumerate_basis(n, p)
        vals = monomials(x, basis).mean(axis=0)
        out.update(zip(basis.indices, vals.tolist()))
    return out


def moments_of_order(moments: Dict[MultiIndex, float], n: int, p: int) -> np.ndarray:
    """Order-p raw moments as a vector in basis order."""
    return np.array([moments[a] for a in enumerate_basis(n, p).indices])


# ---------------------------------------------------------------------------
# indistinguishability


@dataclass
class Indistinguishability:
    indistinguishable: bool
    all_orders: bool
    max_deviation: float
    deviations: Dict[tuple, float]


def indistinguishability_check(sys: LinearSystem, mix_a: GaussianMixture, mix_b: GaussianMixture,
                               times: Sequence[float], p_max: int = 4,
                               tol: float = 1e-10) -> Indistinguishability:
    """Compare pushed-forward output moments of two mixtures at the given times.

    For single Gaussians equal output mean and covariance settle every order.
    """
    if mix_a.dim != mix_b.dim:
        raise ValueError("mixtures must share a dimension")
    deviations: Dict[tuple, float] = {}
    ok = True
    gaussian_pair = mix_a.n_components == 1 and mix_b.n_components == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for t in times:
            M = sys.output_map(t)
            ya, yb = pushforward(mix_a, M), pushforward(mix_b, M)
            ma, mb = analytic_moments(ya, p_max), analytic_moments(yb, p_max)
            for alpha in ma:
                dev = abs(ma[alpha] - mb[alpha])
                deviations[(float(t), alpha)] = dev
                if dev > tol * max(1.0, abs(ma[alpha])):
                    ok = False
            if gaussian_pair:
                dm = np.max(np.abs(ya.mean() - yb.mean()))
                dc = np.max(np.abs(ya.covariance() - yb.covariance()))
                if max(dm, dc) > tol * max(1.0, np.abs(ya.covariance()).max()):
                    ok = False
    return Indistinguishability(
        indistinguishable=ok,
        all_orders=ok and gaussian_pair,
        max_deviation=max(deviations.values(), default=0.0),
        deviations=deviations,
    )


# ---------------------------------------------------------------------------
# snapshot CSV: header t,y1,...,ym


def write_snapshot_csv(path, snaps: Sequence[Snapshot]) -> None:
    m = snaps[0].samples.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["t"] + [f"y{i + 1}" for i in range(m)]) + "\n")
        for s in snaps:
            block = np.column_stack([np.full(len(s.samples), s.time), s.samples])
            np.savetxt(fh, block, delimiter=",", fmt="%.17g")


def read_snapshot_csv(path) -> List[Snapshot]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if not header or header[0].strip() != "t" or len(header) < 2:
        raise ValueError(f"{path}: expected header t,y1,...,ym")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for t in np.unique(data[:, 0]):
        out.append(Snapshot(float(t), data[data[:, 0] == t, 1:]))
    return out


def read_snapshot_dir(path) -> List[Snapshot]:
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise ValueError(f"no snapshot CSV files in {path}")
    snaps: List[Snapshot] = []
    for f in files:
        snaps.extend(read_snapshot_csv(f))
    return sorted(snaps, key=lambda s: s.time)
