"""Reconstruction of initial moments and cumulants from output moments over time.

Raw moments of order p evolve linearly: with unweighted coordinates
``E[y^alpha](t) = W_out^{-1} (C e^{At})^[p] W_in E[x0^alpha]``, so stacking this
map over several times gives a least-squares problem per order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import kstat

from ._linalg import DEFAULT_TOL
from .ensemble import Snapshot, empirical_moments, moments_of_order
from .lift import MultiIndexBasis, enumerate_basis, lift_matrix, num_monomials
from .observability import LinearSystem

log = logging.getLogger(__name__)


@dataclass
class MomentVector:
    order: int
    n: int
    values: np.ndarray  # unweighted raw moments in basis order

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != num_monomials(self.n, self.order):
            raise ValueError(f"expected {num_monomials(self.n, self.order)} moments of order {self.order}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moments must be finite")

    @property
    def basis(self) -> MultiIndexBasis:
        return enumerate_basis(self.n, self.order)

    def as_dict(self) -> Dict[tuple, float]:
        return dict(zip(self.basis.indices, self.values.tolist()))


@dataclass
class CumulantVector:
    order: int
    values: np.ndarray  # one cumulant per state component

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.order == 2 and np.any(self.values <= 0):
            log.warning("nonpositive variance among reconstructed order-2 cumulants")


def output_moment_map(sys: LinearSystem, p: int, t: float) -> np.ndarray:
    """N(m,p) x N(n,p) map from initial to output raw moments of order p."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w_in = enumerate_basis(sys.n, p).weights
    w_out = enumerate_basis(sys.m, p).weights
    return lift_matrix(sys.output_map(t), p) * w_in[None, :] / w_out[:, None]


def default_horizon(sys: LinearSystem) -> float:
    """3 / |Re lambda| for the slowest nonzero decay rate, or 3 with a marginal mode."""
    re = np.abs(np.linalg.eigvals(sys.a).real)
    slow = re.min()
    return 3.0 if slow < 1e-9 else 3.0 / slow


def default_times(sys: LinearSystem, p: int, horizon: Optional[float] = None) -> np.ndarray:
    K = 3 * num_monomials(sys.n, p)
    return np.linspace(0.0, default_horizon(sys) if horizon is None else horizon, K)


@dataclass
class MomentSolution:
    solution: MomentVector
    residual: float
    condition_number: float
    rank: int
    ambiguity_basis: np.ndarray  # columns span the unresolved directions (unweighted)

    @property
    def ambiguous(self) -> bool:
        return self.ambiguity_basis.shape[1] > 0


def _check_times(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    if len(np.unique(t)) != len(t):
        raise ValueError("times must be distinct")
    return t


def _svd_solve(G: np.ndarray, b: np.ndarray, tol: float):
    u, s, vh = np.linalg.svd(G, full_matrices=True)
    if s[0] == 0.0:
        raise ValueError("observation map is identically zero")
    rank = int(np.sum(s >= tol * s[0]))
    x = vh[:rank].T @ ((u[:, :rank].T @ b) / s[:rank])
    null = vh[rank:].T
    resid = float(np.linalg.norm(G @ x - b))
    cond = float(s[0] / s[rank - 1])
    return x, resid, cond, rank, null


def stacked_moment_map(sys: LinearSystem, p: int, times: Sequence[float]) -> np.ndarray:
    return np.vstack([output_moment_map(sys, p, t) for t in times])


def reconstruct_moments(sys: LinearSystem, p: int, times: Sequence[float], outputs,
                        tol: float = DEFAULT_TOL) -> MomentSolution:
    """Least-squares initial moments of order p from output moments at ``times``.

    ``outputs`` holds one output moment vector (MomentVector or array of length
    N(m, p)) per time.  A rank-deficient stack yields the minimum-norm solution
    together with a basis of the directions the data cannot resolve.
    """
    t = _check_times(times)
    N_in, N_out = num_monomials(sys.n, p), num_monomials(sys.m, p)
    if len(t) * N_out < N_in:
        raise ValueError(f"need at least {math.ceil(N_in / N_out)} times for order {p}")
    if len(outputs) != len(t):
        raise ValueError("one output moment vector per time is required")
    b = np.concatenate([np.asarray(o.values if isinstance(o, MomentVector) else o, dtype=float).reshape(-1)
                        for o in outputs])
    G = stacked_moment_map(sys, p, t)
    x, resid, cond, rank, null = _svd_solve(G, b, tol)
    if null.shape[1]:
        log.warning("order %d: stacked moment map has rank %d < %d; returning minimum-norm solution",
                    p, rank, N_in)
    return MomentSolution(MomentVector(p, sys.n, x), resid, cond, rank, null)


# ---------------------------------------------------------------------------
# scalar cumulants


def moments_to_cumulants(moments: Sequence[float]) -> np.ndarray:
    """Raw moments m_1..m_p to cumulants k_1..k_p."""
    m = np.r_[1.0, np.asarray(moments, dtype=float)]
    p = len(m) - 1
    k = np.zeros(p + 1)
    for r in range(1, p + 1):
        k[r] = m[r] - sum(math.comb(r - 1, j - 1) * k[j] * m[r - j] for j in range(1, r))
    return k[1:]


def cumulants_to_moments(cumulants: Sequence[float]) -> np.ndarray:
    k = np.r_[0.0, np.asarray(cumulants, dtype=float)]
    p = len(k) - 1
    m = np.zeros(p + 1)
    m[0] = 1.0
    for r in range(1, p + 1):
        m[r] = sum(math.comb(r - 1, j - 1) * k[j] * m[r - j] for j in range(1, r + 1))
    return m[1:]


def empirical_scalar_cumulants(samples, p: int = 4) -> np.ndarray:
    """Unbiased k-statistics k_1..k_p (p <= 4)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    n = len(x)
    if not 1 <= p <= 4:
        raise ValueError("k-statistics are provided for orders 1..4")
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} samples")
    return np.array([kstat(x, r) for r in range(1, p + 1)])


def cumulant_design_matrix(sys: LinearSystem, p: int, times: Sequence[float]) -> np.ndarray:
    """Rows (C e^{At})^{.p}: kappa_p(y(t)) = row . (kappa_p(X0_1), ..., kappa_p(X0_n))."""
    if sys.m != 1:
        raise ValueError("cumulant design is implemented for single-output systems")
    t = _check_times(times)
    return np.vstack([sys.output_map(tk)[0] ** p for tk in t])


@dataclass
class CumulantSolution:
    solution: CumulantVector
    residual: float
    rank: int
    condition_number: float
    null_directions: np.ndarray  # columns: coefficients of sum_i a_i x_i^p = 0

    @property
    def ambiguous(self) -> bool:
        return self.null_directions.shape[1] > 0


def reconstruct_cumulants_independent(sys: LinearSystem, p: int, times: Sequence[float],
                                      output_cumulants: Sequence[float],
                                      tol: float = DEFAULT_TOL) -> CumulantSolution:
    """Per-component cumulants of order p, assuming independent initial components."""
    G = cumulant_design_matrix(sys, p, times)
    b = np.asarray(output_cumulants, dtype=float).reshape(-1)
    if len(b) != G.shape[0]:
        raise ValueError("one output cumulant per time is required")
    if G.shape[0] < sys.n:
        raise ValueError(f"need at least {sys.n} times")
    x, resid, cond, rank, null = _svd_solve(G, b, tol)
    if null.shape[1]:
        for k in range(null.shape[1]):
            v = null[:, k]
            null[:, k] = v * np.sign(v[np.flatnonzero(np.abs(v) > 1e-12)[0]])
        log.warning("order %d cumulants: rank %d < %d", p, rank, sys.n)
    return CumulantSolution(CumulantVector(p, x), resid, rank, cond, null)


# ---------------------------------------------------------------------------
# end-to-end from snapshots


@dataclass
class OrderResult:
    order: int
    mode: str
    values: np.ndarray
    residual: float
    condition_number: float
    rank: int
    ambiguity_basis: np.ndarray
    indices: Optional[List[tuple]] = None

    @property
    def ambiguous(self) -> bool:
        return self.ambiguity_basis.shape[1] > 0

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "residual": self.residual,
            "condition_number": self.condition_number,
            "rank": self.rank,
            "ambiguous": self.ambiguous,
            "ambiguity_basis": self.ambiguity_basis.T.tolist(),
        }
        if self.indices is not None:
            d["moments"] = {",".join(map(str, a)): v for a, v in zip(self.indices, self.values.tolist())}
        else:
            d["cumulants"] = self.values.tolist()
        return d


@dataclass
class Ladder:
    orders: List[OrderResult]
    psd_ok: Optional[bool] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "orders": {str(o.order): o.to_dict() for o in self.orders},
            "psd_ok": self.psd_ok,
            "notes": self.notes,
        }


def moment_matrix_psd(mean, second: MomentVector, tol: float = 1e-9) -> bool:
    """Is [[1, m1^T], [m1, E xx^T]] positive semidefinite?"""
    n = second.n
    mean = np.asarray(mean, dtype=float)
    S = np.empty((n, n))
    for alpha, v in second.as_dict().items():
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        S[idx[0], idx[1]] = S[idx[1], idx[0]] = v
    M = np.block([[np.ones((1, 1)), mean[None]], [mean[:, None], S]])
    return bool(np.linalg.eigvalsh(M).min() >= -tol * max(1.0, np.abs(M).max()))


def full_pipeline(sys: LinearSystem, snaps: Sequence[Snapshot], p_max: int = 3,
                  mode: str = "moments", tol: float = DEFAULT_TOL) -> Ladder:
    """Reconstruct orders 1..p_max from snapshot data."""
    if mode not in ("moments", "cumulants"):
        raise ValueError("mode must be 'moments' or 'cumulants'")
    times = [s.time for s in snaps]
    results: List[OrderResult] = []
    notes: List[str] = []
    if mode == "moments":
        emp = [empirical_moments(s.samples, p_max) for s in snaps]
        for p in range(1, p_max + 1):
            outs = [moments_of_order(e, sys.m, p) for e in emp]
            sol = reconstruct_moments(sys, p, times, outs, tol)
            results.append(OrderResult(p, mode, sol.solution.values, sol.residual, sol.condition_number,
                                       sol.rank, sol.ambiguity_basis, list(enumerate_basis(sys.n, p).indices)))
        psd = None
        if p_max >= 2:
            psd = moment_matrix_psd(results[0].values, MomentVector(2, sys.n, results[1].values))
            if not psd:
                notes.append("reconstructed order-2 moment matrix is not positive semidefinite")
        return Ladder(results, psd, notes)
    if p_max > 4:
        raise ValueError("cumulants from samples are supported up to order 4")
    notes.append("assumes independent initial state components")
    kstats = np.array([empirical_scalar_cumulants(s.samples[:, 0], p_max) for s in snaps])
    for p in range(1, p_max + 1):
        sol = reconstruct_cumulants_independent(sys, p, times, kstats[:, p - 1], tol)
        results.append(OrderResult(p, mode, sol.solution.values, sol.residual, sol.condition_number,
                                   sol.rank, sol.null_directions))
    return Ladder(results, None, notes)
