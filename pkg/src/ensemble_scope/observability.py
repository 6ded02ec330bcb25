"""Classical and lifted observability of linear systems x' = A x, y = C x."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._linalg import DEFAULT_TOL, expm, max_threads, null_space, numerical_rank, orthogonal_complement, rref
from .lift import MultiIndex, MultiIndexBasis, enumerate_basis, tensor_system

ANGLE_TOL = 1e-7


@dataclass(frozen=True)
class LinearSystem:
    a: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"A must be square and nonempty, got shape {a.shape}")
        if c.ndim != 2 or c.shape[1] != a.shape[0] or c.shape[0] < 1:
            raise ValueError(f"C must be m x {a.shape[0]}, got shape {c.shape}")
        if c.shape[0] > a.shape[0]:
            raise ValueError("more outputs than states")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def full_state(self) -> bool:
        """C invertible: a single output snapshot already determines the distribution."""
        return self.m == self.n and numerical_rank(self.c) == self.n

    def output_map(self, t: float) -> np.ndarray:
        """C e^{At}."""
        return self.c @ expm(self.a * t)

    def lifted(self, p: int) -> "LinearSystem":
        ts = tensor_system(self.a, self.c, p)
        return LinearSystem(ts.a_lift, ts.c_lift)


def observability_matrix(sys: LinearSystem) -> np.ndarray:
    blocks = [sys.c]
    for _ in range(sys.n - 1):
        blocks.append(blocks[-1] @ sys.a)
    return np.vstack(blocks)


def kalman_rank(sys: LinearSystem, tol: float = DEFAULT_TOL) -> int:
    return numerical_rank(observability_matrix(sys), tol)


def observable_subspace(sys: LinearSystem, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of span{C^T, A^T C^T, ...} (the row space of the Kalman matrix).

    Built block by block with re-orthogonalisation, deciding each block's rank
    with an SVD, so that exponentially graded powers of A never enter one matrix.
    """
    n = sys.n
    a_norm = np.linalg.norm(sys.a, 2)
    block = sys.c.T
    ref = np.linalg.norm(block, 2)
    Q = np.zeros((n, 0))
    if ref == 0.0:
        return Q
    while Q.shape[1] < n:
        for _ in range(2):
            block = block - Q @ (Q.T @ block)
        if block.size == 0:
            break
        u, s, _ = np.linalg.svd(block, full_matrices=False)
        keep = s > tol * ref
        if not np.any(keep):
            break
        new = u[:, keep]
        Q = np.hstack([Q, new])
        if a_norm == 0.0:
            break
        block = sys.a.T @ new
        ref = a_norm
    return Q[:, :n]


def unobservable_subspace(sys: LinearSystem, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (n x k) of the intersection over t of ker C e^{At}."""
    return orthogonal_complement(observable_subspace(sys, tol), sys.n)


def is_observable(sys: LinearSystem, tol: float = DEFAULT_TOL) -> bool:
    return unobservable_subspace(sys, tol).shape[1] == 0


@dataclass(frozen=True)
class HautusEntry:
    eigenvalue: complex
    multiplicity: int
    rank_deficiency: int


def _cluster_eigenvalues(eigs: np.ndarray, scale: float, rel: float = 1e-5) -> List[List[complex]]:
    radius = rel * max(scale, 1.0)
    clusters: List[List[complex]] = []
    for lam in sorted(eigs, key=lambda z: (z.real, z.imag)):
        for cl in clusters:
            if min(abs(lam - mu) for mu in cl) <= radius:
                cl.append(lam)
                break
        else:
            clusters.append([lam])
    return clusters


def hautus_test(sys: LinearSystem, tol: float = DEFAULT_TOL) -> List[HautusEntry]:
    """Rank deficiency of [A - lam I; C] at every distinct eigenvalue of A.

    Numerically repeated eigenvalues are merged and tested at their cluster
    mean, which is accurate even for defective eigenvalues.
    """
    n = sys.n
    eigs = np.linalg.eigvals(sys.a)
    scale = max(np.linalg.norm(np.vstack([sys.a, sys.c]), 2), 1e-300)
    out = []
    for cl in _cluster_eigenvalues(eigs, np.linalg.norm(sys.a, 2)):
        lam = complex(np.mean(cl))
        if abs(lam.imag) <= 1e-12 * max(1.0, abs(lam)):
            lam = complex(lam.real, 0.0)
        M = np.vstack([sys.a - lam * np.eye(n), sys.c]).astype(complex)
        s = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(s >= tol * scale))
        out.append(HautusEntry(eigenvalue=lam, multiplicity=len(cl), rank_deficiency=n - rank))
    return out


def hautus_observable(sys: LinearSystem, tol: float = DEFAULT_TOL) -> bool:
    return all(e.rank_deficiency == 0 for e in hautus_test(sys, tol))


# ---------------------------------------------------------------------------
# lifted systems and varieties


Polynomial = Dict[MultiIndex, float]


def variety_from_kernel(a, basis: MultiIndexBasis) -> Polynomial:
    """The polynomial a^T x^[p] written in unweighted monomials.

    Normalised so the largest coefficient is +1; among ties the last one in
    basis order is made positive.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (len(basis),):
        raise ValueError(f"coefficient vector must have length {len(basis)}")
    coefs = a * basis.weights
    big = np.max(np.abs(coefs))
    if big == 0.0:
        raise ValueError("zero coefficient vector defines no variety")
    coefs = coefs / big
    lead = np.flatnonzero(np.abs(coefs) >= 1.0 - 1e-9)[-1]
    coefs *= np.sign(coefs[lead])
    return {alpha: float(c) for alpha, c in zip(basis.indices, coefs) if abs(c) > 1e-12}


def _fmt_coef(c: float) -> str:
    for d in (1, 2, 3, 4, 6):
        if abs(c * d - round(c * d)) < 1e-9:
            num = round(c * d)
            return str(num) if d == 1 else f"{num}/{d}"
    return f"{c:.6g}"


def format_polynomial(poly: Polynomial) -> str:
    """Human-readable form, positive terms first, e.g. ``x2^2 - x1*x3``."""
    def mono(alpha):
        parts = []
        for i, a in enumerate(alpha):
            if a == 1:
                parts.append(f"x{i + 1}")
            elif a > 1:
                parts.append(f"x{i + 1}^{a}")
        return "*".join(parts) or "1"

    terms = sorted(poly.items(), key=lambda kv: kv[1] < 0)
    out = ""
    for k, (alpha, c) in enumerate(terms):
        mag = abs(c)
        body = mono(alpha) if abs(mag - 1.0) < 1e-9 else f"{_fmt_coef(mag)}*{mono(alpha)}"
        if k == 0:
            out = ("-" if c < 0 else "") + body
        else:
            out += (" - " if c < 0 else " + ") + body
    return out


def blocking_varieties(unobs_basis: np.ndarray, basis: MultiIndexBasis) -> List[Polynomial]:
    """Sparse generators of the span of unobservable coefficient vectors."""
    if unobs_basis.shape[1] == 0:
        return []
    # work in unweighted coefficients so that reduction gives sparse polynomials
    coefs = (unobs_basis * basis.weights[:, None]).T
    rows = rref(coefs, tol=1e-9)
    return [variety_from_kernel(r / basis.weights, basis) for r in rows]


@dataclass
class TensorResult:
    order: int
    observable: bool
    unobs_basis: np.ndarray
    variety_polynomials: List[Polynomial] = field(default_factory=list)

    @property
    def varieties_text(self) -> List[str]:
        return [format_polynomial(p) + " = 0" for p in self.variety_polynomials]


def tensor_observability(sys: LinearSystem, p: int, tol: float = DEFAULT_TOL) -> TensorResult:
    lifted = sys.lifted(p)
    U = unobservable_subspace(lifted, tol)
    basis = enumerate_basis(sys.n, p)
    return TensorResult(
        order=p,
        observable=U.shape[1] == 0,
        unobs_basis=U,
        variety_polynomials=blocking_varieties(U, basis),
    )


@dataclass
class RichnessReport:
    p_max: int
    orders: List[TensorResult]

    @property
    def rich_up_to_pmax(self) -> bool:
        return all(r.observable for r in self.orders)

    @property
    def first_failure(self) -> Optional[int]:
        for r in self.orders:
            if not r.observable:
                return r.order
        return None

    @property
    def note(self) -> str:
        return (
            f"checked tensor orders 1..{self.p_max} only; richness quantifies over "
            "all orders and is not certified beyond p_max"
        )


def richness_check(sys: LinearSystem, p_max: int = 4, tol: float = DEFAULT_TOL) -> RichnessReport:
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    return RichnessReport(p_max=p_max, orders=[tensor_observability(sys, p, tol) for p in range(1, p_max + 1)])


# ---------------------------------------------------------------------------
# integer relations among eigenvalues


@dataclass(frozen=True)
class RationalIndependence:
    independent: bool
    witness: Optional[tuple]
    z_bound: int

    @property
    def verdict(self) -> str:
        if self.independent:
            return f"independent within bound {self.z_bound}"
        return f"dependent, witness z={self.witness}"


def _search_leading(lead: int, lam: np.ndarray, bound: int, tol: float) -> Optional[tuple]:
    # all z with z[0] == lead, |z_i| <= bound, sum(z) == 0, first nonzero positive
    n = len(lam)
    lam_norm = np.linalg.norm(lam)
    rng = np.arange(-bound, bound + 1)
    if n == 2:
        mids = np.zeros((1, 0), dtype=np.int64)
    else:
        mids = np.array(list(itertools.product(rng, repeat=n - 2)), dtype=np.int64)
    last = -lead - mids.sum(axis=1)
    Z = np.column_stack([np.full(len(mids), lead), mids, last])
    ok = np.abs(last) <= bound
    ok &= np.any(Z != 0, axis=1)
    if lead == 0:
        # sign convention: first nonzero entry positive
        first_nz = np.argmax(Z != 0, axis=1)
        ok &= Z[np.arange(len(Z)), first_nz] > 0
    Z = Z[ok]
    if len(Z) == 0:
        return None
    resid = np.abs(Z @ lam)
    hit = resid < tol * lam_norm * np.linalg.norm(Z, axis=1)
    if not np.any(hit):
        return None
    Z = Z[hit]
    # smallest sup-norm first, then lexicographic
    order = sorted(range(len(Z)), key=lambda k: (np.max(np.abs(Z[k])), tuple(Z[k])))
    return tuple(int(v) for v in Z[order[0]])


def rational_independence_test(eigenvalues: Sequence[float], z_bound: int = 5,
                               tol: float = DEFAULT_TOL) -> RationalIndependence:
    """Search for integer z != 0, sum z = 0, |z_i| <= z_bound with z . lambda = 0.

    No witness means the eigenvalue differences are linearly independent over
    Q as far as integer coefficients up to ``z_bound`` can tell.
    """
    lam = np.asarray(eigenvalues)
    if np.iscomplexobj(lam):
        if np.any(np.abs(lam.imag) > tol * max(1.0, np.max(np.abs(lam)))):
            raise ValueError("eigenvalues must be real")
        lam = lam.real
    lam = lam.astype(float)
    if z_bound < 1:
        raise ValueError("z_bound must be >= 1")
    n = len(lam)
    gaps = np.abs(lam[:, None] - lam[None, :])[~np.eye(n, dtype=bool)]
    if n > 1 and np.min(gaps) <= tol:
        raise ValueError("eigenvalues must be distinct")
    if n < 2 or np.linalg.norm(lam) == 0.0:
        return RationalIndependence(independent=True, witness=None, z_bound=z_bound)
    leads = list(range(0, z_bound + 1))
    with ThreadPoolExecutor(max_workers=min(max_threads(), len(leads))) as pool:
        found = list(pool.map(lambda l: _search_leading(l, lam, z_bound, tol), leads))
    hits = [z for z in found if z is not None]
    if not hits:
        return RationalIndependence(independent=True, witness=None, z_bound=z_bound)
    best = min(hits, key=lambda z: (max(abs(v) for v in z), z))
    return RationalIndependence(independent=False, witness=best, z_bound=z_bound)


# ---------------------------------------------------------------------------
# independence-constrained test


@dataclass(frozen=True)
class ConstrainedResult:
    order: int
    passes: bool
    witness: Optional[np.ndarray]
    smallest_angle: float


def constrained_hautus_independence(sys: LinearSystem, p: int,
                                    tol: float = DEFAULT_TOL,
                                    angle_tol: float = ANGLE_TOL) -> ConstrainedResult:
    """Does the lifted unobservable subspace meet the no-cross-term coordinates?

    The smallest principal angle between the unobservable subspace U and the
    coordinate subspace of pure powers x_i^p has sine equal to the smallest
    singular value of U restricted to the cross-term rows.  The witness (in
    weighted coordinates) is the corresponding unit vector of U.
    """
    U = tensor_observability(sys, p, tol).unobs_basis
    if U.shape[1] == 0:
        return ConstrainedResult(order=p, passes=True, witness=None, smallest_angle=float(np.pi / 2))
    cross = enumerate_basis(sys.n, p).is_cross_term()
    Uc = U[cross]
    k = U.shape[1]
    if Uc.shape[0] < k:
        sin_min, y = 0.0, null_space(Uc, tol=1e-12)[:, 0] if Uc.size else np.eye(k)[:, 0]
    else:
        _, s, vh = np.linalg.svd(Uc)
        sin_min, y = float(s[-1]), vh[-1]
    angle = float(np.arcsin(min(1.0, sin_min)))
    if angle >= angle_tol:
        return ConstrainedResult(order=p, passes=True, witness=None, smallest_angle=angle)
    w = U @ y
    w[cross] = 0.0
    w /= np.linalg.norm(w)
    w *= np.sign(w[np.flatnonzero(np.abs(w) > 1e-12)[0]])
    w += 0.0  # no negative zeros
    return ConstrainedResult(order=p, passes=False, witness=w, smallest_angle=angle)


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class ObservabilityReport:
    classical_observable: bool
    unobs_basis: np.ndarray
    hautus: List[HautusEntry]
    richness: RichnessReport
    rational_independence: Optional[RationalIndependence]
    rational_note: str
    independence_constrained: Optional[List[ConstrainedResult]] = None

    @property
    def tensor_results(self) -> List[TensorResult]:
        return self.richness.orders

    def summary(self) -> str:
        if not self.classical_observable:
            return "not observable (observability of (A, C) is necessary: not ensemble observable)"
        if self.richness.rich_up_to_pmax:
            return f"observable; rich up to pmax={self.richness.p_max}"
        first = self.richness.orders[self.richness.first_failure - 1]
        return (
            f"observable; NOT ensemble observable candidates: order {first.order} blocked by "
            + "; ".join(format_polynomial(q) for q in first.variety_polynomials)
        )

    def to_dict(self) -> dict:
        def cplx(z):
            return [z.real, z.imag] if z.imag else z.real

        d = {
            "summary": self.summary(),
            "classical_observable": self.classical_observable,
            "unobservable_basis": self.unobs_basis.T.tolist(),
            "hautus": [{"eigenvalue": cplx(e.eigenvalue), "multiplicity": e.multiplicity,
                        "rank_deficiency": e.rank_deficiency} for e in self.hautus],
            "tensor_orders": [{"order": r.order, "observable": r.observable,
                               "unobservable_dim": int(r.unobs_basis.shape[1]),
                               "varieties": r.varieties_text} for r in self.tensor_results],
            "rich_up_to_pmax": self.richness.rich_up_to_pmax,
            "richness_note": self.richness.note,
            "rational_independence": None,
            "rational_note": self.rational_note,
        }
        if self.rational_independence is not None:
            ri = self.rational_independence
            d["rational_independence"] = {"independent": ri.independent, "z_bound": ri.z_bound,
                                          "witness": list(ri.witness) if ri.witness else None,
                                          "verdict": ri.verdict}
        if self.independence_constrained is not None:
            d["independence_constrained"] = [
                {"order": c.order, "passes": c.passes, "smallest_angle": c.smallest_angle,
                 "witness": None if c.witness is None else c.witness.tolist()}
                for c in self.independence_constrained]
        return d

    def text(self) -> str:
        lines = [self.summary(), ""]
        lines.append("classical: " + ("observable" if self.classical_observable
                                      else f"unobservable, dim {self.unobs_basis.shape[1]}"))
        defic = [e for e in self.hautus if e.rank_deficiency]
        lines.append("hautus: " + ("full rank at every eigenvalue" if not defic else ", ".join(
            f"deficiency {e.rank_deficiency} at {_fmt_eig(e.eigenvalue)}" for e in defic)))
        for r in self.tensor_results:
            line = f"order {r.order}: " + ("observable" if r.observable
                                           else f"unobservable (dim {r.unobs_basis.shape[1]})")
            if r.varieties_text:
                line += "; varieties: " + ", ".join(r.varieties_text)
            lines.append(line)
        lines.append(self.richness.note)
        if self.rational_independence is not None:
            lines.append("rational independence: " + self.rational_independence.verdict)
        lines.append(self.rational_note)
        for c in self.independence_constrained or []:
            verdict = "passes" if c.passes else "fails"
            extra = "" if c.witness is None else f", witness {np.round(c.witness, 6).tolist()}"
            lines.append(f"independence-constrained order {c.order}: {verdict} "
                         f"(smallest angle {c.smallest_angle:.3g}{extra})")
        return "\n".join(lines)


def _fmt_eig(z: complex) -> str:
    return f"{z.real:.6g}" if z.imag == 0 else f"{z:.6g}"


def distinct_real_spectrum(sys: LinearSystem, tol: float = DEFAULT_TOL) -> Optional[np.ndarray]:
    """Eigenvalues of A if they are real and pairwise distinct, else None."""
    eigs = np.linalg.eigvals(sys.a)
    scale = max(1.0, np.max(np.abs(eigs)))
    if np.any(np.abs(eigs.imag) > 1e-9 * scale):
        return None
    lam = np.sort(eigs.real)
    if len(lam) > 1 and np.min(np.diff(lam)) <= 1e-6 * scale:
        return None
    return lam


def analyze(sys: LinearSystem, p_max: int = 4, z_bound: int = 5,
            tol: float = DEFAULT_TOL, independence: bool = False) -> ObservabilityReport:
    U = unobservable_subspace(sys, tol)
    classical = U.shape[1] == 0
    richness = richness_check(sys, p_max, tol)
    rational, note = None, ""
    lam = distinct_real_spectrum(sys, tol)
    if sys.m != 1:
        note = "rational-independence criterion needs a single output"
    elif lam is None:
        note = "rational-independence criterion needs distinct real eigenvalues"
    elif not classical:
        note = "rational-independence criterion needs an observable system"
    else:
        rational = rational_independence_test(lam, z_bound, tol)
        note = "criterion applies: all tensor orders observable iff eigenvalue differences are Q-independent"
    constrained = None
    if independence:
        constrained = [constrained_hautus_independence(sys, p, tol) for p in range(1, p_max + 1)]
    return ObservabilityReport(
        classical_observable=classical,
        unobs_basis=U,
        hautus=hautus_test(sys, tol),
        richness=richness,
        rational_independence=rational,
        rational_note=note,
        independence_constrained=constrained,
    )
