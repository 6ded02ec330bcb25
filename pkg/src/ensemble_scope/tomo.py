"""Algebraic reconstruction (Kaczmarz) of a planar initial density from strip data.

Each snapshot at time t with scalar output gives probabilities of the strips
{x : lo <= c_t . x < hi}, c_t = C e^{At}.  Pixelising the plane turns these
into linear equations in the pixel values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .ensemble import Snapshot, pushforward
from .observability import LinearSystem

log = logging.getLogger(__name__)


@dataclass
class PixelGrid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    values: Optional[np.ndarray] = None  # length nx*ny, k = iy*nx + ix

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 pixels per axis")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("empty bounding box")
        if self.values is None:
            self.values = np.zeros(self.nx * self.ny)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.nx * self.ny:
            raise ValueError("values must have nx*ny entries")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def pixel_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> np.ndarray:
        """(nx*ny, 2) pixel centres in storage order."""
        xs = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def image(self) -> np.ndarray:
        """Values as a (ny, nx) array, row iy."""
        return self.values.reshape(self.ny, self.nx)

    def mass(self) -> float:
        return float(self.values.sum() * self.pixel_area)

    def with_values(self, values) -> "PixelGrid":
        return PixelGrid(self.x_min, self.x_max, self.y_min, self.y_max, self.nx, self.ny, np.array(values, dtype=float))

    def subsample_points(self, subsample: int) -> np.ndarray:
        """(nx*ny, s*s, 2) regularly spaced points inside each pixel."""
        off = (np.arange(subsample) + 0.5) / subsample
        ox, oy = np.meshgrid(off * self.dx, off * self.dy)
        offsets = np.column_stack([ox.ravel(), oy.ravel()])
        corners = self.centers() - 0.5 * np.array([self.dx, self.dy])
        return corners[:, None, :] + offsets[None, :, :]


@dataclass
class Projection:
    t: float
    row: np.ndarray  # c_t, length 2
    bin_edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.row = np.asarray(self.row, dtype=float).reshape(-1)
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(self.probs < 0) or self.probs.sum() > 1 + 1e-9:
            raise ValueError("bin probabilities must be >= 0 and sum to <= 1")

    @property
    def defect(self) -> float:
        """Probability mass falling outside the binned range."""
        return float(1.0 - self.probs.sum())


ProjectionSet = List[Projection]


def equal_width_edges(samples, bins: int) -> np.ndarray:
    y = np.asarray(samples, dtype=float).reshape(-1)
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def bin_samples(snapshot: Snapshot, bin_edges) -> np.ndarray:
    """Fraction of samples in each bin; the last bin includes its right edge."""
    y = np.asarray(snapshot.samples, dtype=float)
    if y.ndim == 2:
        if y.shape[1] != 1:
            raise ValueError("binning needs a scalar output")
        y = y[:, 0]
    edges = np.asarray(bin_edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be sorted and strictly increasing")
    counts, _ = np.histogram(y, bins=edges)
    return counts / len(y)


def strip_row(grid: PixelGrid, c, lo: float, hi: float, subsample: int = 4) -> np.ndarray:
    """Area of each pixel inside {lo <= c.x < hi}, by point subsampling."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if not lo < hi:
        raise ValueError("need lo < hi")
    if not np.any(c):
        raise ValueError("strip direction must be nonzero")
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    s = grid.subsample_points(subsample) @ c
    inside = (s >= lo) & (s < hi)
    return grid.pixel_area * inside.mean(axis=1)


def _strip_block(grid: PixelGrid, proj: Projection, subsample: int) -> np.ndarray:
    # all bins of one projection at once; same semantics as strip_row
    edges = proj.bin_edges
    s = grid.subsample_points(subsample) @ proj.row
    nb = len(edges) - 1
    idx = np.searchsorted(edges, s, side="right") - 1
    # last edge closed, matching bin_samples
    idx[s == edges[-1]] = nb - 1
    valid = (idx >= 0) & (idx < nb)
    pix = np.broadcast_to(np.arange(grid.nx * grid.ny)[:, None], idx.shape)
    flat = idx[valid] * (grid.nx * grid.ny) + pix[valid]
    block = np.bincount(flat, minlength=nb * grid.nx * grid.ny).astype(float)
    return block.reshape(nb, grid.nx * grid.ny) * (grid.pixel_area / subsample**2)


@dataclass
class AssembledSystem:
    rows: np.ndarray
    rhs: np.ndarray
    labels: List[Tuple[float, int]]
    empty_rows: np.ndarray


def assemble(projections: ProjectionSet, grid: PixelGrid, subsample: int = 4) -> AssembledSystem:
    """One equation per (time, bin), times ascending and bins ascending."""
    projections = sorted(projections, key=lambda p: p.t)
    blocks, rhs, labels = [], [], []
    for proj in projections:
        blocks.append(_strip_block(grid, proj, subsample))
        rhs.append(proj.probs)
        labels.extend((proj.t, j) for j in range(len(proj.probs)))
    R = np.vstack(blocks)
    empty = ~np.any(R, axis=1)
    if np.any(empty):
        log.info("%d strips miss the grid entirely", int(empty.sum()))
    return AssembledSystem(rows=R, rhs=np.concatenate(rhs), labels=labels, empty_rows=empty)


@dataclass
class KaczmarzResult:
    values: np.ndarray
    residuals: List[float]  # mean squared data residual after each sweep
    history: List[np.ndarray] = field(repr=False, default_factory=list)


def kaczmarz(rows, rhs, sweeps: int = 7, relaxation: float = 1.0, nonneg: bool = True,
             init=None) -> KaczmarzResult:
    """Cyclic row-action iteration v += relax * (b_i - r_i.v) / |r_i|^2 * r_i."""
    R = np.asarray(rows, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if not 0.0 < relaxation < 2.0:
        raise ValueError("relaxation must lie in (0, 2)")
    norms = np.einsum("ij,ij->i", R, R)
    if not np.any(norms):
        raise ValueError("all rows are zero")
    v = np.zeros(R.shape[1]) if init is None else np.array(init, dtype=float)
    active = np.flatnonzero(norms > 0)
    residuals, history = [], []
    for _ in range(sweeps):
        for i in active:
            r = R[i]
            v += (relaxation * (b[i] - r @ v) / norms[i]) * r
        if nonneg:
            np.maximum(v, 0.0, out=v)
        res = R @ v - b
        residuals.append(float(res @ res / len(b)))
        history.append(v.copy())
    return KaczmarzResult(values=v, residuals=residuals, history=history)


def projections_from_snapshots(sys: LinearSystem, snaps: Sequence[Snapshot], bins: int = 40,
                               grid: Optional[PixelGrid] = None) -> ProjectionSet:
    """Bin each snapshot along c_t = C e^{At}.

    With ``grid`` given, the parts of the box beyond the sample range are added
    as two extra strips of observed probability zero.
    """
    out = []
    for s in snaps:
        edges = equal_width_edges(s.samples, bins)
        probs = bin_samples(s, edges)
        row = sys.output_map(s.time)[0]
        if grid is not None:
            corners = np.array([[grid.x_min, grid.y_min], [grid.x_min, grid.y_max],
                                [grid.x_max, grid.y_min], [grid.x_max, grid.y_max]]) @ row
            lo, hi = corners.min(), corners.max()
            if lo < edges[0]:
                edges, probs = np.r_[lo, edges], np.r_[0.0, probs]
            if hi > edges[-1]:
                edges, probs = np.r_[edges, hi + 1e-9 * max(1.0, abs(hi))], np.r_[probs, 0.0]
        out.append(Projection(t=s.time, row=row, bin_edges=edges, probs=probs))
    return out


@dataclass
class ArtReconstruction:
    grid: PixelGrid
    residuals: List[float]
    mass_before_normalization: float
    history: List[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def mass_defect(self) -> float:
        return abs(1.0 - self.mass_before_normalization)


def reconstruct(sys: LinearSystem, snaps: Sequence[Snapshot], grid: PixelGrid, bins: int = 40,
                sweeps: int = 7, relaxation: float = 1.0, subsample: int = 4,
                nonneg: bool = True) -> ArtReconstruction:
    """bin -> assemble -> Kaczmarz -> renormalise to unit mass.

    ``history`` keeps the (unnormalised) iterate after every sweep.
    """
    _check_planar(sys)
    projections = projections_from_snapshots(sys, snaps, bins, grid)
    for p in projections:
        if p.defect > 1e-12:
            log.info("t=%g: %.3g of the mass lies outside the bins", p.t, p.defect)
    return solve_projections(projections, grid, sweeps, relaxation, subsample, nonneg)


def solve_projections(projections: ProjectionSet, grid: PixelGrid, sweeps: int = 7,
                      relaxation: float = 1.0, subsample: int = 4, nonneg: bool = True) -> ArtReconstruction:
    system = assemble(projections, grid, subsample)
    result = kaczmarz(system.rows, system.rhs, sweeps, relaxation, nonneg, init=grid.values)
    out = grid.with_values(result.values)
    mass = out.mass()
    log.info("mass before normalisation %.6f", mass)
    if mass > 0:
        out.values = out.values / mass
    return ArtReconstruction(grid=out, residuals=result.residuals, mass_before_normalization=mass,
                             history=result.history)


def _check_planar(sys: LinearSystem) -> None:
    if sys.n != 2 or sys.m != 1:
        raise ValueError(
            "tomographic reconstruction is implemented for n = 2, m = 1; "
            "use ensemble_scope.moments for general dimensions"
        )


def analytic_projections(sys: LinearSystem, mix, times: Sequence[float], grid: PixelGrid,
                         bins: int = 40) -> ProjectionSet:
    """Noiseless bin masses of the pushed-forward mixture.

    Bins split the projection of the grid box into ``bins`` equal widths; the
    masses come from the exact one-dimensional mixture CDF.
    """
    _check_planar(sys)
    corners = np.array([[grid.x_min, grid.y_min], [grid.x_min, grid.y_max],
                        [grid.x_max, grid.y_min], [grid.x_max, grid.y_max]])
    out = []
    for t in times:
        row = sys.output_map(t)[0]
        proj = corners @ row
        edges = np.linspace(proj.min(), proj.max(), bins + 1)
        y = pushforward(mix, row[None])
        sd = np.sqrt(y.covariances[:, 0, 0])
        cdf = (y.weights[:, None] * norm.cdf(edges[None, :], y.means[:, :1], sd[:, None])).sum(axis=0)
        out.append(Projection(t=float(t), row=row, bin_edges=edges, probs=np.diff(cdf)))
    return out


def l2_error(est, truth) -> float:
    """||est - truth|| / ||truth|| over pixel values."""
    e = est.values if isinstance(est, PixelGrid) else np.asarray(est, dtype=float)
    t = truth.values if isinstance(truth, PixelGrid) else np.asarray(truth, dtype=float)
    return float(np.linalg.norm(e - t) / np.linalg.norm(t))


def density_on_grid(mix, grid: PixelGrid) -> PixelGrid:
    return grid.with_values(mix.pdf(grid.centers()))


def local_maxima(grid: PixelGrid, min_fraction: float = 0.1) -> np.ndarray:
    """Centres of strict 8-neighbour local maxima above ``min_fraction`` of the peak."""
    img = grid.image()
    padded = np.pad(img, 1, constant_values=-np.inf)
    core = padded[1:-1, 1:-1]
    is_max = np.ones_like(img, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                nb = padded[1 + dy:1 + dy + img.shape[0], 1 + dx:1 + dx + img.shape[1]]
                is_max &= core > nb
    is_max &= img >= min_fraction * img.max()
    iy, ix = np.nonzero(is_max)
    return grid.centers()[iy * grid.nx + ix]


def write_grid_csv(path, grid: PixelGrid) -> None:
    data = np.column_stack([grid.centers(), grid.values])
    np.savetxt(path, data, delimiter=",", header="x,y,value", comments="", fmt="%.10g")
