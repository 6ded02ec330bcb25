import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from ensemble_scope.ensemble import Snapshot, gaussian, snapshots
from ensemble_scope.experiments import art_experiment
from ensemble_scope.observability import LinearSystem
from ensemble_scope.systems import bimodal_example, diagonal_three_mode, drift_pair
from ensemble_scope.tomo import (PixelGrid, Projection, analytic_projections, assemble, bin_samples,
                                 density_on_grid, equal_width_edges, kaczmarz, l2_error, local_maxima,
                                 projections_from_snapshots, reconstruct, solve_projections, strip_row,
                                 write_grid_csv)

TIMES = np.linspace(0.0, 3.0, 20)


def unit_grid(n=8):
    return PixelGrid(0.0, 3.0, 0.0, 3.0, n, n)


def clip(poly, c, bound, keep_below):
    # Sutherland-Hodgman against the half-plane c.x <= bound (or >= bound)
    sgn = 1.0 if keep_below else -1.0
    f = lambda q: sgn * (bound - q @ c)
    out = []
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        fa, fb = f(a), f(b)
        if fa >= 0:
            out.append(a)
        if fa * fb < 0:
            out.append(a + fa / (fa - fb) * (b - a))
    return out


def shoelace(poly):
    if len(poly) < 3:
        return 0.0
    p = np.array(poly)
    return 0.5 * abs(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(p[:, 1], np.roll(p[:, 0], -1)))


def exact_strip_areas(grid, c, lo, hi):
    areas = []
    for cx, cy in grid.centers():
        hx, hy = grid.dx / 2, grid.dy / 2
        sq = [np.array(v) for v in [(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)]]
        areas.append(shoelace(clip(clip(sq, c, lo, False), c, hi, True)))
    return np.array(areas)


def test_grid_layout():
    g = PixelGrid(0.0, 2.0, -1.0, 1.0, 4, 2)
    assert g.dx == 0.5 and g.dy == 1.0 and g.pixel_area == 0.5
    np.testing.assert_allclose(g.centers()[:5], [[0.25, -0.5], [0.75, -0.5], [1.25, -0.5], [1.75, -0.5], [0.25, 0.5]])
    assert g.subsample_points(3).shape == (8, 9, 2)
    with pytest.raises(ValueError):
        PixelGrid(0.0, 1.0, 0.0, 1.0, 1, 4)
    with pytest.raises(ValueError):
        PixelGrid(1.0, 1.0, 0.0, 1.0, 4, 4)


def test_strip_row_examples():
    g = unit_grid(3)  # pixels of size 1
    # a vertical strip covering exactly the first pixel column
    row = strip_row(g, [1.0, 0.0], 0.0, 1.0)
    np.testing.assert_allclose(row.reshape(3, 3), [[1, 0, 0]] * 3)
    # a strip covering everything
    np.testing.assert_allclose(strip_row(g, [1.0, 1.0], -1.0, 7.0), np.ones(9))
    assert not np.any(strip_row(g, [1.0, 0.0], 10.0, 11.0))
    with pytest.raises(ValueError):
        strip_row(g, [0.0, 0.0], 0.0, 1.0)
    with pytest.raises(ValueError):
        strip_row(g, [1.0, 0.0], 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-2.0, 3.0), st.floats(0.05, 2.0), st.sampled_from([2, 4, 8]))
def test_strip_row_matches_polygon_clipping(theta, lo, width, s):
    g = unit_grid(6)
    c = np.array([np.cos(theta), np.sin(theta)])
    got = strip_row(g, c, lo, lo + width, subsample=s)
    exact = exact_strip_areas(g, c, lo, lo + width)
    # each boundary line crosses at most 2s-1 of the s*s sub-cells of a pixel
    bound = 2 * (2 * s - 1) / s**2 * g.pixel_area
    assert np.abs(got - exact).max() <= bound + 1e-12


def test_strip_row_converges_with_subsampling():
    g = unit_grid(6)
    c = np.array([0.6, 0.8])
    exact = exact_strip_areas(g, c, 1.1, 1.7)
    errs = [np.abs(strip_row(g, c, 1.1, 1.7, subsample=s) - exact).sum() for s in (2, 8, 32)]
    assert errs[0] > errs[1] > errs[2]


def test_binning():
    snap = Snapshot(0.0, np.array([[0.0], [0.5], [1.0], [1.0]]))
    edges = equal_width_edges(snap.samples, 2)
    np.testing.assert_allclose(edges, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(bin_samples(snap, edges), [0.25, 0.75])
    np.testing.assert_allclose(equal_width_edges([2.0, 2.0], 2), [2.0, 2.5, 3.0])
    with pytest.raises(ValueError):
        bin_samples(snap, [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        bin_samples(Snapshot(0.0, np.zeros((3, 2))), [0.0, 1.0])


def test_projection_validation():
    with pytest.raises(ValueError):
        Projection(0.0, [1.0, 0.0], [0.0, 1.0, 2.0], [0.7, 0.6])
    with pytest.raises(ValueError):
        Projection(0.0, [1.0, 0.0], [0.0, 1.0, 2.0], [-0.1, 0.5])
    assert Projection(0.0, [1.0, 0.0], [0.0, 1.0], [0.75]).defect == pytest.approx(0.25)


def test_assemble_rows_and_order():
    g = unit_grid(3)
    p_late = Projection(2.0, [1.0, 0.0], [0.0, 1.5, 3.0], [0.5, 0.5])
    p_early = Projection(1.0, [0.0, 1.0], [0.0, 1.0, 2.0, 3.0], [0.2, 0.3, 0.5])
    p_off = Projection(3.0, [1.0, 0.0], [5.0, 6.0], [0.0])
    sysm = assemble([p_late, p_off, p_early], g)
    assert sysm.labels == [(1.0, 0), (1.0, 1), (1.0, 2), (2.0, 0), (2.0, 1), (3.0, 0)]
    np.testing.assert_allclose(sysm.rhs, [0.2, 0.3, 0.5, 0.5, 0.5, 0.0])
    # every pixel lands in exactly one bin of a covering projection
    np.testing.assert_allclose(sysm.rows[:3].sum(axis=0), np.full(9, g.pixel_area))
    np.testing.assert_allclose(sysm.rows[:3].sum(axis=1), [3.0, 3.0, 3.0])
    np.testing.assert_array_equal(sysm.empty_rows, [False] * 5 + [True])
    # the vectorised block agrees with strip_row
    np.testing.assert_allclose(sysm.rows[3], strip_row(g, [1.0, 0.0], 0.0, 1.5))


def test_kaczmarz_solves_consistent_system():
    rng = np.random.default_rng(0)
    R = rng.uniform(0, 1, (30, 10))
    x = rng.uniform(0, 1, 10)
    res = kaczmarz(R, R @ x, sweeps=200)
    np.testing.assert_allclose(res.values, x, atol=1e-6)
    assert len(res.residuals) == len(res.history) == 200
    again = kaczmarz(R, R @ x, sweeps=200)
    np.testing.assert_array_equal(res.values, again.values)


def test_kaczmarz_single_row_projection():
    # one sweep with relaxation 1 lands exactly on the hyperplane r.v = b
    res = kaczmarz([[3.0, 4.0]], [10.0], sweeps=1, nonneg=False)
    np.testing.assert_allclose(res.values, [1.2, 1.6])
    assert kaczmarz([[1.0, 0.0]], [-1.0], sweeps=1).values[0] == 0.0


def test_kaczmarz_errors():
    with pytest.raises(ValueError):
        kaczmarz(np.zeros((3, 2)), np.ones(3))
    with pytest.raises(ValueError):
        kaczmarz(np.eye(2), np.ones(2), relaxation=2.0)
    with pytest.raises(ValueError):
        kaczmarz(np.eye(2), np.ones(2), sweeps=0)


def test_limited_angle_geometry():
    sys = drift_pair("observable")
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 16, 16)
    snaps = snapshots(sys, bimodal_example(), TIMES, 2000, seed=4)
    for proj in projections_from_snapshots(sys, snaps, 10, g):
        c = sys.output_map(proj.t)[0]
        k = null_space(c[None])[:, 0]
        r = proj.row / np.linalg.norm(proj.row)
        assert abs(r @ k) < 1e-10
        assert abs(abs(r @ c) - np.linalg.norm(c)) < 1e-10
        # strip membership is constant along the kernel direction
        pts = g.centers()
        np.testing.assert_allclose((pts + 0.37 * k) @ proj.row, pts @ proj.row, atol=1e-12)


def test_tail_strips_cover_the_box():
    sys = drift_pair("observable")
    g = unit_grid(8)
    snaps = snapshots(sys, bimodal_example(), [0.0, 1.0], 500, seed=1)
    for proj in projections_from_snapshots(sys, snaps, 10, g):
        corners = np.array([[0, 0], [0, 3], [3, 0], [3, 3]]) @ proj.row
        assert proj.bin_edges[0] <= corners.min() and proj.bin_edges[-1] > corners.max()
        assert proj.probs.sum() == pytest.approx(1.0)


def test_analytic_projections_are_probabilities():
    sys = drift_pair("observable")
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 32, 32)
    projs = analytic_projections(sys, bimodal_example(), TIMES, g)
    for p in projs:
        assert len(p.probs) == 40 and 0.95 < p.probs.sum() <= 1.0
    with pytest.raises(ValueError):
        analytic_projections(diagonal_three_mode(), bimodal_example(), TIMES, g)


def test_noiseless_mass_is_conserved():
    sys = drift_pair("observable")
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 64, 64)
    rec = solve_projections(analytic_projections(sys, bimodal_example(), TIMES, g), g, sweeps=7)
    assert rec.mass_defect < 0.02, rec.mass_before_normalization


def test_reconstruct_rejects_non_planar():
    with pytest.raises(ValueError, match="n = 2"):
        reconstruct(diagonal_three_mode(), [], unit_grid())


def test_residual_decreases_on_reference_experiment():
    exp = art_experiment(count=20_000, sweeps=3)
    assert exp.residuals[2] < exp.residuals[0]


def test_shift_detection():
    mix = bimodal_example()
    moved = mix.shift([0.4, 0.0])
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 32, 32)

    obs = drift_pair("observable")
    a = solve_projections(analytic_projections(obs, mix, TIMES, g), g)
    b = solve_projections(analytic_projections(obs, moved, TIMES, g), g)
    assert np.linalg.norm(a.grid.values - b.grid.values) * np.sqrt(g.pixel_area) > 0.1

    unobs = drift_pair("unobservable")
    sa = assemble(analytic_projections(unobs, mix, TIMES, g), g)
    sb = assemble(analytic_projections(unobs, moved, TIMES, g), g)
    assert np.abs(sa.rows - sb.rows).max() <= 1e-12
    assert np.abs(sa.rhs - sb.rhs).max() <= 1e-12


def test_l2_error_examples():
    g = unit_grid(4).with_values(np.arange(16.0))
    assert l2_error(g, g) == 0.0
    assert l2_error(np.zeros(16), g) == 1.0
    assert l2_error(2 * g.values, g) == pytest.approx(1.0)


def test_local_maxima_and_density():
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 30, 30)
    dens = density_on_grid(bimodal_example(), g)
    assert dens.mass() == pytest.approx(1.0, abs=1e-3)
    peaks = local_maxima(dens)
    assert len(peaks) == 2
    for m in [(1.0, 2.0), (2.0, 1.0)]:
        assert np.min(np.linalg.norm(peaks - m, axis=1)) < 0.1
    flat = g.with_values(np.ones(900))
    assert len(local_maxima(flat)) == 0


def test_single_gaussian_reconstruction_is_close():
    # a rich enough angle set recovers a single bump
    sys = LinearSystem(np.array([[0.0, -1.0], [1.0, 0.0]]), np.array([[1.0, 0.0]]))
    mix = gaussian([1.5, 1.5], 0.1 * np.eye(2))
    g = PixelGrid(0.0, 3.0, 0.0, 3.0, 32, 32)
    rec = solve_projections(analytic_projections(sys, mix, np.linspace(0, np.pi, 24, endpoint=False), g), g,
                            sweeps=20)
    assert l2_error(rec.grid, density_on_grid(mix, g)) < 0.2


def test_grid_csv(tmp_path):
    g = unit_grid(2).with_values([1.0, 2.0, 3.0, 4.5])
    write_grid_csv(tmp_path / "g.csv", g)
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert lines[1] == "0.75,0.75,1" and lines[4] == "2.25,2.25,4.5"
