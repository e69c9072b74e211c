import math

import numpy as np
import pytest
from helpers import piecewise_profile

from weightlab import majorants
from weightlab.errors import DepthError, InvariantViolation, PreconditionError
from weightlab.grid import make_grid
from weightlab.majorants import (
    MajorantResult,
    a2_majorant,
    ambient_weight,
    chain_a1apt,
    chain_a2rdiv,
    rdf_majorant,
    restricted_majorant,
)
from weightlab.operators import DiscreteOperator, lp_norm, maximal_norm_lp
from weightlab.weights import Weight, doubling_constant, weight_from_dsl

# Fitted once on seeded calibration runs, then frozen (enforced on
# disjoint seeds in the acceptance suite):
A2_RATIO_CAP = 2.3  # weighted-to-reference operator norm ratio (measured max 1.86)
C2_A2_BOUND = 3.0  # A_2 constant vs squared reference norm (measured max 2.44)
INV_DOUBLING_CAP = 8.0  # doubling of the inverse majorant (measured max 6.1)
A2RDIV_FINAL_CAP = 6.0  # end-to-end chain constant (measured max 4.6)


@pytest.fixture(scope="module")
def grid():
    return make_grid(1.0, 9)


@pytest.fixture(scope="module")
def hilbert_op(grid):
    return DiscreteOperator.hilbert_op(grid)


# --- series majorant ----------------------------------------------------------


def test_rdf_constant_input_geometric_sum(grid):
    res = rdf_majorant(np.ones(grid.n_cells), grid, p=2.0)
    mn = maximal_norm_lp(2.0, grid)
    assert res.norm_ratio == pytest.approx(1.0 / (1.0 - 0.5 / mn), rel=1e-9)
    assert res.norm_ratio <= 2.0
    assert res.class_constant == pytest.approx(1.0, rel=1e-9)


def test_rdf_indicator_class_constant(grid):
    x = grid.midpoints()
    f = ((x >= 0) & (x < 0.25)).astype(float)
    res = rdf_majorant(f, grid, p=2.0)
    assert res.class_constant <= 2.0 * maximal_norm_lp(2.0, grid) * 1.05


def test_rdf_suite_seeded(grid):
    n = grid.n_cells
    for p in (1.5, 2.0, 3.0):
        bound = 2.0 * maximal_norm_lp(p, grid)
        for seed in range(10):
            f = np.random.default_rng(100 + seed).uniform(0.0, 1.0, n)
            res = rdf_majorant(f, grid, p=p)
            assert np.all(res.majorant >= f)
            assert res.norm_ratio <= 2.0
            assert res.class_constant <= bound * 1.05


def test_rdf_positively_homogeneous(grid):
    f = np.random.default_rng(7).uniform(0.1, 1.0, grid.n_cells)
    a = rdf_majorant(f, grid)
    b = rdf_majorant(3.0 * f, grid)
    assert np.allclose(3.0 * a.majorant, b.majorant, rtol=1e-13)


def test_rdf_preconditions(grid):
    with pytest.raises(PreconditionError):
        rdf_majorant(np.zeros(grid.n_cells), grid)
    with pytest.raises(PreconditionError):
        rdf_majorant(np.ones(grid.n_cells), grid, depth=4)
    neg = np.ones(grid.n_cells)
    neg[0] = -1.0
    with pytest.raises(PreconditionError):
        rdf_majorant(neg, grid)


def test_rdf_depth_error_when_series_diverges(grid, monkeypatch):
    # an underestimated operator norm makes the geometric tail blow up
    monkeypatch.setattr(majorants, "maximal_norm_lp", lambda p, g: 0.51)
    with pytest.raises(DepthError):
        rdf_majorant(np.ones(grid.n_cells), grid, p=2.0)


def test_majorant_result_validates_domination(grid):
    f = np.ones(grid.n_cells)
    with pytest.raises(InvariantViolation):
        MajorantResult(
            input_f=f,
            majorant=0.5 * f,
            grid=grid,
            norm_ratio=1.0,
            class_tag="A1",
            class_constant=1.0,
        )


# --- norm-controlled majorant --------------------------------------------------


def test_a2_majorant_constant_profile(grid, hilbert_op):
    res = a2_majorant(np.ones(grid.n_cells), grid, hilbert_op, q=2.0)
    assert res.weighted_t_norm == pytest.approx(res.reference_norm, rel=1e-9)


def test_a2_majorant_seeded_ratio_cap(grid, hilbert_op):
    # one frozen constant covers the whole seeded set at both exponents
    for seed in range(20):
        rng = np.random.default_rng(4000 + seed)
        f = piecewise_profile(rng, grid.n_cells)
        for q in (1.5, 2.0):
            res = a2_majorant(f, grid, hilbert_op, q=q)
            assert res.weighted_t_norm / res.reference_norm <= A2_RATIO_CAP


# --- fixed-point stand-in -------------------------------------------------------


def test_restricted_constant_profile(grid, hilbert_op):
    res = restricted_majorant(np.ones(grid.n_cells), grid, hilbert_op, q=2.0, alpha=2.0)
    assert res.converged and res.iterations == 1
    w = res.majorant
    assert np.max(w) / np.min(w) == pytest.approx(1.0, rel=1e-9)


def test_restricted_seeded_postconditions(grid, hilbert_op):
    big_a = 12.0  # 6 v 3*m1 with m1 = 2**alpha = 4
    for seed in range(6):
        rng = np.random.default_rng(5000 + seed)
        f = piecewise_profile(rng, grid.n_cells)
        res = restricted_majorant(f, grid, hilbert_op, q=2.0, alpha=2.0)
        assert res.converged and res.iterations <= 64
        assert np.all(res.majorant >= f)
        assert res.norm_ratio <= 2.0 * big_a
        assert res.equivalence_constant <= big_a * (1 + 1e-12)
        assert res.class_constant <= C2_A2_BOUND * res.reference_norm**2
        inv = Weight.from_vector(grid, 1.0 / res.majorant)
        assert doubling_constant(inv) <= INV_DOUBLING_CAP


def test_restricted_spiky_profile_converges(grid, hilbert_op):
    f = np.full(grid.n_cells, 1e-3)
    f[grid.n_cells // 3] = 50.0
    res = restricted_majorant(f, grid, hilbert_op, q=2.0, alpha=2.0)
    assert res.converged
    assert np.all(res.majorant >= f)


# --- averaged chains -------------------------------------------------------------


def test_chain_a1apt_all_ones(grid):
    n = grid.n_cells
    ones = Weight.from_vector(grid, np.ones(n))
    rep = chain_a1apt(np.ones(n), ones, ones, p=2.0, delta=0.5, grid=grid)
    assert rep.passed
    assert rep.final_constant == pytest.approx(1.0, abs=1e-12)
    for step in rep.steps:
        assert step.lhs <= step.rhs * (1 + 1e-12)


def test_chain_a1apt_step_weight_instance(grid):
    w = weight_from_dsl("step:K=4", grid)
    f = w.fiber(0) * 0.5
    u = rdf_majorant(w.fiber(0) ** 0.5, grid, p=2.0).as_weight()
    rep = chain_a1apt(f, w, u, p=2.0, delta=0.5, grid=grid)
    assert rep.passed


def test_chain_a1apt_jensen_step_holds(grid):
    rng = np.random.default_rng(2024)
    f = piecewise_profile(rng, grid.n_cells, positive=False)
    w = rdf_majorant(np.abs(f), grid, p=2.0).as_weight()
    u = rdf_majorant(w.fiber(0) ** 0.5, grid, p=2.0).as_weight()
    rep = chain_a1apt(f, w, u, p=2.0, delta=0.5, grid=grid)
    jensen = next(s for s in rep.steps if "Jensen" in s.label)
    assert jensen.passed


def test_chain_a1apt_constant_ignores_f(grid):
    rng = np.random.default_rng(77)
    w = rdf_majorant(piecewise_profile(rng, grid.n_cells), grid).as_weight()
    u = rdf_majorant(w.fiber(0) ** 0.5, grid).as_weight()
    f1 = 0.5 * w.fiber(0)
    f2 = 0.125 * w.fiber(0)
    r1 = chain_a1apt(f1, w, u, p=2.0, delta=0.5, grid=grid)
    r2 = chain_a1apt(f2, w, u, p=2.0, delta=0.5, grid=grid)
    assert r1.final_constant == r2.final_constant


def test_chain_a1apt_names_failing_cell(grid):
    n = grid.n_cells
    w = Weight.from_vector(grid, np.ones(n))
    f = np.ones(n)
    f[5] = 2.0
    with pytest.raises(PreconditionError, match="cell 5"):
        chain_a1apt(f, w, w, p=2.0, delta=0.5, grid=grid)


def test_chain_a2rdiv_all_ones(grid):
    n = grid.n_cells
    rep = chain_a2rdiv(np.ones(n), np.ones(n), grid, p_z=2.0)
    assert rep.passed


def test_chain_a2rdiv_seeded(grid):
    for seed in range(6):
        rng = np.random.default_rng(3000 + seed)
        g = piecewise_profile(rng, grid.n_cells)
        h = rng.standard_normal(grid.n_cells)
        h /= lp_norm(h, 2.0, grid.cell_width)
        rep = chain_a2rdiv(g, h, grid, p_z=2.0)
        assert rep.passed
        assert rep.final_constant <= A2RDIV_FINAL_CAP


# --- explicit ambient weight ------------------------------------------------------


def _normalized_pair(grid, p_z=2.0):
    n = grid.n_cells
    dx = grid.cell_width
    a = np.ones(n)
    a /= lp_norm(a, p_z / (p_z - 1.0), dx)
    sigma = np.ones(n)
    sigma /= np.sum(sigma * dx)
    return a, sigma


def test_ambient_weight_trivial(grid):
    a, sigma = _normalized_pair(grid)
    omega, bound = ambient_weight([np.ones(grid.n_cells)], np.ones(grid.n_cells), a, sigma, grid)
    assert bound == 0.0
    assert np.all(omega > 0)


def test_ambient_weight_bound(grid):
    a, sigma = _normalized_pair(grid)
    n = grid.n_cells
    step = weight_from_dsl("step:K=4", grid).fiber(0)
    rdf = rdf_majorant(np.ones(n), grid).majorant
    candidates = [np.ones(n), step, rdf]
    omega1 = np.minimum.reduce(candidates)
    omega, bound = ambient_weight(candidates, omega1, a, sigma, grid)
    max_norm = max(lp_norm(h, 2.0, grid.cell_width) for h in candidates)
    assert bound <= 4.0 * max_norm + 1.0


def test_ambient_weight_scaling_pointwise_algebra(grid):
    # |log(e h)|^2 <= 2 + 2 |log h|^2 pointwise
    rng = np.random.default_rng(9)
    h = rng.uniform(0.2, 5.0, grid.n_cells)
    lhs = np.log(math.e * h) ** 2
    rhs = 2.0 + 2.0 * np.log(h) ** 2
    assert np.all(lhs <= rhs + 1e-12)


def test_ambient_weight_preconditions(grid):
    a, sigma = _normalized_pair(grid)
    n = grid.n_cells
    with pytest.raises(PreconditionError):
        ambient_weight([np.ones(n)], np.ones(n), 2.0 * a, sigma, grid)
    with pytest.raises(PreconditionError):
        ambient_weight([np.ones(n)], np.ones(n), a, 3.0 * sigma, grid)
    with pytest.raises(PreconditionError):
        ambient_weight([0.5 * np.ones(n)], np.ones(n), a, sigma, grid)
