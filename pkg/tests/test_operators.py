import math

import numpy as np
import pytest
from helpers import brute_maximal

from weightlab.errors import ConvergenceError, DomainError, InvariantViolation, PreconditionError
from weightlab.grid import make_grid
from weightlab.operators import (
    DiscreteOperator,
    hilbert,
    maximal,
    maximal_norm_lp,
    mbe_worst_ratio,
    nondegeneracy_constant,
    op_norm_weighted,
    op_norm_weighted_joint,
    verify_shift_ap2,
)
from weightlab.weights import Weight, weight_from_dsl

NONDEG_FLOOR = 1.0 / (2.0 * math.pi)


# --- maximal operator -------------------------------------------------------


def test_maximal_fixed_point():
    assert np.array_equal(maximal(np.ones(32)), np.ones(32))


def test_maximal_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(5):
        f = rng.uniform(0.0, 2.0, 16)
        assert np.allclose(maximal(f), brute_maximal(f), atol=1e-13)


def test_maximal_impulse_formula():
    n, c = 16, 5
    f = np.zeros(n)
    f[c] = 1.0
    expect = 1.0 / (np.abs(np.arange(n) - c) + 1)
    assert np.allclose(maximal(f), expect, atol=1e-14)


def test_maximal_dominates_input():
    rng = np.random.default_rng(2)
    for _ in range(20):
        f = rng.uniform(0.0, 3.0, 64)
        assert np.all(maximal(f) >= f)


def test_maximal_sublinear_and_monotone():
    rng = np.random.default_rng(3)
    f = rng.uniform(0.0, 2.0, 64)
    g = rng.uniform(0.0, 2.0, 64)
    assert np.all(maximal(f + g) <= maximal(f) + maximal(g) + 1e-12)
    assert np.all(maximal(f) <= maximal(f + g) + 1e-12)  # monotone: f <= f+g


def test_maximal_rejects_negative():
    with pytest.raises(DomainError):
        maximal(np.array([1.0, -0.5, 2.0]))


# --- Hilbert transform ------------------------------------------------------


def test_hilbert_parity():
    g = make_grid(1.0, 10)
    f = np.cos(3.0 * g.midpoints())  # even
    hf = hilbert(f)
    assert np.max(np.abs(hf + hf[::-1])) < 1e-12  # odd output


def test_hilbert_indicator_oracle():
    # analytic transform of the indicator of [-1/2, 1/2] is
    # (1/pi) log|(x+1/2)/(x-1/2)|; compare >= 3 cells away from the jumps
    g = make_grid(1.0, 12)
    x = g.midpoints()
    f = ((x >= -0.5) & (x < 0.5)).astype(float)
    hf = hilbert(f)
    oracle = (1.0 / math.pi) * np.log(np.abs((x + 0.5) / (x - 0.5)))
    far = np.abs(np.abs(x) - 0.5) > 3 * g.cell_width
    assert np.max(np.abs(hf[far] - oracle[far]) / np.abs(oracle[far])) < 0.02


def test_hilbert_impulse_kernel():
    g = make_grid(1.0, 8)
    n = g.n_cells
    c = n // 2
    f = np.zeros(n)
    f[c] = 1.0
    hf = hilbert(f)
    x = g.midpoints()
    far = np.abs(x - x[c]) >= 4 * g.cell_width
    expect = (g.cell_width / math.pi) / (x - x[c] + (x == x[c]))
    assert np.max(np.abs(hf[far] - expect[far]) / np.abs(expect[far])) < 0.03


def test_hilbert_direct_vs_fft():
    rng = np.random.default_rng(4)
    for n in (512, 2048):
        f = rng.standard_normal(n)
        d = hilbert(f, method="direct")
        ff = hilbert(f, method="fft")
        assert np.max(np.abs(d - ff)) < 1e-10


def test_hilbert_linear():
    rng = np.random.default_rng(5)
    f, g = rng.standard_normal(128), rng.standard_normal(128)
    assert np.allclose(hilbert(2.0 * f + g), 2.0 * hilbert(f) + hilbert(g), atol=1e-12)


def test_hilbert_antisymmetric_pairing():
    rng = np.random.default_rng(6)
    f, g = rng.standard_normal(256), rng.standard_normal(256)
    lhs = float(hilbert(f) @ g)
    rhs = -float(f @ hilbert(g))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


# --- operator objects -------------------------------------------------------


def test_custom_kernel_matches_hilbert():
    g = make_grid(1.0, 7)
    T = DiscreteOperator.from_kernel(g, lambda x, y: 1.0 / (math.pi * (x - y)))
    f = np.random.default_rng(7).standard_normal(g.n_cells)
    assert np.allclose(T.apply(f), hilbert(f, method="direct"), atol=1e-12)


def test_custom_kernel_rejects_non_antisymmetric():
    g = make_grid(1.0, 5)
    with pytest.raises(InvariantViolation):
        DiscreteOperator.from_kernel(g, lambda x, y: 1.0 / (1.0 + (x - y) ** 2))


def test_maximal_operator_has_no_transpose():
    g = make_grid(1.0, 5)
    T = DiscreteOperator.maximal_op(g)
    with pytest.raises(DomainError):
        T.apply_transpose(np.ones(g.n_cells))


# --- weighted operator norms -------------------------------------------------


def test_identity_norm_is_one():
    g = make_grid(1.0, 8)
    T = DiscreteOperator.identity(g)
    w = weight_from_dsl("step:K=4", g)
    assert op_norm_weighted(T, w).norm == pytest.approx(1.0, rel=1e-10)


def test_power_iteration_matches_dense_svd():
    g = make_grid(1.0, 8)
    n = g.n_cells
    x = g.midpoints()
    K = 1.0 / (math.pi * (x[:, None] - x[None, :] + np.eye(n)))
    np.fill_diagonal(K, 0.0)
    K *= g.cell_width
    for dsl in ("const:c=1", "step:K=4", "power:a=-0.5"):
        w = weight_from_dsl(dsl, g)
        S = np.sqrt(w.fiber(0))[:, None] * K / np.sqrt(w.fiber(0))[None, :]
        sv = np.linalg.svd(S, compute_uv=False)[0]
        rep = op_norm_weighted(DiscreteOperator.hilbert_op(g), w)
        assert rep.norm == pytest.approx(sv, rel=1e-6)
        assert rep.residual <= 1e-8


def test_hilbert_near_isometry_unweighted():
    g = make_grid(1.0, 11)
    w = weight_from_dsl("const:c=1", g)
    rep = op_norm_weighted(DiscreteOperator.hilbert_op(g), w)
    assert rep.norm == pytest.approx(1.0, rel=0.05)


def test_nonconvergence_carries_last_iterate():
    g = make_grid(1.0, 10)
    w = weight_from_dsl("const:c=1", g)
    with pytest.raises(ConvergenceError) as err:
        op_norm_weighted(DiscreteOperator.hilbert_op(g), w, max_iter=20)
    assert err.value.last_report is not None
    assert 0.5 < err.value.last_report.norm < 1.5


def test_per_fiber_below_joint_norm():
    g = make_grid(1.0, 8)
    w = Weight(g, np.stack([np.ones(g.n_cells), weight_from_dsl("step:K=4", g).fiber(0)]))
    T = DiscreteOperator.hilbert_op(g)
    joint = op_norm_weighted_joint(T, w)
    for i in range(2):
        assert op_norm_weighted(T, w, fiber=i).norm <= math.sqrt(2.0) * joint


# --- maximal operator L^p estimates ------------------------------------------


def test_maximal_norm_envelope():
    g = make_grid(1.0, 10)
    v = maximal_norm_lp(2.0, g)
    assert 1.0 <= v <= 4.0


def test_maximal_norm_nonincreasing_in_p():
    g = make_grid(1.0, 10)
    vals = [maximal_norm_lp(p, g) for p in (1.5, 2.0, 3.0)]
    assert vals[0] >= vals[1] >= vals[2] >= 1.0


def test_maximal_norm_rejects_bad_p():
    with pytest.raises(DomainError):
        maximal_norm_lp(1.0, make_grid(1.0, 5))


# --- nondegeneracy -----------------------------------------------------------


def test_nondegeneracy_floor_and_stability():
    vals = []
    for k in (10, 12, 14):
        g = make_grid(1.0, k)
        rep = nondegeneracy_constant(DiscreteOperator.hilbert_op(g), 3.0)
        assert rep.empirical_c >= NONDEG_FLOOR
        vals.append(rep.empirical_c)
    base = vals[0]
    assert all(abs(v - base) <= 0.10 * base for v in vals)


def test_nondegeneracy_identity_is_degenerate():
    g = make_grid(1.0, 8)
    rep = nondegeneracy_constant(DiscreteOperator.identity(g), 3.0)
    assert rep.empirical_c == 0.0


def test_nondegeneracy_rejects_small_shift():
    g = make_grid(1.0, 8)
    with pytest.raises(DomainError):
        nondegeneracy_constant(DiscreteOperator.hilbert_op(g), 1.0)


# --- shifted-interval verification -------------------------------------------


def test_shift_ap2_trivial_weight():
    g = make_grid(1.0, 9)
    T = DiscreteOperator.hilbert_op(g)
    rep = verify_shift_ap2(T, weight_from_dsl("const:c=1", g), 3.0)
    assert rep.passed
    # for the constant weight the shifted product is exactly 1 on every pair
    worst_lhs = rep.worst_ratio * (2.0 * rep.m**2 / rep.c**2)
    assert worst_lhs == pytest.approx(1.0, rel=1e-12)


def test_shift_ap2_step_weight():
    g = make_grid(1.0, 10)
    T = DiscreteOperator.hilbert_op(g)
    rep = verify_shift_ap2(T, weight_from_dsl("step:K=4", g), 3.0)
    assert rep.passed
    assert rep.worst_ratio < 1.0
    assert rep.ap2 == pytest.approx(1.5625, rel=1e-9)


def test_shift_ap2_rejects_degenerate():
    g = make_grid(1.0, 8)
    with pytest.raises(PreconditionError):
        verify_shift_ap2(DiscreteOperator.identity(g), weight_from_dsl("const:c=1", g), 3.0)


def test_mbe_instantiation():
    g = make_grid(1.0, 10)
    T = DiscreteOperator.hilbert_op(g)
    for dsl in ("const:c=1", "step:K=4", "power:a=0.25", "power:a=0.5", "power:a=-0.5"):
        w = weight_from_dsl(dsl, g)
        rep = verify_shift_ap2(T, w, 3.0)
        assert mbe_worst_ratio(w, 3.0) <= 2.0 * rep.m**2 / rep.c**2
