import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import errors
from lorenzlab import measures as ms
from lorenzlab.maps import one_d_map_batch, poincare_map_batch
from lorenzlab.rng import stream

from util_transport import w1_exact_2d


# ---------------------------------------------------------------------------
# Ulam operator and invariant density


def test_ulam_doubling_rows():
    op = ms.ulam_operator(ms.doubling_map_1d, 64)
    dense = op.matrix.toarray()
    for i in range(64):
        nz = np.nonzero(dense[i])[0]
        assert nz.size == 2
        assert np.allclose(dense[i, nz], 0.5)


def test_ulam_identity():
    op = ms.ulam_operator(lambda x: x, 64)
    assert np.allclose(op.matrix.toarray(), np.eye(64))


def test_ulam_rows_stochastic(model):
    op = ms.ulam_operator(lambda x: one_d_map_batch(model, x), 256)
    rs = np.asarray(op.matrix.sum(axis=1)).ravel()
    assert np.abs(rs - 1).max() < 1e-12


def test_ulam_singular_cells_spread_to_endpoints(model):
    n = 1024
    op = ms.ulam_operator(lambda x: one_d_map_batch(model, x), n)
    dense_row = op.matrix[n // 2].toarray().ravel()  # first cell right of 0
    # image of (0, w) is an interval attached to the left endpoint -1/2
    assert dense_row[0] > 0
    assert dense_row[: n // 8].sum() > 0.99
    row_left = op.matrix[n // 2 - 1].toarray().ravel()
    assert row_left[-1] > 0  # mirrored branch lands at +1/2


def test_ulam_against_monte_carlo_pushforward(model):
    n = 1024
    rng = stream(123, 0)
    pts = rng.uniform(-0.5, 0.5, 1_000_000)
    hist = np.histogram(one_d_map_batch(model, pts), bins=n, range=(-0.5, 0.5))[0] / pts.size
    op = ms.ulam_operator(lambda x: one_d_map_batch(model, x), n)
    pushed = op.push(ms.Density1D.uniform(n)).values / n
    assert 0.5 * np.abs(pushed - hist).sum() < 0.02


def test_invariant_density_doubling_uniform():
    op = ms.ulam_operator(ms.doubling_map_1d, 512)
    dens = ms.invariant_density(op)
    assert np.abs(dens.values - 1).max() < 1e-3


def test_invariant_density_tent_uniform():
    op = ms.ulam_operator(ms.tent_map_1d, 512)
    dens = ms.invariant_density(op)
    assert np.abs(dens.values - 1).max() < 1e-3


def test_invariant_density_reference(model, ulam_1024, density_1024):
    dens = density_1024
    assert dens.mass() == pytest.approx(1.0, abs=1e-12)
    resid = np.abs(ulam_1024.push(dens).values - dens.values).sum() / 1024
    assert resid < 1e-10
    assert dens.values.max() < 5.0  # bounded density
    # BV stable under refinement
    op2 = ms.ulam_operator(lambda x: one_d_map_batch(model, x), 2048)
    d2 = ms.invariant_density(op2)
    ratio = ms.variation(d2) / ms.variation(dens)
    assert 0.5 < ratio < 2.0


def test_invariant_density_no_convergence(ulam_1024):
    with pytest.raises(errors.NoConvergence):
        ms.invariant_density(ulam_1024, tol=1e-10, max_iter=2)


# ---------------------------------------------------------------------------
# variation


def test_variation_constant_zero():
    assert ms.variation(ms.Density1D.uniform(128)) == 0.0


def test_variation_indicator_interior_jump():
    n = 128
    vals = np.where(ms.cell_centers(n) >= 0, 1.0, 0.0)
    assert ms.variation(ms.Density1D(vals)) == pytest.approx(1.0)


def test_variation_inverse_derivative_branchwise(model):
    # 1/T' is monotone per branch: variation equals endpoint oscillations
    xs = np.linspace(1e-9, 0.5, 200_000)
    inv = 1.0 / (model.theta * model.alpha * xs ** (model.alpha - 1))
    grid_var = 2 * np.abs(np.diff(inv)).sum()
    endpoint = 2 * (1.0 / (model.theta * model.alpha * 2 ** (1 - model.alpha)))
    assert grid_var == pytest.approx(endpoint, rel=1e-3)


# ---------------------------------------------------------------------------
# Wasserstein distances


def atoms(*pairs):
    pos = np.array([p for p, _ in pairs], dtype=float)
    w = np.array([w for _, w in pairs], dtype=float)
    return pos, w


def test_w1_atom_pair():
    assert ms.w1_1d(atoms((0.2, 1.0)), atoms((0.5, 1.0))) == pytest.approx(0.3)


def test_w1_uniform_vs_center_atom():
    assert ms.w1_1d(ms.Density1D.uniform(64), atoms((0.0, 1.0))) == pytest.approx(0.25)


def test_w1_mass_mismatch():
    with pytest.raises(errors.MassMismatch):
        ms.w1_1d(atoms((0.0, 1.0)), atoms((0.0, 0.5)))


def test_w1_metric_axioms_random():
    rng = stream(7, 0)
    for _ in range(200):
        k = int(rng.integers(2, 12))
        pos = rng.uniform(-0.5, 0.5, (3, k))
        w = rng.random((3, k))
        w /= w.sum(axis=1, keepdims=True)
        trip = [(pos[i], w[i]) for i in range(3)]
        d01 = ms.w1_1d(trip[0], trip[1])
        d10 = ms.w1_1d(trip[1], trip[0])
        d02 = ms.w1_1d(trip[0], trip[2])
        d12 = ms.w1_1d(trip[1], trip[2])
        assert d01 >= 0
        assert d01 == pytest.approx(d10, abs=1e-12)
        assert ms.w1_1d(trip[0], trip[0]) == 0
        assert d02 <= d01 + d12 + 1e-12


def test_w1_convex_combination_inequality():
    rng = stream(8, 0)
    for _ in range(100):
        k = int(rng.integers(2, 10))
        pos = rng.uniform(-0.5, 0.5, (4, k))
        w = rng.random((4, k))
        w /= w.sum(axis=1, keepdims=True)
        a = float(rng.random())
        b = 1 - a
        mix1 = (np.concatenate([pos[0], pos[1]]), np.concatenate([a * w[0], b * w[1]]))
        mix2 = (np.concatenate([pos[2], pos[3]]), np.concatenate([a * w[2], b * w[3]]))
        lhs = ms.w1_1d(mix1, mix2)
        rhs = a * ms.w1_1d((pos[0], w[0]), (pos[2], w[2])) + b * ms.w1_1d((pos[1], w[1]), (pos[3], w[3]))
        assert lhs <= rhs + 1e-12


def test_w1_zero_total_mass_test_function():
    # against the zero measure the optimal test function is identically 1
    val = ms.w1_zero(ms.Density1D.uniform(64), (np.array([]), np.array([])))
    assert val == pytest.approx(1.0, abs=1e-9)


def test_w1_zero_equal_mass_pair():
    val = ms.w1_zero(atoms((0.2, 1.0)), atoms((0.5, 1.0)))
    assert val == pytest.approx(0.3, abs=1e-9)


def test_w1_zero_dominates_mass_gap():
    rng = stream(9, 0)
    for _ in range(100):
        k = int(rng.integers(1, 10))
        mu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        nu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        gap = abs(mu[1].sum() - nu[1].sum())
        assert ms.w1_zero(mu, nu) >= gap - 1e-9


def test_w1_zero_at_most_w1_for_probabilities():
    rng = stream(10, 0)
    for _ in range(50):
        k = int(rng.integers(2, 8))
        mu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        nu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        mu = (mu[0], mu[1] / mu[1].sum())
        nu = (nu[0], nu[1] / nu[1].sum())
        assert ms.w1_zero(mu, nu) <= ms.w1_1d(mu, nu) + 1e-9


def test_fiber_contraction_remark(model):
    # W1_0(push mu, push nu) <= |mass gap| + lam * W1_0(mu, nu) on one leaf
    rng = stream(11, 0)
    lam = model.leaf_contraction
    for _ in range(25):
        x0 = float(rng.uniform(0.05, 0.5)) * (1 if rng.random() < 0.5 else -1)
        k = int(rng.integers(2, 8))
        mu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        nu = (rng.uniform(-0.5, 0.5, k), rng.random(k))
        _, push_mu = poincare_map_batch(model, np.full(k, x0), mu[0])
        _, push_nu = poincare_map_batch(model, np.full(k, x0), nu[0])
        lhs = ms.w1_zero((push_mu, mu[1]), (push_nu, nu[1]))
        gap = abs(mu[1].sum() - nu[1].sum())
        rhs = gap + lam * ms.w1_zero(mu, nu)
        assert lhs <= rhs + 1e-9


# ---------------------------------------------------------------------------
# leaf families


def test_disintegrate_product_uniform():
    joint = np.full((32, 16), 1.0 / (32 * 16))
    fam = ms.disintegrate(joint)
    assert np.allclose(fam.marginal.values, 1.0)
    assert np.allclose(fam.leaf_masses, 1.0 / 16)
    assert fam.total_mass() == pytest.approx(1.0)


def test_disintegrate_single_column():
    joint = np.zeros((32, 16))
    joint[5] = 1.0 / 16
    fam = ms.disintegrate(joint)
    marg = fam.marginal.values
    assert marg[5] == pytest.approx(32.0)
    assert np.sum(marg) == pytest.approx(32.0)


def test_disintegrate_reassembly_exact():
    # power-of-two grids scale by an exponent shift: bitwise round trip
    rng = stream(12, 0)
    joint = rng.random((32, 16))
    fam = ms.disintegrate(joint)
    assert np.array_equal(fam.to_joint(), joint)


def test_push_forward_conserves_mass(model, srb_256):
    pushed = ms.push_forward(model, srb_256)
    assert pushed.total_mass() == pytest.approx(srb_256.total_mass(), abs=1e-9)


def test_push_forward_marginal_is_ulam_fixed_point(model, srb_256):
    pushed = ms.push_forward(model, srb_256)
    drift = np.abs(pushed.marginal.values - srb_256.marginal.values).max()
    assert drift < 1e-6


def test_push_forward_self_consistency(model, srb_512):
    # the converged family is its own pushforward, leaf-wise
    pushed = ms.push_forward(model, srb_512)
    la = srb_512.leaf_masses
    lb = pushed.leaf_masses
    # flat-norm distance leaf by leaf, sampled columns
    cols = np.arange(0, 512, 16)
    pos = ms.cell_centers(512)
    worst = max(ms.w1_zero((pos, la[j]), (pos, lb[j])) for j in cols)
    assert worst < 1e-3


def test_push_forward_leaf_contraction_with_grid_tolerance(model):
    # two equal-mass single-column families: leaf-wise W1 contracts by lam + 2/M
    m_cells = 128
    rng = stream(13, 0)
    lam = model.leaf_contraction
    for trial in range(5):
        j = int(rng.integers(10, 110))
        prof_a = rng.random(m_cells)
        prof_b = rng.random(m_cells)
        prof_a /= prof_a.sum() / 128.0
        prof_b /= prof_b.sum() / 128.0
        base = np.zeros((128, m_cells))
        fam_a = ms.LeafFamily(base.copy())
        fam_a.leaf_masses[j] = prof_a
        fam_b = ms.LeafFamily(base.copy())
        fam_b.leaf_masses[j] = prof_b
        pa = ms.push_forward(model, fam_a)
        pb = ms.push_forward(model, fam_b)
        pos = ms.cell_centers(m_cells)
        before = ms.w1_1d((pos, prof_a), (pos, prof_b))
        mass_a = pa.leaf_masses.sum(axis=1)
        for c in np.flatnonzero(mass_a > 1e-9):
            la = pa.leaf_masses[c] / pa.leaf_masses[c].sum()
            lb = pb.leaf_masses[c] / pb.leaf_masses[c].sum()
            after = ms.w1_1d((pos, la), (pos, lb))
            assert after <= lam * before + 2.0 / m_cells


def test_srb_iterate_zero_steps_is_product(model):
    fam = ms.srb_iterate(model, 0, 128, 64)
    row = fam.leaf_masses / fam.marginal.values[:, None]
    assert np.allclose(row, 1.0 / 64)


def test_srb_iterates_cauchy(model):
    fam = ms.srb_iterate(model, 0, 256, 256)
    dists = []
    for _ in range(8):
        nxt = ms.push_forward(model, fam)
        dists.append(ms.prod_bound(fam, nxt))
        fam = nxt
    logs = np.log(np.array(dists))
    slope = np.polyfit(np.arange(8), logs, 1)[0]
    assert slope < -0.3  # geometric decay of successive distances


def test_prod_bound_identical_zero(srb_256):
    assert ms.prod_bound(srb_256, srb_256) == 0.0


def test_prod_bound_mass_mismatch(srb_256):
    bigger = ms.LeafFamily(srb_256.leaf_masses * 1.5)
    with pytest.raises(errors.MassMismatch):
        ms.prod_bound(srb_256, bigger)


def test_prod_bound_marginal_term():
    # same leaves, marginals differing by TV mass delta -> bound <= delta
    n, m = 64, 32
    base = ms.LeafFamily.lebesgue(n, m)
    vals = np.ones(n)
    vals[: n // 2] += 0.1
    vals[n // 2:] -= 0.1
    other = ms.LeafFamily.product(ms.Density1D(vals), m)
    delta = np.abs(vals - 1.0).sum() / n
    bound = ms.prod_bound(base, other)
    assert bound == pytest.approx(delta, abs=1e-12)


def test_prod_bound_dominates_exact_w1():
    rng = stream(14, 0)
    n = 16
    xs = ms.cell_centers(n)
    for _ in range(50):
        a = rng.random((n, n)) ** 2
        b = rng.random((n, n)) ** 2
        a /= a.sum()
        b /= b.sum()
        fam_a = ms.disintegrate(a)
        fam_b = ms.disintegrate(b)
        bound = ms.prod_bound(fam_a, fam_b)
        exact = w1_exact_2d(a, b, xs, xs)
        assert exact <= bound + 1e-9


# ---------------------------------------------------------------------------
# leaf-wise variation and goodness


def test_var_g_product_family_zero():
    fam = ms.LeafFamily.lebesgue(64, 32)
    assert ms.var_G(fam).variation == pytest.approx(0.0, abs=1e-12)


def test_var_g_one_push_satisfies_ly_bound(model):
    # Lebesgue has var 0 and unit flat marginal; one pushforward obeys the
    # one-step inequality 2 sup f + var f + sup f * var(1/T') + 2k sup f
    fam = ms.LeafFamily.lebesgue(128, 128)
    pushed = ms.push_forward(model, fam)
    k, lam, var_inv = ms.model_goodness_constants(model)
    ly = 2.0 + 0.0 + var_inv + 2 * k  # sup f0 = 1, Var f0 = 0, Var G0 = 0
    measured = ms.var_G(pushed).variation
    assert measured <= ly + 1e-6


def test_var_g_iterates_below_budget(model):
    fam = ms.LeafFamily.lebesgue(128, 128)
    variations = [0.0]
    margs = [ms.variation(fam.marginal)]
    for _ in range(8):
        fam = ms.push_forward(model, fam)
        variations.append(ms.var_G(fam).variation)
        margs.append(ms.variation(fam.marginal))
    budget = ms.goodness_budget(model, max(margs), variations[0])
    assert max(variations) <= budget
    # the elementary recursion bound a_{n+1} <= lam a_n + c gives
    # sup a_n <= max(a_0, c / (1 - lam)) for the measured c
    _, lam, _ = ms.model_goodness_constants(model)
    arr = np.array(variations)
    cs = arr[1:] - lam * arr[:-1]
    c = cs.max()
    assert arr.max() <= max(arr[0], c / (1 - lam)) + 1e-12


def test_leaf_mass_bounded_by_one_plus_variation(model):
    fam = ms.LeafFamily.lebesgue(128, 128)
    for _ in range(4):
        fam = ms.push_forward(model, fam)
    rep = ms.var_G(fam)
    assert fam.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert fam.marginal.values.max() <= 1.0 + rep.variation + 1e-9


def test_lipschitz_restrict_constant_observable(srb_256):
    rep = ms.lipschitz_restrict(srb_256, lambda x, y: np.ones_like(x), 1.0, goodness=5.0)
    assert np.allclose(rep.family.leaf_masses, srb_256.leaf_masses)
    assert rep.ok


def test_lipschitz_restrict_affine_observable(model, srb_256):
    good = ms.var_G(srb_256).variation
    rep = ms.lipschitz_restrict(srb_256, lambda x, y: x + 0.5, 1.0, goodness=good)
    assert rep.ok
    assert rep.marginal_variation <= 3 * good + 1.0 + 1e-9


def test_lipschitz_restrict_leafwise_constant(srb_256):
    f = lambda x, y: np.abs(x) + 0.25
    rep = ms.lipschitz_restrict(srb_256, f, 1.0, goodness=5.0)
    xs = ms.cell_centers(srb_256.n_leaves)
    expected = (np.abs(xs) + 0.25) * srb_256.marginal.values
    assert np.allclose(rep.family.marginal.values, expected, atol=1e-12)


def test_lipschitz_restrict_rejects_negative(srb_256):
    with pytest.raises(errors.NegativeObservable):
        ms.lipschitz_restrict(srb_256, lambda x, y: x, 1.0, goodness=1.0)
