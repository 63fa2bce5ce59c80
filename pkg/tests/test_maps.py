import math

import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import errors
from lorenzlab import maps as mp


def test_validate_reference_model():
    m = ll.validate(ll.reference_params())
    assert m.alpha == pytest.approx(0.6)
    assert m.beta == pytest.approx(1.5)
    assert m.leaf_contraction == pytest.approx(2.0**-1.5, abs=1e-12)


def test_validate_rejects_classical_eigenvalues():
    # -lambda3 = 8/3 sits below lambda1/2 for the classical values
    p = mp.ModelParams(lambda1=11.83, lambda2=-22.83, lambda3=-8.0 / 3.0, theta=1.4)
    with pytest.raises(errors.EigenvalueOrderViolation):
        ll.validate(p)


def test_validate_rejects_large_theta():
    p = mp.ModelParams(lambda1=10, lambda2=-15, lambda3=-6, theta=2.0)
    # 2 * (1/2)^0.6 = 1.3195 > 1
    with pytest.raises(errors.ThetaTooLarge):
        ll.validate(p)


def test_validate_rejects_small_theta():
    p = mp.ModelParams(lambda1=10, lambda2=-15, lambda3=-6, theta=0.8)
    with pytest.raises(errors.ThetaTooSmall):
        ll.validate(p)


def test_validate_rejects_overlapping_leaf_images():
    p = mp.ModelParams(lambda1=10, lambda2=-15, lambda3=-6, theta=1.4,
                       g_offset_plus=-0.05, g_offset_minus=0.05)
    with pytest.raises(errors.LeafImagesOverlap):
        ll.validate(p)


def test_validate_rejects_image_escape():
    p = mp.ModelParams(lambda1=10, lambda2=-15, lambda3=-6, theta=1.4,
                       g_offset_plus=-0.45, g_offset_minus=0.45)
    with pytest.raises(errors.LeafImagesOverlap):
        ll.validate(p)


def test_one_d_map_values(model):
    assert ll.one_d_map(model, 0.25) == pytest.approx(1.4 * 0.25**0.6 - 0.5, abs=1e-12)
    assert ll.one_d_map(model, 0.25) == pytest.approx(0.109385, abs=1e-6)
    # one-sided limits at the singularity
    assert ll.one_d_map(model, 1e-13) == pytest.approx(-0.5, abs=1e-6)
    assert ll.one_d_map(model, -1e-13) == pytest.approx(0.5, abs=1e-6)


def test_one_d_map_odd_symmetry(model):
    xs = np.linspace(1e-6, 0.5, 500)
    f = mp.one_d_map_batch(model, xs)
    g = mp.one_d_map_batch(model, -xs)
    assert np.allclose(f, -g, atol=1e-14)


def test_one_d_map_singularity(model):
    with pytest.raises(errors.SingularInput):
        ll.one_d_map(model, 0.0)
    assert ll.one_d_map_total(model, 0.0) == -0.5


def test_one_d_map_image_inside_interval(model):
    xs = np.linspace(-0.5, 0.5, 20001)
    xs = xs[xs != 0]
    img = mp.one_d_map_batch(model, xs)
    assert img.min() > -0.5 and img.max() < 0.5


def test_one_d_derivative(model):
    assert ll.one_d_derivative(model, 0.5) == pytest.approx(1.4 * 0.6 * 2**0.4, abs=1e-12)
    assert ll.one_d_derivative(model, 0.5) > 1
    # blows up at the singular line
    assert ll.one_d_derivative(model, 1e-12) > 1e4
    # monotone decreasing in |x| on each branch
    xs = np.linspace(1e-4, 0.5, 1000)
    d = mp.one_d_derivative_batch(model, xs)
    assert np.all(np.diff(d) < 0)


def test_derivative_exceeds_one_on_dense_grid(model):
    xs = np.linspace(-0.5, 0.5, 40001)
    xs = xs[xs != 0]
    assert mp.one_d_derivative_batch(model, xs).min() > 1


def test_poincare_map_example(model):
    q = ll.poincare_map(model, ll.SectionPoint(0.25, 0.1))
    assert q.x == pytest.approx(0.109385, abs=1e-6)
    assert q.y == pytest.approx(-0.2375, abs=1e-12)


def test_poincare_map_preserves_leaves(model):
    # first coordinate must be exactly independent of y
    for x in (-0.3, 0.17, 0.49):
        q1 = ll.poincare_map(model, ll.SectionPoint(x, -0.5))
        q2 = ll.poincare_map(model, ll.SectionPoint(x, 0.5))
        assert q1.x == q2.x


def test_poincare_map_stays_in_square(model):
    rng = np.random.default_rng(0)
    xs = rng.uniform(-0.5, 0.5, 20000)
    ys = rng.uniform(-0.5, 0.5, 20000)
    fx, fy = mp.poincare_map_batch(model, xs, ys)
    assert np.abs(fx).max() < 0.5
    assert np.abs(fy).max() <= 0.5


def test_leaf_contraction_bound(model):
    rng = np.random.default_rng(1)
    xs = rng.uniform(-0.5, 0.5, 5000)
    y1 = rng.uniform(-0.5, 0.5, 5000)
    y2 = rng.uniform(-0.5, 0.5, 5000)
    _, g1 = mp.poincare_map_batch(model, xs, y1)
    _, g2 = mp.poincare_map_batch(model, xs, y2)
    lhs = np.abs(g1 - g2)
    rhs = model.leaf_contraction * np.abs(y1 - y2)
    assert np.all(lhs <= rhs + 1e-14)


def test_branch_images_disjoint(model):
    lam = model.leaf_contraction
    plus = (model.g_offset_plus - lam / 2, model.g_offset_plus + lam / 2)
    minus = (model.g_offset_minus - lam / 2, model.g_offset_minus + lam / 2)
    assert plus[1] < minus[0] or minus[1] < plus[0]
    rng = np.random.default_rng(2)
    xs = rng.uniform(1e-6, 0.5, 4000)
    ys = rng.uniform(-0.5, 0.5, 4000)
    _, gp = mp.poincare_map_batch(model, xs, ys)
    _, gm = mp.poincare_map_batch(model, -xs, ys)
    assert gp.max() < gm.min()  # with default offsets the x>0 branch sits below


def test_d_poincare_entries(model):
    d = ll.d_poincare(model, ll.SectionPoint(0.25, 0.1))
    assert d[0, 0] == pytest.approx(1.4 * 0.6 * 0.25**-0.4, abs=1e-12)
    assert d[0, 0] == pytest.approx(1.462525, abs=1e-6)
    assert d[0, 1] == 0.0
    assert d[1, 1] == pytest.approx(0.125, abs=1e-12)
    assert d[1, 1] < 1  # leaf direction contracts


def test_d_poincare_matches_finite_differences(model):
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(100):
        x = rng.uniform(0.05, 0.45) * rng.choice([-1, 1])
        y = rng.uniform(-0.45, 0.45)
        d = ll.d_poincare(model, ll.SectionPoint(x, y))
        fx1, fy1 = mp.poincare_map_batch(model, np.array([x + h, x]), np.array([y, y + h]))
        fx0, fy0 = mp.poincare_map_batch(model, np.array([x - h, x]), np.array([y, y - h]))
        num = np.array([
            [(fx1[0] - fx0[0]) / (2 * h), (fx1[1] - fx0[1]) / (2 * h)],
            [(fy1[0] - fy0[0]) / (2 * h), (fy1[1] - fy0[1]) / (2 * h)],
        ])
        assert np.allclose(d, num, atol=1e-6 * max(1.0, abs(d[0, 0])))


def test_axiom_check_reference(model):
    from lorenzlab.maps import one_d_derivative_batch, one_d_map_batch, poincare_map_batch

    rep = ll.axiom_check(
        lambda x: one_d_map_batch(model, x),
        lambda x, y: poincare_map_batch(model, x, y)[1],
        samples=20000,
        t_prime=lambda x: one_d_derivative_batch(model, x),
    )
    assert rep.all_pass
    assert rep.leaf_lambda <= model.leaf_contraction + 1e-9
    assert rep.min_T_prime == pytest.approx(1.4 * 0.6 * 2**0.4, rel=1e-3)
    # branch-wise monotone variation equals the endpoint-difference value
    expected_var = 2.0 / (1.4 * 0.6 * 2**0.4)
    assert rep.var_inv_T_prime == pytest.approx(expected_var, rel=1e-2)


def test_axiom_check_skew_oracle():
    from lorenzlab.measures import doubling_skew

    sk = doubling_skew(contraction=1.0 / 3.0)
    rep = ll.axiom_check(sk.t, sk.g, samples=5000, t_prime=sk.t_prime)
    assert rep.all_pass
    assert rep.leaf_lambda == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert rep.lipschitz_k == pytest.approx(0.0, abs=1e-9)
    assert rep.var_inv_T_prime == pytest.approx(0.0, abs=1e-12)


def test_axiom_check_fails_for_expanding_fiber():
    rep = ll.axiom_check(
        lambda x: np.asarray(x),
        lambda x, y: 1.2 * np.asarray(y),
        samples=2000,
    )
    assert not rep.pass_leaf_contraction


def test_params_round_trip():
    p = mp.ModelParams(lambda1=10.0, lambda2=-15.0, lambda3=-6.0, theta=1.4,
                       sigma=0.87654321, g_offset_plus=-0.2512345,
                       g_offset_minus=0.26, outer_travel_time=0.1)
    text = mp.params_to_text(p)
    q = mp.params_from_text(text)
    assert q == p  # exact decimal round trip


def test_params_from_text_errors():
    with pytest.raises(errors.InvalidParameter):
        mp.params_from_text("lambda1 = 10\nlambda2 = -15\n")  # missing keys
    with pytest.raises(errors.InvalidParameter):
        mp.params_from_text("lambda1 = ten\nlambda2=-15\nlambda3=-6\ntheta=1.4")
