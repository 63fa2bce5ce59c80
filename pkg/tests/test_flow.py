import math

import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import errors
from lorenzlab import flow as fl
from lorenzlab import measures as ms
from lorenzlab.maps import SectionPoint, poincare_map_batch
from lorenzlab.rng import stream


def test_linear_flow_identity(model):
    p = fl.FlowPoint(0.3, -0.2, 1.0)
    q = fl.linear_flow(model, p, 0.0)
    assert (q.x, q.y, q.z) == (p.x, p.y, p.z)


def test_linear_flow_exit_is_cusp_point(model):
    x0, y0 = 0.25, 0.37
    te = fl.cube_exit_time(model, x0)
    assert te == pytest.approx(math.log(4) / 10, abs=1e-12)
    q = fl.linear_flow(model, fl.FlowPoint(x0, y0, 1.0), te)
    assert q.x == pytest.approx(1.0, abs=1e-12)
    assert q.y == pytest.approx(y0 * x0**model.beta, abs=1e-12)
    assert q.z == pytest.approx(x0**model.alpha, abs=1e-12)


def test_roof_values(model):
    assert ll.roof(model, 0.25) == pytest.approx(math.log(4) / 10 + model.outer_travel_time)
    assert ll.roof(model, 0.5) == pytest.approx(math.log(2) / 10 + model.outer_travel_time)
    assert ll.roof(model, -0.5) == ll.roof(model, 0.5)
    # minimum at |x| = 1/2, divergence at the singular leaf
    xs = np.linspace(-0.5, 0.5, 1001)[1:-1]
    xs = xs[xs != 0]
    vals = fl.roof_batch(model, xs)
    assert vals.min() >= ll.roof(model, 0.5) - 1e-12
    assert ll.roof(model, 1e-12) > 2.0
    with pytest.raises(errors.SingularInput):
        ll.roof(model, 0.0)


def test_roof_two_sided_log_bound(model):
    rf = fl.RoofFunction.from_model(model)
    k, c = rf.bound_constants
    xs = np.geomspace(1e-9, 0.5, 1000)
    t = rf.batch(xs)
    lower = -np.log(xs) / k - c
    upper = -k * np.log(xs) + c
    assert np.all(t >= lower - 1e-12)
    assert np.all(t <= upper + 1e-12)


def test_advance_identity_and_single_crossing(model):
    s = fl.SuspensionState(SectionPoint(0.25, 0.1), 0.0)
    assert fl.advance(model, s, 0.0) == s
    r = ll.roof(model, 0.25)
    s2 = fl.advance(model, s, r)
    q = ll.poincare_map(model, SectionPoint(0.25, 0.1))
    assert s2.base == q
    assert s2.phase == pytest.approx(0.0, abs=1e-12)


def test_advance_matches_birkhoff_sum(model):
    x, y = 0.31, -0.05
    s = fl.SuspensionState(SectionPoint(x, y), 0.0)
    total = 0.0
    xs, ys = np.array([x]), np.array([y])
    for _ in range(5):
        total += float(fl.roof_batch(model, xs)[0])
        xs, ys = poincare_map_batch(model, xs, ys)
    s2 = fl.advance(model, s, total)
    assert s2.base.x == pytest.approx(float(xs[0]), abs=1e-9)
    assert s2.base.y == pytest.approx(float(ys[0]), abs=1e-9)
    assert s2.phase == pytest.approx(0.0, abs=1e-9)


def test_advance_flow_property(model):
    rng = stream(4, 0)
    for _ in range(30):
        x = float(rng.uniform(0.02, 0.5)) * (1 if rng.random() < 0.5 else -1)
        y = float(rng.uniform(-0.5, 0.5))
        a = float(rng.uniform(0, 1.0))
        b = float(rng.uniform(0, 1.0))
        s = fl.SuspensionState(SectionPoint(x, y), 0.0)
        one = fl.advance(model, fl.advance(model, s, a), b)
        two = fl.advance(model, s, a + b)
        assert one.base.x == pytest.approx(two.base.x, abs=1e-9)
        assert one.base.y == pytest.approx(two.base.y, abs=1e-9)
        assert one.phase == pytest.approx(two.phase, abs=1e-9)


def test_embed_phases(model):
    s0 = fl.SuspensionState(SectionPoint(0.25, 0.37), 0.0)
    p0 = fl.embed(model, s0)
    assert (p0.x, p0.y, p0.z) == (0.25, 0.37, 1.0)
    te = fl.cube_exit_time(model, 0.25)
    pe = fl.embed(model, fl.SuspensionState(SectionPoint(0.25, 0.37), te))
    assert pe.x == pytest.approx(1.0)
    assert pe.y == pytest.approx(0.37 * 0.25**model.beta)
    assert pe.z == pytest.approx(0.25**model.alpha)
    mid = fl.embed(model, fl.SuspensionState(SectionPoint(0.25, 0.37), te + 0.05))
    assert mid.outer
    assert mid.remaining == pytest.approx(model.outer_travel_time - 0.05)
    assert max(abs(p0.x), abs(p0.y), abs(p0.z)) <= 1.0


def test_embed_bilipschitz_sampled(model):
    # distortion along each single coordinate stays below 10 for |x| >= 0.1
    # (x-stretch <= |x|**-0.95 and flow speed <= lambda1); joint perturbations
    # add the two contributions
    rng = stream(5, 0)
    worst_single = 0.0
    worst_joint = 0.0
    for _ in range(500):
        x = float(rng.uniform(0.1, 0.5)) * (1 if rng.random() < 0.5 else -1)
        y = float(rng.uniform(-0.5, 0.5))
        tc = fl.cube_exit_time(model, x)
        ph = float(rng.uniform(0, 0.95 * tc))
        a = fl.embed(model, fl.SuspensionState(SectionPoint(x, y), ph))

        def ratio(dx, dy, dp):
            ph2 = min(max(ph + dp, 0.0), 0.95 * tc)
            b = fl.embed(model, fl.SuspensionState(SectionPoint(x + dx, y + dy), ph2))
            num = max(abs(a.x - b.x), abs(a.y - b.y), abs(a.z - b.z))
            den = max(abs(dx), abs(dy), abs(ph2 - ph))
            return num / den if den > 0 else 0.0

        h = 1e-5
        worst_single = max(worst_single, ratio(h, 0, 0), ratio(0, h, 0), ratio(0, 0, h))
        worst_joint = max(worst_joint, ratio(h, h, h))
    assert worst_single <= 10.0
    assert worst_joint <= 20.0


def test_embed_injective_on_leaves(model):
    rng = stream(6, 0)
    pts = []
    for _ in range(200):
        x = float(rng.uniform(0.05, 0.5)) * (1 if rng.random() < 0.5 else -1)
        y = float(rng.uniform(-0.5, 0.5))
        ph = float(rng.uniform(0, 0.9)) * fl.cube_exit_time(model, x)
        p = fl.embed(model, fl.SuspensionState(SectionPoint(x, y), ph))
        pts.append((round(p.x, 12), round(p.y, 12), round(p.z, 12)))
    assert len(set(pts)) == len(pts)


def test_mean_return_time_uniform(model):
    # closed form for the uniform density: (1 + ln 2)/lambda1 + outer time
    dens = ms.Density1D.uniform(4096)
    got = fl.mean_return_time(model, dens)
    assert got == pytest.approx((1 + math.log(2)) / 10 + model.outer_travel_time, abs=1e-10)


def test_mean_return_time_outer_shift(model):
    from dataclasses import replace

    dens = ms.Density1D.uniform(512)
    base = fl.mean_return_time(model, dens)
    shifted_model = replace(model, outer_travel_time=model.outer_travel_time + 0.7)
    shifted = fl.mean_return_time(shifted_model, dens)
    assert shifted - base == pytest.approx(0.7, abs=1e-12)


def test_mean_return_time_grid_stability(model, density_1024):
    v1 = fl.mean_return_time(model, density_1024)
    from lorenzlab.maps import one_d_map_batch

    op = ms.ulam_operator(lambda x: one_d_map_batch(model, x), 2048)
    d2 = ms.invariant_density(op)
    v2 = fl.mean_return_time(model, d2)
    assert abs(v2 - v1) / v1 < 1e-3


def test_mean_return_time_rejects_singular_concentration(model):
    n = 512
    vals = np.zeros(n)
    vals[n // 2 - 1: n // 2 + 1] = n / 2.0  # all mass hugging the singular leaf
    with pytest.raises(errors.NonIntegrable):
        fl.mean_return_time(model, ms.Density1D(vals))


def test_birkhoff_average_converges_to_mean_return(model, density_1024):
    target = fl.mean_return_time(model, density_1024)
    avg = fl.birkhoff_roof_average(model, 0.2137, 0.05, 100_000)
    assert avg == pytest.approx(target, rel=0.02)


def test_trajectory_csv_format(model):
    s0 = fl.SuspensionState(SectionPoint(0.25, 0.1), 0.0)
    rows = fl.trajectory_csv_rows(model, s0, dt=0.05, n_steps=10)
    assert rows[0] == "step,x,y,phase,cumulative_time"
    assert len(rows) == 12
    first = rows[1].split(",")
    assert first[0] == "0"
    assert float(first[1]) == 0.25
    # states stay consistent with direct advance
    s5 = fl.advance(model, s0, 5 * 0.05)
    row5 = rows[6].split(",")
    assert float(row5[1]) == pytest.approx(s5.base.x, abs=1e-9)
    assert float(row5[3]) == pytest.approx(s5.phase, abs=1e-9)
