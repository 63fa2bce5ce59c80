"""Experiment layer: correlation decay, hitting and recurrence times, dimension.

All Monte Carlo routines are vectorised over starts and draw from counter-based
streams keyed by (seed, stream), so results are reproducible and independent of
how work is partitioned.  Hitting and recurrence engines iterate compacted
arrays of the still-active orbits; flow variants detect ball crossings in
closed form on each coordinatewise-exponential segment of the suspension.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import math
import numpy as np

from . import maps as _maps
from . import measures as _measures
from .errors import (
    DivergentIntegral,
    EmptyBall,
    InsufficientSamples,
    NegativeObservable,
    NeverLeft,
    TooCensored,
)
from .flow import _neglog_cell_integrals, mean_return_time, roof_batch
from .maps import SectionPoint, ValidatedModel
from .measures import Density1D, LeafFamily, SkewProductMap, cell_edges, variation
from .rng import stream

__all__ = [
    "DecaySeries",
    "HittingSample",
    "DimensionEstimate",
    "ExactDimensionResult",
    "SaussolReport",
    "correlation_mc",
    "correlation_measure",
    "hitting_time_map",
    "hitting_times_map",
    "hitting_time_flow",
    "hitting_times_flow",
    "recurrence_time_map",
    "recurrence_times_map",
    "recurrence_time_flow",
    "local_dimension",
    "family_ball_mass",
    "flow_ball_mass",
    "loglaw_slope",
    "exact_dimension",
    "saussol_check",
    "sample_family_points",
    "map_batch",
    "LoglawResult",
    "loglaw_map_experiment",
    "loglaw_flow_experiment",
    "SandwichResult",
    "sandwich_experiment",
    "RecurrenceResult",
    "recurrence_experiment",
]


def map_batch(model, xs, ys):
    """One step of the skew product on arrays, for models or generic skews."""
    if isinstance(model, ValidatedModel):
        return _maps.poincare_map_batch(model, xs, ys)
    xs = _maps._desingularise(np.asarray(xs, dtype=float))
    return model.t(xs), model.g(xs, ys)


def sample_family_points(fam: LeafFamily, n: int, rng, exclude_x_below: float = 0.0):
    """Draw points from a grid family: cells by mass, uniform jitter inside."""
    joint = fam.to_joint().ravel()
    p = joint / joint.sum()
    m = fam.leaf_cells
    xs = np.empty(n)
    ys = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        idx = rng.choice(p.size, size=want, p=p)
        jj, kk = idx // m, idx % m
        cx = -0.5 + (jj + rng.random(want)) / fam.n_leaves
        cy = -0.5 + (kk + rng.random(want)) / m
        keep = np.abs(cx) > exclude_x_below
        take = int(keep.sum())
        xs[filled:filled + take] = cx[keep]
        ys[filled:filled + take] = cy[keep]
        filled += take
    return xs, ys


def sample_attractor_points(model, fam: LeafFamily, n: int, rng,
                            burn_in: int = 64, exclude_x_below: float = 0.0):
    """Typical points lying on the attractor itself, not merely near it.

    Family cells are coarse: a point jittered inside a cell can fall in a gap
    of the fractal leaf measure, where ball masses vanish and hitting times
    blow up.  Burning sampled points through the map lands them on the
    attractor to within the leaf-contraction scale.
    """
    xs, ys = sample_family_points(fam, 4 * n, rng)
    for _ in range(burn_in):
        xs, ys = map_batch(model, xs, ys)
    keep = np.abs(xs) > exclude_x_below
    xs, ys = xs[keep], ys[keep]
    if xs.size < n:  # pathological exclusion; top up recursively
        ex, ey = sample_attractor_points(model, fam, n - xs.size, rng,
                                         burn_in, exclude_x_below)
        xs = np.concatenate([xs, ex])
        ys = np.concatenate([ys, ey])
    return xs[:n], ys[:n]


def _ols(x: np.ndarray, y: np.ndarray):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 0:
        return 0.0, ym, math.inf, 0.0
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot <= 0 else 1.0 - ss_res / ss_tot
    se = math.inf if n <= 2 else math.sqrt(ss_res / (n - 2) / sxx)
    return slope, intercept, se, r2


# ---------------------------------------------------------------------------
# correlation decay


@dataclass
class DecaySeries:
    """Correlation (or distance) magnitudes per iterate with an exponential fit.

    The fit is least squares on the log of the strictly significant entries
    (value above ``se_mult`` standard errors where errors are available).
    """

    ns: np.ndarray
    values: np.ndarray
    ses: Optional[np.ndarray]
    fit_rate: float
    fit_quality: float
    fit_mask: np.ndarray


def _wls(x, y, w):
    """Weighted least squares line fit; returns (slope, weighted R^2)."""
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    xm = float(np.sum(w * x))
    ym = float(np.sum(w * y))
    sxx = float(np.sum(w * (x - xm) ** 2))
    if sxx <= 0:
        return 0.0, 0.0
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    resid = y - (ym + slope * (x - xm))
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 if ss_tot <= 0 else 1.0 - ss_res / ss_tot
    return slope, r2


def _fit_decay(ns, values, ses, se_mult):
    """Log-scale exponential fit over the significant entries.

    With standard errors available the fit is weighted by the inverse variance
    of the log values, (value/se)^2, so entries close to the Monte Carlo floor
    cannot sway the line.
    """
    ns = np.asarray(ns)
    values = np.asarray(values, dtype=float)
    if ses is None:
        mask = (ns >= 1) & (values > 0)
        if mask.sum() >= 3:
            rate, _, _, r2 = _ols(ns[mask].astype(float), np.log(values[mask]))
        else:
            rate, r2 = math.nan, 0.0
        return rate, r2, mask
    floor = se_mult * np.asarray(ses) + 1e-14 * max(1.0, float(values.max(initial=0.0)))
    mask = (ns >= 1) & (values > floor)
    if mask.sum() >= 3:
        w = (values[mask] / np.asarray(ses)[mask]) ** 2
        rate, r2 = _wls(ns[mask].astype(float), np.log(values[mask]), w)
    else:
        rate, r2 = math.nan, 0.0
    return rate, r2, mask


def correlation_mc(model, fam: LeafFamily, f: Callable, g: Callable,
                   n_max: int = 25, trajectories: int = 10_000, seed: int = 0,
                   burn_in: int = 8, se_mult: float = 3.0,
                   require_signal: bool = True) -> DecaySeries:
    """Monte Carlo correlations |E[f . g o F^n] - E f E g| along the attractor.

    Starts are drawn from the family, burnt in, and iterated in lockstep; the
    entry at n = 0 is the plain covariance of f and g.  The exponential fit
    uses the entries at least ``se_mult`` standard errors above zero (the
    plateau below the Monte Carlo floor carries no decay information).
    Raises InsufficientSamples when the signal is below one standard error
    for every n >= 3 (disable with require_signal=False when a null signal
    is the expected outcome).
    """
    rng = stream(seed, 0)
    xs, ys = sample_family_points(fam, trajectories, rng)
    for _ in range(burn_in):
        xs, ys = map_batch(model, xs, ys)
    fs = np.asarray(f(xs, ys), dtype=float)
    f_mean = fs.mean()
    ns = np.arange(n_max + 1)
    values = np.empty(n_max + 1)
    ses = np.empty(n_max + 1)
    cx, cy = xs, ys
    for n in range(n_max + 1):
        if n > 0:
            cx, cy = map_batch(model, cx, cy)
        gs = np.asarray(g(cx, cy), dtype=float)
        g_mean = gs.mean()
        cov = float(np.mean(fs * gs) - f_mean * g_mean)
        values[n] = abs(cov)
        ses[n] = float(np.std((fs - f_mean) * (gs - g_mean)) / math.sqrt(len(fs)))
    rate, r2, mask = _fit_decay(ns, values, ses, se_mult)
    later = ns >= 3
    if require_signal and not np.any(values[later] > ses[later]):
        raise InsufficientSamples("correlation signal below noise for all n >= 3")
    return DecaySeries(ns=ns, values=values, ses=ses, fit_rate=rate,
                       fit_quality=r2, fit_mask=mask)


def correlation_measure(model, srb: LeafFamily, f: Callable, n_max: int = 25,
                        nodes_per_cell: int = 64) -> DecaySeries:
    """Distance-to-equilibrium bounds dominating the normalised correlations.

    The observable (nonnegative, normalised to unit integral against the
    family) tilts the invariant family; the n-th entry is the product upper
    bound for the distance between the n-th pushforward of the tilted family
    and the invariant one.  By duality this dominates the correlation of f
    with any Lipschitz g (times the Lipschitz constant of g).
    """
    xs = _measures.cell_centers(srb.n_leaves)
    ys = _measures.cell_centers(srb.leaf_cells)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vals = np.asarray(f(gx, gy), dtype=float)
    if np.any(vals < -1e-12):
        raise NegativeObservable("tilting observable must be nonnegative")
    vals = np.maximum(vals, 0.0)
    weight = float(np.sum(srb.to_joint() * vals))
    if weight <= 0:
        raise NegativeObservable("observable has zero integral against the family")
    fam = LeafFamily(srb.leaf_masses * vals / weight)
    ns = np.arange(n_max + 1)
    values = np.empty(n_max + 1)
    values[0] = _measures.prod_bound(fam, srb)
    for n in range(1, n_max + 1):
        fam = _measures.push_forward(model, fam, nodes_per_cell)
        values[n] = _measures.prod_bound(fam, srb)
    rate, r2, mask = _fit_decay(ns, values, None, 0.0)
    return DecaySeries(ns=ns, values=values, ses=None, fit_rate=rate,
                       fit_quality=r2, fit_mask=mask)


# ---------------------------------------------------------------------------
# hitting times, map


@dataclass(frozen=True)
class HittingSample:
    """One hit-or-censor outcome, ready for the experiment CSV."""

    target_x: float
    target_y: float
    r: float
    sample_id: int
    time: float
    censored: bool


def default_map_cap(r: float) -> int:
    # generous: crossings to reach a ball of radius r scale like r**-d, d < 2
    return min(int(50_000_000), max(10_000, int(200.0 * r**-1.6)))


_CHUNK = 64


def _adaptive_stop(times, censored, n, factor=25.0, hit_frac=0.7):
    """True when iterating further can only move the extreme upper tail.

    Once most orbits have hit and the cap exceeds many times their median,
    the stragglers are censored; medians are unaffected by capping the top
    tail, which is all the loglaw estimators consume.
    """
    hits = ~censored
    frac = hits.mean()
    if frac < hit_frac:
        return False
    return n > factor * float(np.median(times[hits]))


def hitting_times_map(model, xs, ys, target_x, target_y, r: float,
                      n_cap: Optional[int] = None, adaptive: bool = True):
    """First iterate entering the sup-metric ball, for a batch of starts.

    ``target_x``/``target_y`` may be scalars or per-start arrays, so one pass
    serves many (start, target) pairs.  Returns (times, censored); censored
    entries carry the step count at which iteration stopped.  Orbits are
    iterated in chunks, keeping only the still-active ones.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if n_cap is None:
        n_cap = default_map_cap(r)
    cx = np.asarray(xs, dtype=float).copy()
    cy = np.asarray(ys, dtype=float).copy()
    m = cx.size
    ctx = np.broadcast_to(np.asarray(target_x, dtype=float), (m,)).copy()
    cty = np.broadcast_to(np.asarray(target_y, dtype=float), (m,)).copy()
    times = np.full(m, n_cap, dtype=np.int64)
    censored = np.ones(m, dtype=bool)
    idx = np.arange(m)
    n = 0
    while idx.size and n < n_cap:
        k = min(_CHUNK, n_cap - n)
        bufx = np.empty((k, idx.size))
        bufy = np.empty((k, idx.size))
        for s in range(k):
            cx, cy = map_batch(model, cx, cy)
            bufx[s] = cx
            bufy[s] = cy
        inball = (np.abs(bufx - ctx) <= r) & (np.abs(bufy - cty) <= r)
        anyhit = inball.any(axis=0)
        if anyhit.any():
            first = inball[:, anyhit].argmax(axis=0)
            found = idx[anyhit]
            times[found] = n + first + 1
            censored[found] = False
            keep = ~anyhit
            idx, ctx, cty = idx[keep], ctx[keep], cty[keep]
            cx, cy = bufx[-1][keep].copy(), bufy[-1][keep].copy()
        n += k
        if adaptive and idx.size and _adaptive_stop(times, censored, n):
            times[idx] = n
            break
    return times, censored


def hitting_time_map(model, x: SectionPoint, x0: SectionPoint, r: float,
                     n_cap: Optional[int] = None) -> Optional[int]:
    """Scalar variant; None means censored at the cap."""
    t, c = hitting_times_map(model, np.array([x.x]), np.array([x.y]), x0.x, x0.y, r, n_cap)
    return None if c[0] else int(t[0])


# ---------------------------------------------------------------------------
# hitting times, flow

_INF = np.inf


def _coord_window(c0, lam, lo, hi):
    """t-interval where c0*exp(lam t) lies in [lo, hi]; (t1, t2) with t1 > t2 empty."""
    c0 = np.asarray(c0, dtype=float)
    safe = np.where(c0 != 0.0, c0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = np.where(c0 > 0, lo / safe, hi / safe)
        rb = np.where(c0 > 0, hi / safe, lo / safe)
    empty = rb <= 0.0
    ra_pos = ra > 0.0
    log_ra = np.where(ra_pos, np.log(np.where(ra_pos, ra, 1.0)), -_INF)
    log_rb = np.log(np.where(rb > 0, rb, 1.0))
    if lam > 0:
        t1 = log_ra / lam
        t2 = log_rb / lam
    else:
        t1 = log_rb / lam
        t2 = np.where(ra_pos, log_ra / lam, _INF)
    t1 = np.where(empty, 1.0, t1)
    t2 = np.where(empty, 0.0, t2)
    zero = c0 == 0.0
    if np.any(zero):
        inside = (lo <= 0.0) & (0.0 <= hi)
        t1 = np.where(zero, 0.0 if inside else 1.0, t1)
        t2 = np.where(zero, _INF if inside else 0.0, t2)
    return t1, t2


def _validate_flow_target(target, r):
    tx, ty, tz = (float(v) for v in target)
    if not (abs(tx) <= 1 and abs(ty) <= 1 and 0 < tz <= 1):
        raise ValueError("flow target must lie inside the cube")
    if abs(tx) <= r:
        raise ValueError("flow target must sit off the singular leaf by more than r")
    return tx, ty, tz


def default_flow_cap(model: ValidatedModel, r: float) -> float:
    per = math.log(2.0) / model.lambda1 + model.outer_travel_time
    return default_map_cap(r) * max(per, 0.05)


def hitting_times_flow(model: ValidatedModel, xs, ys, target, r: float,
                       t_cap: Optional[float] = None, adaptive: bool = True):
    """First time the suspension trajectory enters the sup ball around target.

    Starts are section points at phase zero; targets may be per-start arrays
    of in-cube points.  Each in-cube segment is coordinatewise exponential,
    so the entry time solves three coordinate window equations in closed
    form; outer excursions cannot intersect an in-cube ball and only add
    their travel time.  Censored entries carry NaN.
    """
    cx = np.asarray(xs, dtype=float).copy()
    cy = np.asarray(ys, dtype=float).copy()
    m = cx.size
    tx = np.broadcast_to(np.asarray(target[0], dtype=float), (m,)).copy()
    ty = np.broadcast_to(np.asarray(target[1], dtype=float), (m,)).copy()
    tz = np.broadcast_to(np.asarray(target[2], dtype=float), (m,)).copy()
    if np.any(np.abs(tx) <= r) or np.any(tz <= 0) or np.any(tz > 1):
        raise ValueError("flow targets must be in-cube, off the singular leaf by > r")
    if t_cap is None:
        t_cap = default_flow_cap(model, r)
    l1, l2, l3 = model.lambda1, model.lambda2, model.lambda3
    delta = model.outer_travel_time
    # the z coordinate always starts at 1: its window is fixed per target
    z1, z2 = _coord_window(np.ones(m), l3, tz - r, tz + r)
    z1 = np.maximum(z1, 0.0)
    times = np.full(m, np.nan)
    censored = np.ones(m, dtype=bool)
    idx = np.arange(m)
    cum = np.zeros(m)
    while idx.size:
        cx = np.where(cx == 0.0, _maps.SINGULAR_NUDGE, cx)
        tc = -np.log(np.abs(cx)) / l1
        t1x, t2x = _coord_window(cx, l1, tx - r, tx + r)
        t1y, t2y = _coord_window(cy, l2, ty - r, ty + r)
        t1 = np.maximum(np.maximum(t1x, t1y), z1)
        t2 = np.minimum(np.minimum(t2x, t2y), np.minimum(z2, tc))
        hit = t1 <= t2
        if hit.any():
            found = idx[hit]
            times[found] = cum[hit] + np.maximum(t1[hit], 0.0)
            censored[found] = False
            keep = ~hit
            idx, cx, cy, cum = idx[keep], cx[keep], cy[keep], cum[keep]
            tx, ty, z1, z2 = tx[keep], ty[keep], z1[keep], z2[keep]
            tc = tc[keep]
            if idx.size == 0:
                break
        cum = cum + tc + delta
        over = cum > t_cap
        if adaptive and idx.size and not over.any():
            hits = ~censored
            if hits.mean() >= 0.7:
                med = float(np.median(times[hits]))
                over = cum > 25.0 * med
        if over.any():
            drop = idx[over]
            times[drop] = cum[over]
            keep = ~over
            idx, cx, cy, cum = idx[keep], cx[keep], cy[keep], cum[keep]
            tx, ty, z1, z2 = tx[keep], ty[keep], z1[keep], z2[keep]
            if idx.size == 0:
                break
        cx, cy = map_batch(model, cx, cy)
    return times, censored


def hitting_time_flow(model: ValidatedModel, s, x0, r: float,
                      t_cap: Optional[float] = None) -> Optional[float]:
    """Scalar flow hitting time from a suspension state; None when censored."""
    from .flow import SuspensionState, cube_exit_time  # local import avoids a cycle

    if getattr(x0, "outer", False):
        raise ValueError("target must be a regular in-cube point")
    target = (x0.x, x0.y, x0.z)
    _validate_flow_target(target, r)
    base, phase = s.base, s.phase
    if phase > 0:
        # handle the partial first segment, then defer to the batch engine
        l3 = model.lambda3
        z1, z2 = (float(v) for v in _coord_window(np.array([1.0]), l3, x0.z - r, x0.z + r))
        cx = np.array([base.x])
        cy = np.array([base.y])
        tc = cube_exit_time(model, base.x)
        t1x, t2x = _coord_window(cx, model.lambda1, x0.x - r, x0.x + r)
        t1y, t2y = _coord_window(cy, model.lambda2, x0.y - r, x0.y + r)
        t1 = max(float(t1x[0]), float(t1y[0]), z1, phase)
        t2 = min(float(t2x[0]), float(t2y[0]), z2, tc)
        if t1 <= t2:
            return t1 - phase
        lead = (tc + model.outer_travel_time) - phase
        nxt = _maps.poincare_map(model, base)
        t, c = hitting_times_flow(model, np.array([nxt.x]), np.array([nxt.y]),
                                  target, r, t_cap)
        return None if c[0] else lead + float(t[0])
    t, c = hitting_times_flow(model, np.array([base.x]), np.array([base.y]), target, r, t_cap)
    return None if c[0] else float(t[0])


# ---------------------------------------------------------------------------
# recurrence


def recurrence_times_map(model, xs, ys, r: float, n_cap: Optional[int] = None):
    """First return to the (per-start) ball after having left it.

    Returns (times, censored, never_left); orbits that never exit their ball
    before the cap are flagged separately.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if n_cap is None:
        n_cap = default_map_cap(r)
    cx = np.asarray(xs, dtype=float).copy()
    cy = np.asarray(ys, dtype=float).copy()
    m = cx.size
    times = np.full(m, n_cap, dtype=np.int64)
    censored = np.ones(m, dtype=bool)
    never_left = np.zeros(m, dtype=bool)
    idx = np.arange(m)
    ax, ay = cx.copy(), cy.copy()   # ball centers travel with the active set
    left = np.zeros(m, dtype=bool)
    n = 0
    while idx.size and n < n_cap:
        k = min(_CHUNK, n_cap - n)
        bufx = np.empty((k, idx.size))
        bufy = np.empty((k, idx.size))
        for s in range(k):
            cx, cy = map_batch(model, cx, cy)
            bufx[s] = cx
            bufy[s] = cy
        inside = (np.abs(bufx - ax) <= r) & (np.abs(bufy - ay) <= r)
        out_cum = np.maximum.accumulate(~inside, axis=0)
        # hit at step s requires having been outside strictly before s
        left_before = np.vstack([left[None, :], out_cum[:-1] | left[None, :]])
        hits = inside & left_before
        anyhit = hits.any(axis=0)
        left = left | out_cum[-1]
        if anyhit.any():
            first = hits[:, anyhit].argmax(axis=0)
            found = idx[anyhit]
            times[found] = n + first + 1
            censored[found] = False
            keep = ~anyhit
            idx, ax, ay, left = idx[keep], ax[keep], ay[keep], left[keep]
            cx, cy = bufx[-1][keep].copy(), bufy[-1][keep].copy()
        n += k
        if idx.size and _adaptive_stop(times, censored, n):
            times[idx] = n
            break
    if idx.size:
        never_left[idx[~left]] = True
    return times, censored, never_left


def recurrence_time_map(model, x0: SectionPoint, r: float,
                        n_cap: Optional[int] = None) -> Optional[int]:
    """Scalar variant; raises NeverLeft if the orbit stays in the ball to the cap."""
    t, c, nl = recurrence_times_map(model, np.array([x0.x]), np.array([x0.y]), r, n_cap)
    if nl[0]:
        raise NeverLeft(f"orbit of ({x0.x}, {x0.y}) never exited its r={r} ball")
    return None if c[0] else int(t[0])


def recurrence_time_flow(model: ValidatedModel, s, r: float,
                         t_cap: Optional[float] = None) -> Optional[float]:
    """Second entrance time of the flow into the ball around its own start.

    The start must be an in-cube regular state; every segment's in-ball set is
    a single interval, and the outer branch is always outside the ball, so the
    orbit exits within its first segment and the answer is the start of the
    next nonempty window.
    """
    from .flow import embed

    p0 = embed(model, s)
    if p0.outer:
        raise ValueError("recurrence start must be an in-cube state")
    target = (p0.x, p0.y, p0.z)
    _validate_flow_target(target, r)
    if t_cap is None:
        t_cap = default_flow_cap(model, r)
    l1, l2, l3 = model.lambda1, model.lambda2, model.lambda3
    z1, z2 = (float(v) for v in _coord_window(np.array([1.0]), l3, p0.z - r, p0.z + r))
    phase = s.phase
    cx = np.array([s.base.x])
    cy = np.array([s.base.y])
    cum = -phase  # elapsed time is measured from the starting phase
    first = True
    while cum <= t_cap:
        cx = np.where(cx == 0.0, _maps.SINGULAR_NUDGE, cx)
        tc = float(-np.log(abs(cx[0])) / l1)
        t1x, t2x = _coord_window(cx, l1, target[0] - r, target[0] + r)
        t1y, t2y = _coord_window(cy, l2, target[1] - r, target[1] + r)
        t1 = max(float(t1x[0]), float(t1y[0]), z1, 0.0)
        t2 = min(float(t2x[0]), float(t2y[0]), z2, tc)
        if first:
            first = False  # the window containing the start is the one we must leave
        elif t1 <= t2:
            return cum + t1
        cum += tc + model.outer_travel_time
        nx, ny = map_batch(model, cx, cy)
        cx, cy = nx, ny
    return None


# ---------------------------------------------------------------------------
# ball masses and local dimension


def orbit_ball_masses(model, fam: LeafFamily, targets, radii, seed: int = 0,
                      orbit_len: int = 4_000_000, burn_in: int = 100,
                      chunk: int = 500_000):
    """Occupation frequencies of sup balls along one long typical orbit.

    Returns (masses, counts) of shape (n_targets, n_radii).  The empirical
    measure of a long orbit is the physical measure, and unlike the grid
    family it resolves the fractal leaf structure below the cell scale, so
    these masses are the right yardstick for hitting-time slopes at matched
    radii.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    rng = stream(seed, 5)
    xs, ys = sample_family_points(fam, 64, rng)
    for _ in range(burn_in):
        xs, ys = map_batch(model, xs, ys)
    counts = np.zeros((targets.shape[0], radii.size), dtype=np.int64)
    done = 0
    cx, cy = xs, ys
    per = xs.size
    steps = max(orbit_len // per, 1)
    buf_len = max(chunk // per, 1)
    while done < steps:
        k = min(buf_len, steps - done)
        bx = np.empty((k, per))
        by = np.empty((k, per))
        for s in range(k):
            cx, cy = map_batch(model, cx, cy)
            bx[s] = cx
            by[s] = cy
        fx = bx.ravel()
        fy = by.ravel()
        for t, (tx, ty) in enumerate(targets):
            d = np.maximum(np.abs(fx - tx), np.abs(fy - ty))
            for i, r in enumerate(radii):
                counts[t, i] += int(np.count_nonzero(d <= r))
        done += k
    total = steps * per
    return counts / total, counts


def flow_orbit_ball_masses(model: ValidatedModel, fam: LeafFamily, centers, radii,
                           seed: int = 0, orbit_len: int = 2_000_000,
                           burn_in: int = 100, chunk: int = 250_000):
    """Dwell-time fractions of the suspension trajectory in sup balls.

    One long orbit of the return map carries closed-form dwell times per
    in-cube segment; outer excursions only add to the clock.  Returns
    (masses, weights) with weights the accumulated dwell time per ball.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    l1, l2, l3 = model.lambda1, model.lambda2, model.lambda3
    rng = stream(seed, 6)
    xs, ys = sample_family_points(fam, 64, rng)
    for _ in range(burn_in):
        xs, ys = map_batch(model, xs, ys)
    dwell = np.zeros((centers.shape[0], radii.size))
    total_time = 0.0
    cx, cy = xs, ys
    per = xs.size
    steps = max(orbit_len // per, 1)
    buf_len = max(chunk // per, 1)
    done = 0
    while done < steps:
        k = min(buf_len, steps - done)
        bx = np.empty((k, per))
        by = np.empty((k, per))
        for s in range(k):
            bx[s] = cx
            by[s] = cy
            cx, cy = map_batch(model, cx, cy)
        fx = bx.ravel()
        fy = by.ravel()
        fx = np.where(fx == 0.0, _maps.SINGULAR_NUDGE, fx)
        tc = -np.log(np.abs(fx)) / l1
        total_time += float(tc.sum()) + model.outer_travel_time * fx.size
        for t, (tx, ty, tz) in enumerate(centers):
            for i, r in enumerate(radii):
                t1x, t2x = _coord_window(fx, l1, tx - r, tx + r)
                t1y, t2y = _coord_window(fy, l2, ty - r, ty + r)
                z1, z2 = (float(v) for v in _coord_window(np.array([1.0]), l3,
                                                          tz - r, tz + r))
                t1 = np.maximum(np.maximum(t1x, t1y), max(z1, 0.0))
                t2 = np.minimum(np.minimum(t2x, t2y), np.minimum(z2, tc))
                dwell[t, i] += float(np.clip(t2 - t1, 0.0, None).sum())
        done += k
    return dwell / total_time, dwell


def family_ball_mass(fam: LeafFamily, x: float, y: float, r: float) -> float:
    """Mass of the sup-metric ball (a square) under the grid family, exact."""
    ex = cell_edges(fam.n_leaves)
    ey = cell_edges(fam.leaf_cells)
    fx = np.clip((np.minimum(ex[1:], x + r) - np.maximum(ex[:-1], x - r)) * fam.n_leaves, 0.0, 1.0)
    fy = np.clip((np.minimum(ey[1:], y + r) - np.maximum(ey[:-1], y - r)) * fam.leaf_cells, 0.0, 1.0)
    return float(fx @ (fam.to_joint() @ fy))


def flow_ball_mass(model: ValidatedModel, fam: LeafFamily, center, r: float,
                   mean_rt: Optional[float] = None) -> float:
    """Mass of a sup ball under the flow measure, by quadrature over the family.

    The flow measure is the section measure crossed with time under the roof,
    normalised by the mean return time; the ball mass integrates, cell by
    cell, the time each departing trajectory spends inside the box.
    """
    tx, ty, tz = _validate_flow_target(center, r)
    if mean_rt is None:
        mean_rt = mean_return_time(model, fam.marginal.normalized())
    l1, l2, l3 = model.lambda1, model.lambda2, model.lambda3
    xs = _measures.cell_centers(fam.n_leaves)
    ys = _measures.cell_centers(fam.leaf_cells)
    tc = -np.log(np.abs(xs)) / l1
    t1x, t2x = _coord_window(xs, l1, tx - r, tx + r)
    t1y, t2y = _coord_window(ys, l2, ty - r, ty + r)
    z1, z2 = (float(v) for v in _coord_window(np.array([1.0]), l3, tz - r, tz + r))
    t1 = np.maximum(np.maximum(t1x[:, None], t1y[None, :]), max(z1, 0.0))
    t2 = np.minimum(np.minimum(t2x[:, None], t2y[None, :]), np.minimum(z2, tc[:, None]))
    dwell = np.clip(t2 - t1, 0.0, None)
    return float(np.sum(fam.to_joint() * dwell) / mean_rt)


@dataclass(frozen=True)
class DimensionEstimate:
    """Log-log regression slope of ball mass (or hitting time) against radius."""

    point: tuple
    slope: float
    ci_halfwidth: float
    r_range: tuple
    values: tuple = ()


def _check_radii(radii) -> np.ndarray:
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    if radii.size < 4:
        raise ValueError("need at least 4 radii")
    if radii.max() / radii.min() < 8 * (1 - 1e-9):
        raise ValueError("radii must span at least 3 dyadic scales")
    return radii


def _dim_from_masses(point, radii, masses, min_points: int = 4) -> DimensionEstimate:
    radii = np.asarray(radii, dtype=float)
    masses = np.asarray(masses, dtype=float)
    good = masses > 0
    if good.sum() < min_points:
        raise EmptyBall(f"only {int(good.sum())} radii carry mass at {point!r}")
    slope, _, se, _ = _ols(np.log(radii[good]), np.log(masses[good]))
    return DimensionEstimate(point=tuple(np.atleast_1d(point)), slope=slope,
                             ci_halfwidth=2 * se,
                             r_range=(radii[good].min(), radii[good].max()),
                             values=tuple(masses))


def local_dimension(source: Union[LeafFamily, Callable], point, radii) -> DimensionEstimate:
    """Slope of log ball-mass against log radius at a point.

    ``source`` is a grid family (sup-metric balls on the square) or a callable
    radius -> mass (flow measures, orbit occupation estimates).  The
    confidence halfwidth is twice the OLS standard error of the slope.
    """
    radii = _check_radii(radii)
    if isinstance(source, LeafFamily):
        px, py = point
        masses = np.array([family_ball_mass(source, px, py, r) for r in radii])
    else:
        masses = np.array([float(source(r)) for r in radii])
    if masses[-1] <= 0:
        raise EmptyBall(f"no mass in the smallest ball r = {radii[-1]!r}")
    return _dim_from_masses(point, radii, masses)


def loglaw_slope(samples: Sequence[HittingSample], max_censored: float = 0.2) -> DimensionEstimate:
    """Median-based regression of log hitting time against -log radius.

    Censored samples are excluded from the medians; any radius with more than
    ``max_censored`` censoring aborts with TooCensored.
    """
    by_r: dict = {}
    for s in samples:
        by_r.setdefault(s.r, []).append(s)
    radii = np.array(sorted(by_r, reverse=True))
    if radii.size < 4:
        raise ValueError("need samples at >= 4 radii")
    medians = np.empty(radii.size)
    for i, r in enumerate(radii):
        rows = by_r[r]
        cens = np.array([s.censored for s in rows])
        if cens.mean() > max_censored:
            raise TooCensored(f"{cens.mean():.0%} censored at r = {r!r}")
        vals = np.array([s.time for s in rows if not s.censored], dtype=float)
        medians[i] = np.median(vals)
    slope, _, se, _ = _ols(-np.log(radii), np.log(medians))
    first = samples[0]
    return DimensionEstimate(point=(first.target_x, first.target_y), slope=slope,
                             ci_halfwidth=2 * se, r_range=(radii.min(), radii.max()),
                             values=tuple(medians))


# ---------------------------------------------------------------------------
# exact dimensionality


@dataclass(frozen=True)
class ExactDimensionResult:
    """Dimension from the entropy-over-exponents formula, with diagnostics."""

    value: float
    entropy: float
    psi_integral: float
    phi_integral: float
    richardson_psi: float
    richardson_phi: float


def _log_integrals(model, marginal: Density1D):
    """(int log|T'| dmu, -int log|dG/dy| dmu) against a marginal density."""
    v = marginal.values
    n = marginal.n
    if isinstance(model, ValidatedModel):
        # both integrands are affine in log|x|, integrated in closed form per cell
        ilog = -float(np.sum(v * _neglog_cell_integrals(n)))
        psi = math.log(model.theta * model.alpha) * marginal.mass() + (model.alpha - 1) * ilog
        phi = -math.log(model.sigma) * marginal.mass() - model.beta * ilog
        return psi, phi
    if isinstance(model, SkewProductMap) and model.t_prime is not None and model.g_y is not None:
        xs = _measures.cell_centers(n)
        w = 1.0 / n
        psi = float(np.sum(v * np.log(np.abs(model.t_prime(xs)))) * w)
        phi = float(-np.sum(v * np.log(np.abs(model.g_y(xs)))) * w)
        return psi, phi
    raise TypeError("model must expose derivatives for the dimension formula")


def _coarsen_density(d: Density1D) -> Density1D:
    v = d.values
    if v.size % 2:
        v = v[:-1]
    return Density1D(0.5 * (v[0::2] + v[1::2]))


def exact_dimension(model, fam: LeafFamily, stability_tol: float = 1e-3) -> ExactDimensionResult:
    """Local dimension of the physical measure via the entropy formula.

    d = h * (1 / int log|T'| + 1 / int(-log|dG/dy|)) with the entropy taken as
    the expansion exponent of the factor map (the contracting fiber adds no
    entropy).  Both integrals must be finite and positive and stable under a
    factor-2 coarsening of the marginal (Richardson check), otherwise
    DivergentIntegral is raised.
    """
    marginal = fam.marginal.normalized()
    psi, phi = _log_integrals(model, marginal)
    if not (math.isfinite(psi) and psi > 0):
        raise DivergentIntegral(f"expansion integral not positive-finite: {psi!r}")
    if not (math.isfinite(phi) and phi > 0):
        raise DivergentIntegral(f"contraction integral not positive-finite: {phi!r}")
    psi2, phi2 = _log_integrals(model, _coarsen_density(marginal))
    r_psi = abs(psi - psi2) / max(1.0, abs(psi))
    r_phi = abs(phi - phi2) / max(1.0, abs(phi))
    if max(r_psi, r_phi) > stability_tol:
        raise DivergentIntegral(
            f"quadrature unstable under coarsening: {r_psi:.2e}, {r_phi:.2e}"
        )
    entropy = psi
    value = entropy * (1.0 / psi + 1.0 / phi)
    return ExactDimensionResult(value=value, entropy=entropy, psi_integral=psi,
                                phi_integral=phi, richardson_psi=r_psi,
                                richardson_phi=r_phi)


# ---------------------------------------------------------------------------
# recurrence-theorem hypotheses


@dataclass(frozen=True)
class SaussolReport:
    """Numeric check of the partition hypotheses behind the recurrence law."""

    partition_size: int
    masses: tuple
    mass_decay_slope: float
    mass_bound_ok: bool
    log_lipschitz_sum: float
    tail_bound: float
    sum_converged: bool
    boundary_exponent: float
    boundary_ok: bool

    @property
    def all_pass(self) -> bool:
        return self.mass_bound_ok and self.sum_converged and self.boundary_ok


def _interval_mass(marginal: Density1D, a: float, b: float) -> float:
    cdf = marginal.cdf()
    edges = cell_edges(marginal.n)

    def at(t):
        t = min(max(t, -0.5), 0.5)
        return float(np.interp(t, edges, cdf))

    return max(at(b) - at(a), 0.0)


def saussol_check(model: ValidatedModel, fam: LeafFamily) -> SaussolReport:
    """Verify the two checkable partition hypotheses at the grid's resolution.

    The partition splits the square into dyadic-like bands (1/(i+2), 1/(i+1))
    and their mirrors; masses must decay like i^-2 under the bounded marginal
    density, the mass-weighted log-Lipschitz sum must have a convergent tail,
    and the measure of an epsilon-neighbourhood of the (resolvable part of
    the) partition boundary must scale linearly-ish in epsilon.
    """
    marginal = fam.marginal.normalized()
    n = marginal.n
    sup_f0 = float(marginal.values.max())
    i_max = 1
    while (i_max + 2) * (i_max + 3) <= n // 4:
        i_max += 1
    idx = np.arange(1, i_max + 1)
    masses = np.array([
        _interval_mass(marginal, 1.0 / (i + 2), 1.0 / (i + 1))
        + _interval_mass(marginal, -1.0 / (i + 1), -1.0 / (i + 2))
        for i in idx
    ])
    mass_bound_ok = bool(np.all(masses <= 4.0 * sup_f0 / idx**2 + 1e-12))
    # the i^-2 decay is asymptotic: regress over the upper range of indices
    lo_fit = max(3, i_max // 3)
    decay_slope, _, _, _ = _ols(np.log(idx[lo_fit - 1:].astype(float)),
                                np.log(np.maximum(masses[lo_fit - 1:], 1e-300)))

    lips = model.theta * model.alpha * (idx + 2.0) ** (1 - model.alpha)
    terms = masses * np.maximum(np.log(lips), 0.0)
    s_full = float(terms.sum())
    # Cauchy trend: dyadic block increments must decrease
    inc1 = float(terms[i_max // 4: i_max // 2].sum())
    inc2 = float(terms[i_max // 2:].sum())
    # analytic tail from the i^-2 mass bound (finite, decays like log(m)/m)
    tail_i = np.arange(i_max + 1, 200_000)
    tail = float(np.sum(4.0 * sup_f0 / tail_i**2
                        * np.maximum(np.log(model.theta * model.alpha
                                            * (tail_i + 2.0) ** (1 - model.alpha)), 0.0)))
    sum_converged = bool(inc2 <= inc1 + 1e-12 and math.isfinite(tail))

    # epsilon-neighbourhood of the resolvable boundary lines
    b_i = 1
    while 0.5 / ((b_i + 2) * (b_i + 3)) >= 8.0 / n and b_i < i_max:
        b_i += 1
    lines = 1.0 / (np.arange(1, b_i + 2) + 1.0)  # 1/2, 1/3, ..., 1/(b_i + 2)
    eps_max = np.min(np.abs(np.diff(np.sort(lines)))) / 2
    eps_list = []
    e = eps_max
    while e >= 4.0 / n and len(eps_list) < 5:
        eps_list.append(e)
        e /= 2
    if len(eps_list) < 3:
        eps_list = [eps_max, eps_max / 2, eps_max / 4]
    joint = fam.to_joint()
    ey = cell_edges(fam.leaf_cells)
    mus = []
    for e in eps_list:
        mx = 0.0
        for line in lines:
            mx += _interval_mass(marginal, line - e, line + e)
            mx += _interval_mass(marginal, -line - e, -line + e)
        # horizontal boundary y = +-1/2 of the open bands
        fy = np.clip((np.minimum(ey[1:], -0.5 + e) - ey[:-1]) * fam.leaf_cells, 0, 1)
        fy += np.clip((ey[1:] - np.maximum(ey[:-1], 0.5 - e)) * fam.leaf_cells, 0, 1)
        mx += float(np.sum(joint @ np.clip(fy, 0, 1)))
        mus.append(mx)
    b_slope, _, _, _ = _ols(np.log(np.array(eps_list)), np.log(np.maximum(mus, 1e-300)))
    return SaussolReport(
        partition_size=i_max,
        masses=tuple(masses),
        mass_decay_slope=decay_slope,
        mass_bound_ok=mass_bound_ok,
        log_lipschitz_sum=s_full,
        tail_bound=tail,
        sum_converged=sum_converged,
        boundary_exponent=b_slope,
        boundary_ok=bool(b_slope >= 0.9),
    )


# ---------------------------------------------------------------------------
# experiment drivers


@dataclass
class LoglawResult:
    targets: list
    dim_estimates: list
    slope_estimates: list
    samples: list = field(default_factory=list)
    agree: int = 0
    tolerance: float = 0.15
    base_dim_estimates: list = field(default_factory=list)  # flow runs only

    @property
    def n_targets(self) -> int:
        return len(self.targets)


def _dim_radii_for(fam: LeafFamily):
    r = 0.25
    out = []
    while r >= 4.0 / min(fam.n_leaves, fam.leaf_cells) and len(out) < 7:
        out.append(r)
        r /= 2
    return out


def loglaw_map_experiment(model, fam: LeafFamily, n_targets: int, n_starts: int,
                          radii, seed: int, tolerance: float = 0.15,
                          n_cap=None) -> LoglawResult:
    """Hitting-time slopes vs local dimension at sampled typical targets.

    All (target, start) pairs iterate together per radius: the engine takes
    per-point target arrays, so the pass count is one per radius.
    """
    radii = _check_radii(radii)
    rng_t = stream(seed, 1)
    txs, tys = sample_attractor_points(model, fam, n_targets, rng_t,
                                       exclude_x_below=0.05)
    # ball masses from orbit occupation at the same radii (plus two coarser
    # scales for window width) keep the dimension estimate and the slope on
    # matched scales; the grid family cannot resolve balls below its cells
    dim_radii = np.concatenate([[radii.max() * 4, radii.max() * 2], radii])
    masses, counts = orbit_ball_masses(model, fam, np.column_stack([txs, tys]),
                                       dim_radii, seed=seed)
    result = LoglawResult(targets=[], dim_estimates=[], slope_estimates=[],
                          tolerance=tolerance)
    for t in range(n_targets):
        tx, ty = float(txs[t]), float(tys[t])
        sxs, sys = sample_family_points(fam, n_starts, stream(seed, 100 + t))
        samples = []
        for r in radii:
            cap = n_cap if n_cap is not None else default_map_cap(float(r))
            times, cens = hitting_times_map(model, sxs, sys, tx, ty, float(r), cap)
            samples.extend(
                HittingSample(tx, ty, float(r), i, float(times[i]), bool(cens[i]))
                for i in range(n_starts)
            )
        keep = counts[t] >= 30  # occupation counts below this are too noisy
        dim = _dim_from_masses((tx, ty), dim_radii[keep], masses[t][keep])
        est = loglaw_slope(samples)
        result.targets.append((tx, ty))
        result.dim_estimates.append(dim)
        result.slope_estimates.append(est)
        result.samples.extend(samples)
        if abs(est.slope - dim.slope) <= tolerance * dim.slope:
            result.agree += 1
    return result


def loglaw_flow_experiment(model: ValidatedModel, fam: LeafFamily, n_targets: int,
                           n_starts: int, radii, seed: int, tolerance: float = 0.15,
                           phase_frac: float = 0.4) -> LoglawResult:
    """Flow version: targets sit along the flow above sampled section points.

    Each slope is compared against (flow local dimension - 1); the flow ball
    masses come from quadrature of dwell times against the family.
    """
    from .flow import cube_exit_time

    radii = _check_radii(radii)
    rng_t = stream(seed, 1)
    txs, tys = sample_attractor_points(model, fam, n_targets, rng_t,
                                       exclude_x_below=0.05)
    centers = []
    for t in range(n_targets):
        bx, by = float(txs[t]), float(tys[t])
        t0 = phase_frac * cube_exit_time(model, bx)
        centers.append((bx * math.exp(model.lambda1 * t0),
                        by * math.exp(model.lambda2 * t0),
                        math.exp(model.lambda3 * t0)))
    dim_radii = np.concatenate([[radii.max() * 4, radii.max() * 2], radii])
    fmasses, fweights = flow_orbit_ball_masses(model, fam, centers, dim_radii, seed=seed)
    bmasses, bcounts = orbit_ball_masses(model, fam, np.column_stack([txs, tys]),
                                         dim_radii, seed=seed)
    result = LoglawResult(targets=[], dim_estimates=[], slope_estimates=[],
                          tolerance=tolerance)
    result.base_dim_estimates = []
    for t in range(n_targets):
        center = centers[t]
        sxs, sys = sample_family_points(fam, n_starts, stream(seed, 100 + t))
        samples = []
        for r in radii:
            times, cens = hitting_times_flow(model, sxs, sys, center, float(r))
            samples.extend(
                HittingSample(center[0], center[1], float(r), i,
                              float(times[i]), bool(cens[i]))
                for i in range(n_starts)
            )
        keep = fmasses[t] > 0
        dim = _dim_from_masses(center, dim_radii[keep], fmasses[t][keep])
        keep_b = bcounts[t] >= 30
        base_dim = _dim_from_masses((float(txs[t]), float(tys[t])),
                                    dim_radii[keep_b], bmasses[t][keep_b])
        est = loglaw_slope(samples)
        result.targets.append(center)
        result.dim_estimates.append(dim)
        result.base_dim_estimates.append(base_dim)
        result.slope_estimates.append(est)
        result.samples.extend(samples)
        if abs(est.slope - (dim.slope - 1.0)) <= tolerance * (dim.slope - 1.0):
            result.agree += 1
    return result


@dataclass
class SandwichResult:
    c_values: np.ndarray
    fraction_near_one: float
    birkhoff_mean: float
    mean_return: float


def sandwich_experiment(model: ValidatedModel, fam: LeafFamily, r: float,
                        n_starts: int, seed: int, band=(0.95, 1.05),
                        birkhoff_steps: int = 200_000) -> SandwichResult:
    """Flow hitting time against section hitting time times the mean return.

    Their ratio c(x, r) should concentrate near 1 as r shrinks; the mean
    return time itself is cross-checked against a long Birkhoff average of
    the roof.
    """
    rng = stream(seed, 7)
    t0x, t0y = sample_attractor_points(model, fam, 1, rng, exclude_x_below=0.1)
    tx, ty = float(t0x[0]), float(t0y[0])
    sxs, sys = sample_family_points(fam, n_starts, stream(seed, 8))
    far = np.maximum(np.abs(sxs - tx), np.abs(sys - ty)) > 4 * r
    sxs, sys = sxs[far], sys[far]
    mean_rt = mean_return_time(model, fam.marginal.normalized())
    tmap, cmap = hitting_times_map(model, sxs, sys, tx, ty, r)
    tflow, cflow = hitting_times_flow(model, sxs, sys, (tx, ty, 1.0), r)
    ok = ~cmap & ~cflow
    cs = tflow[ok] / (tmap[ok].astype(float) * mean_rt)
    frac = float(np.mean((cs >= band[0]) & (cs <= band[1]))) if cs.size else 0.0

    bx, by = sample_family_points(fam, 1, stream(seed, 9))
    xs = np.array([float(bx[0])])
    ys = np.array([float(by[0])])
    total = 0.0
    for _ in range(birkhoff_steps):
        total += float(roof_batch(model, xs)[0])
        xs, ys = map_batch(model, xs, ys)
    return SandwichResult(c_values=cs, fraction_near_one=frac,
                          birkhoff_mean=total / birkhoff_steps, mean_return=mean_rt)


@dataclass
class RecurrenceResult:
    radii: np.ndarray
    medians: np.ndarray
    pair_slopes: np.ndarray
    slope_window: tuple
    fit: DimensionEstimate
    samples: list = field(default_factory=list)


def recurrence_experiment(model, fam: LeafFamily, radii, n_starts: int,
                          seed: int, n_cap=None) -> RecurrenceResult:
    """Return-time scaling of typical points to their own shrinking balls."""
    radii = _check_radii(radii)
    rng = stream(seed, 21)
    xs, ys = sample_family_points(fam, n_starts, rng)
    medians = np.empty(radii.size)
    samples = []
    for i, r in enumerate(radii):
        cap = n_cap if n_cap is not None else default_map_cap(float(r))
        times, cens, never = recurrence_times_map(model, xs, ys, float(r), cap)
        good = ~cens & ~never
        if good.mean() < 0.8:
            raise TooCensored(f"recurrence censoring too high at r = {r!r}")
        medians[i] = float(np.median(times[good]))
        samples.extend(
            HittingSample(float(xs[k]), float(ys[k]), float(r), k,
                          float(times[k]), bool(cens[k] | never[k]))
            for k in range(xs.size)
        )
    logs = np.log(medians)
    neg = -np.log(radii)
    pair = np.diff(logs) / np.diff(neg)
    slope, _, se, _ = _ols(neg, logs)
    fit = DimensionEstimate(point=(math.nan, math.nan), slope=slope,
                            ci_halfwidth=2 * se, r_range=(radii.min(), radii.max()),
                            values=tuple(medians))
    return RecurrenceResult(radii=radii, medians=medians, pair_slopes=pair,
                            slope_window=(float(pair.min()), float(pair.max())),
                            fit=fit, samples=samples)
