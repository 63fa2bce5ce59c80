"""Grid-based measure algebra on the interval and on the square.

Everything here is a computable surrogate for the measure theory of
Lorenz-like skew products:

* ``Density1D`` / ``TransferOperator`` / ``invariant_density``: Ulam
  discretisation of the pushforward of the one-dimensional factor map and its
  fixed density.
* ``w1_1d`` / ``w1_zero``: Wasserstein distance of 1D measures via the exact
  CDF formula, and its flat-norm variant (test functions bounded by 1 in both
  Lipschitz constant and sup norm) via a finite linear program over grid atoms.
* ``LeafFamily``: a measure on the square disintegrated into a marginal over
  leaf coordinates plus one (non-normalised) measure per vertical leaf, with
  the leaf-wise pushforward under a skew product, iteration toward the
  physical measure, the product upper bound for the distance of two families,
  and the leaf-wise variation functional with its Lasota-Yorke style budget.

Grids are uniform over I = [-1/2, 1/2].  A density carries cell-averaged
values; a leaf family carries, for each of N columns, the masses of M cells
whose total equals the marginal density value at that column.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import maps as _maps
from .errors import (
    DegenerateCell,
    MassMismatch,
    NegativeObservable,
    NoConvergence,
)

__all__ = [
    "Density1D",
    "TransferOperator",
    "LeafFamily",
    "VariationReport",
    "RestrictionReport",
    "ulam_operator",
    "invariant_density",
    "variation",
    "w1_1d",
    "w1_zero",
    "disintegrate",
    "push_forward",
    "srb_iterate",
    "prod_bound",
    "var_G",
    "lipschitz_restrict",
    "cell_centers",
    "cell_edges",
    "goodness_budget",
]

_MASS_RTOL = 1e-9


def cell_centers(n: int) -> np.ndarray:
    return -0.5 + (np.arange(n) + 0.5) / n


def cell_edges(n: int) -> np.ndarray:
    return -0.5 + np.arange(n + 1) / n


# ---------------------------------------------------------------------------
# densities on the interval


@dataclass(frozen=True)
class Density1D:
    """Cell-averaged nonnegative density on a uniform grid over I."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("density needs a 1D grid with at least 2 cells")
        if not np.all(np.isfinite(vals)) or np.any(vals < -1e-12):
            raise ValueError("density values must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def width(self) -> float:
        return 1.0 / self.values.size

    def mass(self) -> float:
        return float(np.mean(self.values))

    def normalized(self) -> "Density1D":
        m = self.mass()
        if m <= 0:
            raise ValueError("cannot normalise a zero density")
        return Density1D(self.values / m)

    def cdf(self) -> np.ndarray:
        """Cumulative mass at the n+1 cell edges; nondecreasing."""
        return np.concatenate([[0.0], np.cumsum(self.values) * self.width])

    def centers(self) -> np.ndarray:
        return cell_centers(self.n)

    @staticmethod
    def uniform(n: int) -> "Density1D":
        return Density1D(np.ones(n))


def variation(f: Union[Density1D, np.ndarray]) -> float:
    """Grid total variation, interior jumps only (boundary values excluded)."""
    vals = f.values if isinstance(f, Density1D) else np.asarray(f, dtype=float)
    return float(np.sum(np.abs(np.diff(vals))))


# ---------------------------------------------------------------------------
# Ulam discretisation of the 1D transfer operator


def _transition(map1d: Callable, n: int, nodes_per_cell: int):
    """Exact-interval Ulam transition: images of cell subintervals spread
    proportionally over the target cells they cover.

    Each cell is split into subintervals (4x as many for cells meeting
    |x| < 2/n, where the derivative of a cusp map blows up); images are taken
    at one-sidedly nudged subinterval ends, so jump discontinuities sitting on
    subdivision points stay sharp.  Returns flat arrays
    (src_cell, sub_mid_x, tgt_col, weight); weights sum to 1 per source cell.
    Point-sample binning would leave O(1/nodes) staircase noise in the fixed
    density; interval deposits remove it.
    """
    edges = cell_edges(n)
    lo_e, hi_e = edges[:-1], edges[1:]
    near = (np.minimum(np.abs(lo_e), np.abs(hi_e)) < 2.0 / n) | ((lo_e < 0) & (hi_e > 0))
    src_parts, mid_parts, lo_parts, hi_parts, w_parts = [], [], [], [], []
    for mask, q in ((~near, nodes_per_cell), (near, 4 * nodes_per_cell)):
        cells = np.flatnonzero(mask)
        if cells.size == 0:
            continue
        step = 1.0 / (n * q)
        a = lo_e[cells][:, None] + np.arange(q)[None, :] * step
        b = a + step
        nudge = step * 1e-9
        img_a = np.asarray(map1d((a + nudge).ravel()), dtype=float)
        img_b = np.asarray(map1d((b - nudge).ravel()), dtype=float)
        if not (np.all(np.isfinite(img_a)) and np.all(np.isfinite(img_b))):
            raise DegenerateCell("map not finite on nudged subinterval ends")
        src_parts.append(np.repeat(cells, q))
        mid_parts.append(((a + b) / 2).ravel())
        lo_parts.append(np.minimum(img_a, img_b))
        hi_parts.append(np.maximum(img_a, img_b))
        w_parts.append(np.full(cells.size * q, 1.0 / q))
    src = np.concatenate(src_parts)
    mid = np.concatenate(mid_parts)
    lo = np.concatenate(lo_parts)
    hi = np.concatenate(hi_parts)
    w = np.concatenate(w_parts)

    i0 = np.clip(np.floor((lo + 0.5) * n).astype(np.int64), 0, n - 1)
    i1 = np.clip(np.floor((hi + 0.5) * n - 1e-12).astype(np.int64), 0, n - 1)
    i1 = np.maximum(i1, i0)
    span = int((i1 - i0).max())
    length = np.maximum(hi - lo, 1e-300)
    cols_out, src_out, mid_out, w_out = [], [], [], []
    for off in range(span + 1):
        cell = i0 + off
        live = cell <= i1
        if not live.any():
            break
        c_lo = -0.5 + cell / n
        c_hi = c_lo + 1.0 / n
        frac = (np.minimum(hi, c_hi) - np.maximum(lo, c_lo)) / length
        frac = np.where(i1 == i0, 1.0, np.clip(frac, 0.0, 1.0))
        keep = live & (frac > 0)
        cols_out.append(cell[keep])
        src_out.append(src[keep])
        mid_out.append(mid[keep])
        w_out.append((w * frac)[keep])
    return (
        np.concatenate(src_out),
        np.concatenate(mid_out),
        np.concatenate(cols_out),
        np.concatenate(w_out),
    )


@dataclass(frozen=True)
class TransferOperator:
    """Row-stochastic Ulam matrix; entry (i, j) = mass fraction cell i -> cell j."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        rs = np.asarray(self.matrix.sum(axis=1)).ravel()
        if np.any(np.abs(rs - 1.0) > 1e-12):
            raise ValueError("transfer operator rows must sum to 1 within 1e-12")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def push(self, dens: Density1D) -> Density1D:
        """Pushforward of a density (uniform cells make mass and density agree)."""
        return Density1D(dens.values @ self.matrix)


def ulam_operator(map1d: Callable, n: int, nodes_per_cell: int = 64) -> TransferOperator:
    """Ulam discretisation of the pushforward of ``map1d`` on n uniform cells.

    ``map1d`` must be evaluable on arrays away from a finite singular set;
    non-finite images are dropped with row renormalisation, and a cell whose
    nodes are all singular raises DegenerateCell.
    """
    if n < 16:
        raise ValueError("need at least 16 cells")
    if nodes_per_cell < 64:
        nodes_per_cell = 64
    src, _, col, w = _transition(map1d, n, nodes_per_cell)
    mat = sp.coo_matrix((w, (src, col)), shape=(n, n)).tocsr()
    rs = np.asarray(mat.sum(axis=1)).ravel()
    if np.any(rs <= 0):
        raise DegenerateCell("a cell received no image mass")
    if np.any(np.abs(rs - 1.0) > 1e-15):
        mat = sp.diags(1.0 / rs) @ mat
    return TransferOperator(mat.tocsr())


def invariant_density(op: TransferOperator, tol: float = 1e-10, max_iter: int = 100_000) -> Density1D:
    """Fixed density of the Ulam operator by power iteration.

    Stops when the L1 residual of one application falls below ``tol``;
    raises NoConvergence past ``max_iter``.
    """
    n = op.n
    mass = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        new = mass @ op.matrix
        new /= new.sum()
        resid = float(np.abs(new - mass).sum())
        mass = new
        if resid < tol:
            return Density1D(np.maximum(mass, 0.0) * n).normalized()
    raise NoConvergence(f"residual {resid:.3e} above {tol:.1e} after {max_iter} iterations")


# ---------------------------------------------------------------------------
# Wasserstein distances of 1D measures

AtomsLike = Union[Density1D, tuple]


def _as_atoms(m: AtomsLike):
    """Return (positions, weights) for a Density1D or an (positions, weights) pair."""
    if isinstance(m, Density1D):
        return m.centers(), m.values * m.width
    pos, w = m
    pos = np.asarray(pos, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if pos.shape != w.shape:
        raise ValueError("positions and weights must have equal length")
    if np.any(w < -1e-15):
        raise ValueError("atom weights must be nonnegative")
    return pos, np.maximum(w, 0.0)


def w1_1d(mu: AtomsLike, nu: AtomsLike) -> float:
    """Exact Wasserstein-1 distance of equal-mass 1D measures, via CDFs.

    W1(mu, nu) = integral of |F_mu - F_nu|; for atomic measures this is the
    pooled-support sum of |cumulative difference| times gap length.
    """
    pa, wa = _as_atoms(mu)
    pb, wb = _as_atoms(nu)
    ma, mb = wa.sum(), wb.sum()
    if abs(ma - mb) > _MASS_RTOL * max(1.0, abs(ma)):
        raise MassMismatch(f"total masses differ: {ma!r} vs {mb!r}")
    pos = np.concatenate([pa, pb])
    sgn = np.concatenate([wa, -wb])
    order = np.argsort(pos, kind="stable")
    pos, sgn = pos[order], sgn[order]
    cum = np.cumsum(sgn)
    return float(np.sum(np.abs(cum[:-1]) * np.diff(pos)))


def _pooled_signed(mu: AtomsLike, nu: AtomsLike):
    pa, wa = _as_atoms(mu)
    pb, wb = _as_atoms(nu)
    pos = np.concatenate([pa, pb])
    sgn = np.concatenate([wa, -wb])
    upos, inv = np.unique(pos, return_inverse=True)
    d = np.zeros(upos.size)
    np.add.at(d, inv, sgn)
    return upos, d


def _coarsen_atoms(pos, d, cap):
    # bin onto a uniform grid spanning the support; keeps the LP bounded
    lo, hi = pos.min(), pos.max()
    if hi - lo <= 0:
        return np.array([lo]), np.array([d.sum()])
    idx = np.clip(((pos - lo) / (hi - lo) * cap).astype(int), 0, cap - 1)
    out = np.zeros(cap)
    np.add.at(out, idx, d)
    centers = lo + (np.arange(cap) + 0.5) * (hi - lo) / cap
    keep = out != 0.0
    return centers[keep], out[keep]


def w1_zero(mu: AtomsLike, nu: AtomsLike, atom_cap: int = 1024) -> float:
    """Flat-norm variant of W1: test functions 1-Lipschitz with sup norm <= 1.

    Computed as a finite LP over the pooled grid atoms: maximise sum(d_k g_k)
    subject to |g_k| <= 1 and |g_{k+1} - g_k| <= gap_k.  Accepts measures of
    different total mass; always >= |mu(I) - nu(I)| (test function g = 1).
    """
    pos, d = _pooled_signed(mu, nu)
    keep = d != 0.0
    pos, d = pos[keep], d[keep]
    if pos.size == 0:
        return 0.0
    if pos.size == 1:
        return float(abs(d[0]))
    if pos.size > atom_cap:
        pos, d = _coarsen_atoms(pos, d, atom_cap)
    m = pos.size
    gaps = np.diff(pos)
    rows = np.arange(m - 1)
    data = np.concatenate([np.ones(m - 1), -np.ones(m - 1)])
    a_fwd = sp.coo_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([rows + 1, rows]))),
        shape=(m - 1, m),
    )
    a_ub = sp.vstack([a_fwd, -a_fwd]).tocsc()
    b_ub = np.concatenate([gaps, gaps])
    res = linprog(-d, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"flat-norm LP failed: {res.message}")
    return float(max(-res.fun, 0.0))


# ---------------------------------------------------------------------------
# disintegrated measures on the square


@dataclass(frozen=True)
class LeafFamily:
    """Measure on the square stored leaf-by-leaf.

    ``leaf_masses[j, k]`` is the mass that the restriction to leaf j assigns
    to y-cell k; each row sums to the marginal *density* value at that column
    (the restriction of the measure to a leaf carries the marginal density as
    its total mass).  The plain joint cell masses are ``leaf_masses / N``.
    """

    leaf_masses: np.ndarray

    def __post_init__(self):
        lm = np.asarray(self.leaf_masses, dtype=float)
        object.__setattr__(self, "leaf_masses", lm)
        if lm.ndim != 2:
            raise ValueError("leaf_masses must be a (columns, cells) array")
        if not np.all(np.isfinite(lm)) or np.any(lm < -1e-12):
            raise ValueError("leaf masses must be finite and nonnegative")

    @property
    def n_leaves(self) -> int:
        return self.leaf_masses.shape[0]

    @property
    def leaf_cells(self) -> int:
        return self.leaf_masses.shape[1]

    @property
    def marginal(self) -> Density1D:
        return Density1D(self.leaf_masses.sum(axis=1))

    def total_mass(self) -> float:
        return float(self.leaf_masses.sum() / self.n_leaves)

    def to_joint(self) -> np.ndarray:
        """Cell masses of the plain 2D grid measure (reassembly is exact)."""
        return self.leaf_masses / self.n_leaves

    @staticmethod
    def product(marginal: Density1D, leaf_cells: int) -> "LeafFamily":
        """Product of a marginal with uniform leaves."""
        phi = marginal.values
        lm = np.repeat(phi[:, None] / leaf_cells, leaf_cells, axis=1)
        return LeafFamily(lm)

    @staticmethod
    def lebesgue(n_leaves: int, leaf_cells: int) -> "LeafFamily":
        return LeafFamily.product(Density1D.uniform(n_leaves), leaf_cells)


def disintegrate(joint: np.ndarray) -> LeafFamily:
    """Split a nonnegative 2D grid measure into marginal plus leaf measures.

    Reassembly via ``to_joint`` is bitwise exact on power-of-two grids, where
    scaling by the column count is an exponent shift.
    """
    joint = np.asarray(joint, dtype=float)
    if joint.ndim != 2 or np.any(joint < 0):
        raise ValueError("joint must be a nonnegative 2D mass array")
    return LeafFamily(joint * joint.shape[0])


# ---------------------------------------------------------------------------
# the leaf-wise pushforward


def _skew_callables(model):
    """(one-dimensional map, fiber map) callables for arrays."""
    if isinstance(model, _maps.ValidatedModel):
        return (
            lambda x: _maps.one_d_map_batch(model, x),
            lambda x, y: _maps.poincare_map_batch(model, x, y)[1],
        )
    return model.t, model.g


@dataclass(frozen=True)
class SkewProductMap:
    """Generic leaf-preserving skew product for oracles and comparisons.

    ``t`` maps x-arrays, ``g`` maps (x, y)-arrays; g must be monotone in y.
    Optional analytic derivatives feed the axiom checker and the dimension
    formula.
    """

    t: Callable
    g: Callable
    t_prime: Optional[Callable] = None
    g_y: Optional[Callable] = None
    leaf_contraction: float = 1.0
    name: str = "skew"


def doubling_map_1d(x):
    """Doubling on I with the discontinuity at 0, two increasing branches."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 2 * x + 0.5, 2 * x - 0.5)


def tent_map_1d(x):
    x = np.asarray(x, dtype=float)
    return 0.5 - 2.0 * np.abs(x)


def doubling_skew(contraction: float = 0.5, offset: float = 0.25) -> SkewProductMap:
    """Skew product over the doubling map with affine fiber contraction.

    contraction 1/2 with offset 1/4 tiles the square exactly (the invariant
    measure is Lebesgue, dimension 2); contraction 1/3 leaves a Cantor set in
    the fiber (dimension 1 + ln2/ln3).  Good for derivative and quadrature
    oracles; do NOT iterate orbits of the doubling map in floating point (the
    binary-exact doubling drains the mantissa and every orbit collapses onto
    the fixed point within ~53 steps) -- use ``triple_skew`` for orbits.
    """

    def g(x, y):
        x = np.asarray(x, dtype=float)
        return contraction * np.asarray(y, dtype=float) + np.where(x > 0, -offset, offset)

    return SkewProductMap(
        t=doubling_map_1d,
        g=g,
        t_prime=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        g_y=lambda x: np.full_like(np.asarray(x, dtype=float), contraction),
        leaf_contraction=contraction,
        name=f"doubling-skew-{contraction:g}",
    )


def triple_map_1d(x):
    """Tripling on I, three increasing branches; orbit-safe in floating point."""
    x = np.asarray(x, dtype=float)
    u = 3.0 * (x + 0.5)
    return u - np.floor(u) - 0.5


def triple_skew() -> SkewProductMap:
    """Lebesgue-preserving skew product over the tripling map (dimension 2).

    The three fiber images y/3 + {1/3, 0, -1/3} tile the interval, so the
    invariant measure is exactly the Lebesgue measure of the square; unlike
    binary doubling, multiplying by 3 keeps floating-point orbits ergodic.
    """

    def g(x, y):
        x = np.asarray(x, dtype=float)
        off = np.where(x < -1.0 / 6.0, 1.0 / 3.0, np.where(x > 1.0 / 6.0, -1.0 / 3.0, 0.0))
        return np.asarray(y, dtype=float) / 3.0 + off

    return SkewProductMap(
        t=triple_map_1d,
        g=g,
        t_prime=lambda x: np.full_like(np.asarray(x, dtype=float), 3.0),
        g_y=lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / 3.0),
        leaf_contraction=1.0 / 3.0,
        name="triple-skew",
    )


__all__ += ["SkewProductMap", "doubling_map_1d", "tent_map_1d", "doubling_skew",
            "triple_map_1d", "triple_skew"]

_PUSH_CACHE: dict = {}


def _push_plan(model, n: int, nodes_per_cell: int):
    """Precompute the x-transition triples shared with the Ulam operator."""
    key = (id(model), n, nodes_per_cell)
    plan = _PUSH_CACHE.get(key)
    if plan is not None:
        return plan
    t_fn, g_fn = _skew_callables(model)
    src, mid, col, w = _transition(t_fn, n, nodes_per_cell)
    rs = np.bincount(src, weights=w, minlength=n)
    w = w / rs[src]  # exact row stochasticity, matching ulam_operator
    order = np.argsort(src, kind="stable")
    src, mid, col, w = src[order], mid[order], col[order], w[order]
    starts = np.searchsorted(src, np.arange(n + 1))
    plan = (src, mid, col, w, starts, g_fn)
    if len(_PUSH_CACHE) > 8:
        _PUSH_CACHE.clear()
    _PUSH_CACHE[key] = plan
    return plan


def push_forward(model, fam: LeafFamily, nodes_per_cell: int = 64) -> LeafFamily:
    """Leaf-wise pushforward of a family under a skew product.

    Each target leaf collects its preimage leaves weighted by the inverse
    derivative of the factor map (realised here by forward quadrature with the
    same nodes as the Ulam operator, so the marginal evolves exactly by the
    Ulam matrix), and every leaf measure rides through the contracting fiber
    map with mass spread exactly over the image interval of each y-cell.
    Total mass is conserved to roundoff.
    """
    n, m = fam.n_leaves, fam.leaf_cells
    node_src, node_x, node_col, node_w, starts, g_fn = _push_plan(model, n, nodes_per_cell)
    y_edges = cell_edges(m)
    out = np.zeros((n, m))
    out_flat = out.ravel()
    masses = fam.leaf_masses

    for j in range(n):
        sl = slice(starts[j], starts[j + 1])
        row = masses[j]
        q = starts[j + 1] - starts[j]
        if q == 0 or not row.any():
            continue
        xs = node_x[sl]
        cols = node_col[sl]
        wts = node_w[sl]
        # image of every y-cell edge under the fiber map at each node
        ge = g_fn(np.repeat(xs, m + 1), np.tile(y_edges, q)).reshape(q, m + 1)
        lo = np.minimum(ge[:, :-1], ge[:, 1:])
        hi = np.maximum(ge[:, :-1], ge[:, 1:])
        mass = (wts[:, None] * row[None, :]).ravel()
        lo = lo.ravel()
        hi = hi.ravel()
        length = np.maximum(hi - lo, 1e-300)
        i0 = np.clip(np.floor((lo + 0.5) * m).astype(np.int64), 0, m - 1)
        i1 = np.clip(np.floor((hi + 0.5) * m - 1e-12).astype(np.int64), 0, m - 1)
        i1 = np.maximum(i1, i0)
        # contraction < 1 means an image interval spans at most two cells
        bound = (i0 + 1.0) / m - 0.5
        f0 = np.clip((bound - lo) / length, 0.0, 1.0)
        same = i1 == i0
        f0 = np.where(same, 1.0, f0)
        rows_flat = np.repeat(cols, m) * m
        np.add.at(out_flat, rows_flat + i0, mass * f0)
        np.add.at(out_flat, rows_flat + i1, mass * (1.0 - f0))
    return LeafFamily(out)


def srb_iterate(model, steps: int, n_leaves: int = 512, leaf_cells: int = 512,
                nodes_per_cell: int = 64, marginal: Optional[Density1D] = None) -> LeafFamily:
    """Iterate the product of the invariant 1D density with uniform leaves.

    The marginal is already the fixed density of the factor map, so iteration
    only tightens the leaf measures (uniform leaf contraction makes successive
    families Cauchy in the product bound); ``steps`` of order 25 reach grid
    accuracy for contraction rates around 1/3.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if marginal is None:
        t_fn, _ = _skew_callables(model)
        op = ulam_operator(t_fn, n_leaves, nodes_per_cell)
        marginal = invariant_density(op)
    fam = LeafFamily.product(marginal, leaf_cells)
    for _ in range(steps):
        fam = push_forward(model, fam, nodes_per_cell)
    return fam


# ---------------------------------------------------------------------------
# distances and variation of families


def _normalized_leaves(fam: LeafFamily) -> np.ndarray:
    phi = fam.leaf_masses.sum(axis=1)
    out = np.empty_like(fam.leaf_masses)
    pos = phi > 1e-300
    out[pos] = fam.leaf_masses[pos] / phi[pos, None]
    out[~pos] = 1.0 / fam.leaf_cells  # convention: empty leaves carry uniform
    return out


def prod_bound(a: LeafFamily, b: LeafFamily) -> float:
    """Upper bound for W1 of two equal-mass families on the square (sup metric).

    epsilon: the largest W1 distance of normalised leaf measures over columns;
    delta: the total-variation discrepancy of the marginals (the exact value of
    the sup over tests bounded by 1).  W1(a, b) <= epsilon + delta.
    """
    if a.leaf_masses.shape != b.leaf_masses.shape:
        raise ValueError("families must share the same grid")
    ma, mb = a.total_mass(), b.total_mass()
    if abs(ma - mb) > _MASS_RTOL * max(1.0, abs(ma)):
        raise MassMismatch(f"total masses differ: {ma!r} vs {mb!r}")
    la = _normalized_leaves(a)
    lb = _normalized_leaves(b)
    # atoms sit at common cell centers: W1 per column is the cumulative
    # difference summed over the first M-1 gaps of width 1/M
    cum = np.cumsum(la - lb, axis=1)[:, :-1]
    eps = float(np.max(np.sum(np.abs(cum), axis=1) / a.leaf_cells))
    delta = float(np.sum(np.abs(a.marginal.values - b.marginal.values)) / a.n_leaves)
    return eps + delta


@dataclass(frozen=True)
class VariationReport:
    """Leaf-wise variation of a family and its theoretical budget."""

    variation: float
    goodness_bound: Optional[float] = None


def model_goodness_constants(model) -> tuple:
    """(k, lam, var_inv_tprime) closed-form constants of a validated model."""
    if isinstance(model, _maps.ValidatedModel):
        lam = model.leaf_contraction
        k = model.sigma * model.beta * 0.5**model.beta
        inf_tp = model.theta * model.alpha * 2 ** (1 - model.alpha)
        var_inv = 2.0 / inf_tp
        return k, lam, var_inv
    raise TypeError("closed-form constants only available for ValidatedModel")


def goodness_budget(model, marginal_bv_bound: float, initial_variation: float = 0.0) -> float:
    """Uniform bound on the leaf-wise variation of all pushforward iterates.

    max(initial variation, (2 + 3C + (C+1)Var(1/T') + 2k(C+1)) / (1 - lam))
    where C bounds the grid variation of every iterate's marginal density.
    """
    k, lam, var_inv = model_goodness_constants(model)
    c = marginal_bv_bound
    bound = (2.0 + 3.0 * c + (c + 1.0) * var_inv + 2.0 * k * (c + 1.0)) / (1.0 - lam)
    return max(initial_variation, bound)


def var_G(fam: LeafFamily, model=None, marginal_bv_bound: Optional[float] = None,
          initial_variation: float = 0.0) -> VariationReport:
    """Total variation of the leaf-restriction map gamma -> mu|_gamma.

    Sums the flat-norm distance of consecutive leaf restrictions over the
    column grid (the finest available subdivision; the functional is monotone
    under refinement).  When a model is supplied, also evaluates the uniform
    budget from the measured marginal variation.
    """
    lm = fam.leaf_masses
    total = 0.0
    for j in range(fam.n_leaves - 1):
        d = lm[j] - lm[j + 1]
        span = float(np.abs(d).sum())
        if span < 1e-14:
            continue
        total += w1_zero((cell_centers(fam.leaf_cells), lm[j]),
                         (cell_centers(fam.leaf_cells), lm[j + 1]))
    bound = None
    if model is not None:
        c = marginal_bv_bound if marginal_bv_bound is not None else variation(fam.marginal)
        bound = goodness_budget(model, c, initial_variation)
    return VariationReport(variation=total, goodness_bound=bound)


@dataclass(frozen=True)
class RestrictionReport:
    family: LeafFamily
    marginal_variation: float
    bound: float
    ok: bool


def lipschitz_restrict(fam: LeafFamily, f: Callable, ell: float,
                       goodness: Optional[float] = None) -> RestrictionReport:
    """Multiply a family by a nonnegative Lipschitz observable, cell-wise.

    ``f`` takes (x, y) arrays, must be nonnegative with sup norm and Lipschitz
    constant at most ``ell``.  The report carries the variation of the new
    marginal together with the budget 3*ell*K + ell, where K is the supplied
    (or measured) leaf-wise variation of the input family.
    """
    xs = cell_centers(fam.n_leaves)
    ys = cell_centers(fam.leaf_cells)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vals = np.asarray(f(gx, gy), dtype=float)
    if np.any(vals < -1e-12):
        raise NegativeObservable("observable must be nonnegative on the square")
    if np.max(np.abs(vals)) > ell * (1 + 1e-9):
        raise ValueError("observable exceeds its stated sup-norm bound")
    new = LeafFamily(fam.leaf_masses * np.maximum(vals, 0.0))
    var_marg = variation(new.marginal)
    if goodness is None:
        goodness = var_G(fam).variation
    bound = 3.0 * ell * goodness + ell
    return RestrictionReport(family=new, marginal_variation=var_marg, bound=bound,
                             ok=bool(var_marg <= bound * (1 + 1e-9) + 1e-12))
