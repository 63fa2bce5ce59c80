"""Suspension flow over the return map with a logarithmic roof.

Inside the linearised cube [-1, 1]^3 the flow is coordinatewise exponential,
X^t(x, y, z) = (x e^{l1 t}, y e^{l2 t}, z e^{l3 t}); a point of the section
(x, y, 1) leaves the cube through a lateral face after t = -ln|x| / l1 and
travels outside for a fixed time Delta before returning to the section.  The
roof function is therefore t(x) = -ln|x| / l1 + Delta, logarithmically
singular on the stable leaf of the equilibrium, and the suspension of the
return map under this roof realises the flow up to the (irrelevant) geometry
of the outer excursion.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import maps as _maps
from .errors import NonIntegrable, SingularInput
from .maps import SectionPoint, ValidatedModel
from .measures import Density1D, cell_edges

__all__ = [
    "RoofFunction",
    "SuspensionState",
    "FlowPoint",
    "roof",
    "roof_batch",
    "cube_exit_time",
    "linear_flow",
    "advance",
    "embed",
    "mean_return_time",
    "birkhoff_roof_average",
    "sample_trajectory",
    "trajectory_csv_rows",
    "TRAJECTORY_HEADER",
]


@dataclass(frozen=True)
class RoofFunction:
    """Return time to the section: -ln|x|/rate + outer_travel_time.

    Satisfies the two-sided logarithmic bound
    -K^{-1} ln d(x, singular leaf) - C <= t(x) <= -K ln d(x, .) + C
    with K = max(rate, 1/rate) and C = outer_travel_time.
    """

    rate: float
    outer_travel_time: float = 0.0

    def __call__(self, x: float) -> float:
        if x == 0.0:
            raise SingularInput("roof diverges on the singular leaf")
        return -math.log(abs(x)) / self.rate + self.outer_travel_time

    def batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -np.log(np.abs(x)) / self.rate + self.outer_travel_time

    @property
    def bound_constants(self):
        k = max(self.rate, 1.0 / self.rate)
        return k, self.outer_travel_time

    @staticmethod
    def from_model(model: ValidatedModel) -> "RoofFunction":
        return RoofFunction(rate=model.lambda1, outer_travel_time=model.outer_travel_time)


@dataclass(frozen=True)
class SuspensionState:
    """Point of the suspension: a section point plus elapsed time under the roof."""

    base: SectionPoint
    phase: float = 0.0


@dataclass(frozen=True)
class FlowPoint:
    """Point in the cube, or a tagged outer-branch state.

    In-cube points satisfy |x|, |y|, |z| <= 1.  During the outer excursion the
    coordinates freeze at the cusp exit point and ``remaining`` counts down the
    travel time to the section.
    """

    x: float
    y: float
    z: float
    outer: bool = False
    remaining: float = 0.0
    wing: int = 0


def cube_exit_time(model: ValidatedModel, x: float) -> float:
    """Time for (x, y, 1) to reach a lateral face |x| = 1 of the cube."""
    if x == 0.0:
        raise SingularInput("the singular leaf never exits")
    return -math.log(abs(x)) / model.lambda1


def roof(model: ValidatedModel, x: float) -> float:
    return RoofFunction.from_model(model)(x)


def roof_batch(model: ValidatedModel, x: np.ndarray) -> np.ndarray:
    return RoofFunction.from_model(model).batch(x)


def linear_flow(model: ValidatedModel, p: FlowPoint, t: float) -> FlowPoint:
    """Coordinatewise exponential evolution for time t >= 0 (exact)."""
    if p.outer:
        raise ValueError("linear_flow applies to in-cube points only")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return FlowPoint(
        x=p.x * math.exp(model.lambda1 * t),
        y=p.y * math.exp(model.lambda2 * t),
        z=p.z * math.exp(model.lambda3 * t),
    )


def advance(model: ValidatedModel, s: SuspensionState, dt: float) -> SuspensionState:
    """Move a suspension state forward by dt, crossing the roof as needed."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    x, y = s.base.x, s.base.y
    phase = s.phase + dt
    r = roof(model, x)
    while phase >= r:
        phase -= r
        nxt = _maps.poincare_map(model, SectionPoint(x, y))
        x, y = nxt.x, nxt.y
        r = roof(model, x)
    return SuspensionState(base=SectionPoint(x, y), phase=phase)


def embed(model: ValidatedModel, s: SuspensionState) -> FlowPoint:
    """Realise a suspension state as a point of the flow.

    Phases below the cube exit time flow linearly from (x, y, 1); the phase
    hitting the exit time lands on the cusp image (sgn x, y|x|^beta, |x|^alpha);
    later phases return the tagged outer state with the remaining travel time.
    """
    x, y = s.base.x, s.base.y
    tc = cube_exit_time(model, x)
    if s.phase < tc:
        return linear_flow(model, FlowPoint(x, y, 1.0), s.phase)
    sgn = 1.0 if x > 0 else -1.0
    ax = abs(x)
    total = tc + model.outer_travel_time
    return FlowPoint(
        x=sgn,
        y=y * ax**model.beta,
        z=ax**model.alpha,
        outer=s.phase > tc,
        remaining=max(total - s.phase, 0.0),
        wing=int(sgn),
    )


# ---------------------------------------------------------------------------
# quadrature of the roof


def _neglog_cell_integrals(n: int) -> np.ndarray:
    """Exact integrals of -ln|x| over the n grid cells (antiderivative x - x ln x)."""
    edges = cell_edges(n)

    def anti(u):
        u = np.abs(u)
        out = np.where(u > 0, u - u * np.log(np.maximum(u, 1e-300)), 0.0)
        return out

    left, right = edges[:-1], edges[1:]
    vals = np.empty(n)
    for i in range(n):
        a, b = left[i], right[i]
        if a >= 0:
            vals[i] = anti(b) - anti(a)
        elif b <= 0:
            vals[i] = anti(a) - anti(b)
        else:  # cell straddles 0
            vals[i] = anti(a) + anti(b)
    return vals


def mean_return_time(model: ValidatedModel, density: Density1D) -> float:
    """Quadrature of the roof against a marginal density (exact per cell).

    The logarithmic singularity is integrated in closed form against the
    piecewise-constant density, so refinement never diverges for bounded
    densities; a density concentrating on the singular leaf is rejected.
    """
    if abs(density.mass() - 1.0) > 1e-6:
        raise ValueError("density must be normalised")
    n = density.n
    cell_ints = _neglog_cell_integrals(n)
    contrib = density.values * cell_ints / model.lambda1
    total = float(contrib.sum()) + model.outer_travel_time * density.mass()
    # stability of the truncation near the singular leaf: the two innermost
    # cells must not dominate, otherwise the continuum integral is suspect
    mid = n // 2
    inner = float(contrib[max(mid - 1, 0):mid + 1].sum())
    if not math.isfinite(total) or (total > 0 and inner > 0.5 * total):
        raise NonIntegrable("return-time quadrature dominated by the singular cells")
    return total


def birkhoff_roof_average(model: ValidatedModel, x0: float, y0: float, steps: int) -> float:
    """Time average of the roof along an orbit of the return map."""
    xs = np.array([x0])
    ys = np.array([y0])
    acc = 0.0
    for _ in range(steps):
        acc += float(roof_batch(model, xs)[0])
        xs, ys = _maps.poincare_map_batch(model, xs, ys)
    return acc / steps


# ---------------------------------------------------------------------------
# trajectory sampling

TRAJECTORY_HEADER = "step,x,y,phase,cumulative_time"


def sample_trajectory(model: ValidatedModel, s0: SuspensionState, dt: float, n_steps: int):
    """States of the suspension sampled every dt, starting from s0."""
    out = [s0]
    s = s0
    for _ in range(n_steps):
        s = advance(model, s, dt)
        out.append(s)
    return out


def trajectory_csv_rows(model: ValidatedModel, s0: SuspensionState, dt: float, n_steps: int):
    """CSV rows (step, x, y, phase, cumulative_time), 12 significant digits."""
    rows = [TRAJECTORY_HEADER]
    for k, s in enumerate(sample_trajectory(model, s0, dt, n_steps)):
        rows.append(
            f"{k},{s.base.x:.12g},{s.base.y:.12g},{s.phase:.12g},{k * dt:.12g}"
        )
    return rows
