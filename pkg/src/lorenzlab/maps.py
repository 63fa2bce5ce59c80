"""Piecewise-expanding skew products on the square Sigma = I x I, I = [-1/2, 1/2].

The family implemented here is the return map of a Lorenz-like flow,

    F(x, y) = (T(x), G(x, y)),
    T(x)    = sign(x) * (theta * |x|**alpha - 1/2),
    G(x, y) = sigma * y * |x|**beta + g_offset(sign(x)),

with alpha in (1/2, 1) and beta > 1 derived from the saddle eigenvalues of the
linearised flow.  T has two increasing branches separated by the singular
line x = 0, blows up in derivative there, and is uniformly expanding; G
contracts every vertical leaf by at least lam = sigma * (1/2)**beta < 1.

``validate`` checks every constructability inequality and returns an immutable
``ValidatedModel`` carrying the derived constants; all map evaluations take the
validated model.  Scalar entry points operate on ``SectionPoint``; the *_batch
variants take numpy arrays and are what the experiment layer uses.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import (
    EigenvalueOrderViolation,
    InvalidParameter,
    LeafImagesOverlap,
    SingularInput,
    ThetaTooLarge,
    ThetaTooSmall,
)

__all__ = [
    "ModelParams",
    "ValidatedModel",
    "SectionPoint",
    "AxiomReport",
    "reference_params",
    "validate",
    "one_d_map",
    "one_d_map_total",
    "one_d_derivative",
    "poincare_map",
    "d_poincare",
    "axiom_check",
    "one_d_map_batch",
    "one_d_derivative_batch",
    "poincare_map_batch",
    "params_to_text",
    "params_from_text",
]

# tolerance for the strict inequalities of the axioms: finite sampling cannot
# certify an open condition, so we demand a margin
STRICT_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Raw parameters of the family, before validation."""

    lambda1: float
    lambda2: float
    lambda3: float
    theta: float
    sigma: float = 1.0
    g_offset_plus: float = -0.25
    g_offset_minus: float = 0.25
    outer_travel_time: float = 0.1


@dataclass(frozen=True)
class ValidatedModel:
    """Parameters plus derived constants, guaranteed consistent.

    alpha = -lambda3/lambda1, beta = -lambda2/lambda1; b0/b1 are the branch
    offsets of the one-dimensional map; leaf_contraction is the uniform bound
    lam = sigma*(1/2)**beta on |dG/dy|; singular_x marks the singular line.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    theta: float
    sigma: float
    g_offset_plus: float
    g_offset_minus: float
    outer_travel_time: float
    alpha: float
    beta: float
    b0: float = -0.5
    b1: float = 0.5
    leaf_contraction: float = 0.0
    singular_x: float = 0.0

    def g_offset(self, sign: float) -> float:
        return self.g_offset_plus if sign > 0 else self.g_offset_minus


@dataclass(frozen=True)
class SectionPoint:
    """Point of the cross-section square; map evaluation needs x != 0."""

    x: float
    y: float


@dataclass(frozen=True)
class AxiomReport:
    """Sampled estimates for the four structural conditions of the family.

    lipschitz_k : bound on |G(x1,y)-G(x2,y)| / |x1-x2| away from the singularity
    leaf_lambda : bound on the leaf contraction factor
    min_T_prime : sampled infimum of T'
    var_inv_T_prime : branch-wise total variation of 1/T'
    """

    lipschitz_k: float
    leaf_lambda: float
    min_T_prime: float
    var_inv_T_prime: float
    pass_transverse_lipschitz: bool
    pass_leaf_contraction: bool
    pass_expanding: bool
    pass_bv: bool

    @property
    def all_pass(self) -> bool:
        return (
            self.pass_transverse_lipschitz
            and self.pass_leaf_contraction
            and self.pass_expanding
            and self.pass_bv
        )


def reference_params() -> ModelParams:
    """The default desk-scale model used throughout the tests and demos."""
    return ModelParams(lambda1=10.0, lambda2=-15.0, lambda3=-6.0, theta=1.4)


def validate(params: ModelParams) -> ValidatedModel:
    """Check every constructability inequality and derive the model constants.

    Raises a named diagnostic on the first violated condition:
    EigenvalueOrderViolation, ThetaTooLarge (image of the square escapes),
    ThetaTooSmall (induced 1D map not expanding), LeafImagesOverlap.
    """
    vals = [
        params.lambda1,
        params.lambda2,
        params.lambda3,
        params.theta,
        params.sigma,
        params.g_offset_plus,
        params.g_offset_minus,
        params.outer_travel_time,
    ]
    if not all(math.isfinite(v) for v in vals):
        raise InvalidParameter("all model parameters must be finite")
    l1, l2, l3 = params.lambda1, params.lambda2, params.lambda3
    if l1 <= 0:
        raise EigenvalueOrderViolation(f"lambda1 must be positive, got {l1}")
    if l2 >= 0 or l3 >= 0:
        raise EigenvalueOrderViolation(f"lambda2, lambda3 must be negative, got {l2}, {l3}")
    # chain 0 < lambda1/2 < -lambda3 < lambda1 < -lambda2, strict so that the
    # derived ratios land in alpha in (1/2,1), beta > 1
    if not (l1 / 2 < -l3):
        raise EigenvalueOrderViolation(
            f"-lambda3 = {-l3} must exceed lambda1/2 = {l1 / 2}"
        )
    if not (-l3 < l1):
        raise EigenvalueOrderViolation(f"-lambda3 = {-l3} must be below lambda1 = {l1}")
    if not (l1 < -l2):
        raise EigenvalueOrderViolation(f"-lambda2 = {-l2} must exceed lambda1 = {l1}")
    alpha = -l3 / l1
    beta = -l2 / l1

    if params.theta <= 0:
        raise InvalidParameter(f"theta must be positive, got {params.theta}")
    if not (0 < params.sigma <= 1):
        raise InvalidParameter(f"sigma must lie in (0, 1], got {params.sigma}")
    if params.outer_travel_time < 0:
        raise InvalidParameter("outer_travel_time must be nonnegative")

    img = params.theta * 0.5**alpha
    if img >= 1:
        raise ThetaTooLarge(
            f"theta*(1/2)^alpha = {img:.6g} >= 1: image escapes the square"
        )
    expansion = params.theta * alpha * 2 ** (1 - alpha)
    if expansion <= 1:
        raise ThetaTooSmall(
            f"theta*alpha*2^(1-alpha) = {expansion:.6g} <= 1: 1D map not expanding"
        )

    lam = params.sigma * 0.5**beta
    # each branch image of G is [g_i - lam/2, g_i + lam/2] since |y| <= 1/2
    half = lam / 2
    for name, g in (("g_offset_plus", params.g_offset_plus), ("g_offset_minus", params.g_offset_minus)):
        if abs(g) + half > 0.5:
            raise LeafImagesOverlap(
                f"|{name}| + sigma*(1/2)^(beta+1) = {abs(g) + half:.6g} > 1/2: "
                "branch image leaves the interval"
            )
    if abs(params.g_offset_plus - params.g_offset_minus) <= lam:
        raise LeafImagesOverlap(
            "branch images of G overlap: |g_plus - g_minus| = "
            f"{abs(params.g_offset_plus - params.g_offset_minus):.6g} <= lam = {lam:.6g}"
        )

    return ValidatedModel(
        lambda1=l1,
        lambda2=l2,
        lambda3=l3,
        theta=params.theta,
        sigma=params.sigma,
        g_offset_plus=params.g_offset_plus,
        g_offset_minus=params.g_offset_minus,
        outer_travel_time=params.outer_travel_time,
        alpha=alpha,
        beta=beta,
        leaf_contraction=lam,
    )


def reference_model() -> ValidatedModel:
    return validate(reference_params())


__all__.append("reference_model")


# ---------------------------------------------------------------------------
# scalar map evaluations


def one_d_map(model: ValidatedModel, x: float) -> float:
    """T(x) for x != 0; increasing on each branch, image inside (-1/2, 1/2)."""
    if x == 0.0:
        raise SingularInput("one_d_map undefined at x = 0; use one_d_map_total")
    if x > 0:
        return model.theta * x**model.alpha + model.b0
    return -model.theta * (-x) ** model.alpha + model.b1


def one_d_map_total(model: ValidatedModel, x: float) -> float:
    """Total variant assigning the singular point its limit-from-above value -1/2."""
    if x == 0.0:
        return model.b0
    return one_d_map(model, x)


def one_d_derivative(model: ValidatedModel, x: float) -> float:
    """T'(x) = theta*alpha*|x|**(alpha-1) > 1, blowing up at the singularity."""
    if x == 0.0:
        raise SingularInput("derivative undefined at x = 0")
    return model.theta * model.alpha * abs(x) ** (model.alpha - 1)


def poincare_map(model: ValidatedModel, q: SectionPoint) -> SectionPoint:
    """One application of F = (T, G).  Requires q.x != 0."""
    if q.x == 0.0:
        raise SingularInput("poincare_map undefined on the singular line")
    gx = model.sigma * q.y * abs(q.x) ** model.beta + model.g_offset(q.x)
    return SectionPoint(one_d_map(model, q.x), gx)


def d_poincare(model: ValidatedModel, q: SectionPoint) -> np.ndarray:
    """Jacobian of F at q, a lower-triangular 2x2 matrix.

    d11 = theta*alpha*|x|**(alpha-1), d22 = sigma*|x|**beta, and
    d21 = sigma*beta*y*|x|**(beta-1)*sign(x); the upper-right entry is exactly
    zero because the first coordinate never depends on y.
    """
    if q.x == 0.0:
        raise SingularInput("d_poincare undefined on the singular line")
    ax = abs(q.x)
    s = 1.0 if q.x > 0 else -1.0
    d11 = model.theta * model.alpha * ax ** (model.alpha - 1)
    d21 = model.sigma * model.beta * q.y * ax ** (model.beta - 1) * s
    d22 = model.sigma * ax**model.beta
    return np.array([[d11, 0.0], [d21, d22]])


# ---------------------------------------------------------------------------
# batch evaluations (used by the measure and experiment layers)

SINGULAR_NUDGE = 1e-12  # exact hits on x = 0 are measure zero; nudge and go on


def _desingularise(x: np.ndarray) -> np.ndarray:
    hit = x == 0.0
    if np.any(hit):
        x = np.where(hit, SINGULAR_NUDGE, x)
    return x


def one_d_map_batch(model: ValidatedModel, x: np.ndarray) -> np.ndarray:
    x = _desingularise(np.asarray(x, dtype=float))
    ax = np.abs(x) ** model.alpha
    return np.where(x > 0, model.theta * ax + model.b0, -model.theta * ax + model.b1)


def one_d_derivative_batch(model: ValidatedModel, x: np.ndarray) -> np.ndarray:
    x = _desingularise(np.asarray(x, dtype=float))
    return model.theta * model.alpha * np.abs(x) ** (model.alpha - 1)


def poincare_map_batch(model: ValidatedModel, x: np.ndarray, y: np.ndarray):
    x = _desingularise(np.asarray(x, dtype=float))
    offs = np.where(x > 0, model.g_offset_plus, model.g_offset_minus)
    gy = model.sigma * y * np.abs(x) ** model.beta + offs
    return one_d_map_batch(model, x), gy


# ---------------------------------------------------------------------------
# axiom checker


def axiom_check(T, G, samples: int = 10_000, t_prime=None) -> AxiomReport:
    """Estimate the structural constants of a skew product (T, G) by sampling.

    T and G are callables on arrays, defined on I minus the singular line
    x = 0; ``t_prime`` may supply the analytic derivative, otherwise central
    differences are used.  The variation of 1/T' is accumulated branch-wise on
    a dense grid (equal to the endpoint oscillation when 1/T' is monotone on
    each branch, which is the case for the Lorenz-like family).
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples for stable estimates")
    n = samples // 2
    margin = 1.0 / (8 * n)
    # log spacing near the singular line captures tails of 1/T' and the
    # contraction factor; linear spacing covers the bulk
    xs_pos = np.unique(np.concatenate([
        np.geomspace(1e-9, 0.5 - margin, n // 2),
        np.linspace(margin, 0.5 - margin, n - n // 2),
    ]))
    xs = np.concatenate([-xs_pos[::-1], xs_pos])
    n = xs_pos.size

    # leaf contraction: sample pairs on a common leaf
    ys1 = np.linspace(-0.5, 0.5, 41)
    lam = 0.0
    gvals = np.array([G(xs, np.full_like(xs, y)) for y in ys1])  # (ny, nx)
    dy = np.abs(np.diff(ys1))[:, None]
    lam = float(np.max(np.abs(np.diff(gvals, axis=0)) / dy))

    # transverse Lipschitz constant: finite differences in x on each branch,
    # maximised over a few leaves
    k_est = 0.0
    for y in (-0.5, -0.25, 0.0, 0.25, 0.5):
        row = G(xs, np.full_like(xs, y))
        dif = np.abs(np.diff(row)) / np.diff(xs)
        dif[n - 1] = 0.0  # the step across the singular line is not condition 1.a
        k_est = max(k_est, float(np.max(dif)))

    if t_prime is not None:
        tp = np.asarray(t_prime(xs), dtype=float)
    else:
        h = np.minimum(margin / 4, np.abs(xs) / 2)  # stay on the branch
        tp = (T(xs + h) - T(xs - h)) / (2 * h)
    min_tp = float(np.min(tp))
    inv = 1.0 / tp
    var_inv = float(np.sum(np.abs(np.diff(inv[:n])))) + float(np.sum(np.abs(np.diff(inv[n:]))))

    return AxiomReport(
        lipschitz_k=k_est,
        leaf_lambda=lam,
        min_T_prime=min_tp,
        var_inv_T_prime=var_inv,
        pass_transverse_lipschitz=bool(np.isfinite(k_est)),
        pass_leaf_contraction=bool(lam < 1 - STRICT_TOL),
        pass_expanding=bool(min_tp > 1 + STRICT_TOL),
        pass_bv=bool(np.isfinite(var_inv)),
    )


# ---------------------------------------------------------------------------
# flat key-value serialization (exact decimal round trip)

PARAM_KEYS = (
    "lambda1",
    "lambda2",
    "lambda3",
    "theta",
    "sigma",
    "g_offset_plus",
    "g_offset_minus",
    "outer_travel_time",
)


def params_to_text(params: ModelParams) -> str:
    """Serialize as flat `key = value` lines; repr() round-trips floats exactly."""
    lines = [f"{k} = {getattr(params, k)!r}" for k in PARAM_KEYS]
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> ModelParams:
    """Parse the flat key-value form; unknown keys are ignored."""
    found = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameter(f"malformed parameter line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in PARAM_KEYS:
            try:
                found[key] = float(val)
            except ValueError as exc:
                raise InvalidParameter(f"cannot parse {key} = {val!r}") from exc
    missing = [k for k in ("lambda1", "lambda2", "lambda3", "theta") if k not in found]
    if missing:
        raise InvalidParameter(f"missing required keys: {', '.join(missing)}")
    return ModelParams(**found)


def with_params(model_params: ModelParams, **kwargs) -> ModelParams:
    return replace(model_params, **kwargs)
