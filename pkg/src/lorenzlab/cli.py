"""Batch front-end: parse a flat config, run a named experiment, emit CSVs.

Usage:
    lorenzlab --config run.cfg [--out DIR] [--seed N] [--threads N]

The config is flat ``key = value`` text.  Model keys are those of the
parameter serialization (lambda1..3, theta, sigma, g_offset_plus,
g_offset_minus, outer_travel_time); experiment keys:

    experiment   one of: validate, density, srb, correlations, hitting-map,
                 hitting-flow, recurrence, dimension, saussol, report
    grid_n,      Ulam / leaf-coordinate cells (default 512)
    grid_m       cells per leaf (default 512)
    radii        comma-separated, strictly decreasing
    samples      starts per target / trajectories
    targets      number of targets (hitting experiments)
    n_max        correlation lags
    iters        pushforward iterations for the family
    seed         required for any stochastic experiment
    out_dir      output directory (the --out flag overrides)
    in_dir       input directory (report experiment)

Every run writes ``manifest.txt`` echoing the resolved configuration and the
library version; identical config and seed reproduce every CSV byte for byte
(--threads is a hint only and never changes results).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import flow as fl
from . import maps as mp
from . import measures as ms
from . import stats as st
from .errors import (
    ConfigError,
    ExperimentFailed,
    InvalidParameter,
    LorenzLabError,
    MissingArtifacts,
    ModelInvalid,
)
from .rng import stream

EXPERIMENTS = (
    "validate",
    "density",
    "srb",
    "correlations",
    "hitting-map",
    "hitting-flow",
    "recurrence",
    "dimension",
    "saussol",
    "report",
)

STOCHASTIC = {"correlations", "hitting-map", "hitting-flow", "recurrence"}

DEFAULTS = {
    "grid_n": 512,
    "grid_m": 512,
    "iters": 25,
    "n_max": 25,
    "samples": 200,
    "targets": 4,
}


def fmt(x) -> str:
    """Deterministic 12-significant-digit float formatting for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def parse_config(text: str) -> dict:
    cfg = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line: {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        cfg[key] = val
    return cfg


def _get_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key: {key}")
        return default
    try:
        v = int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key} must be an integer, got {cfg[key]!r}") from exc
    if v < 1:
        raise ConfigError(f"key {key} must be >= 1, got {v}")
    return v


def _get_radii(cfg):
    if "radii" not in cfg:
        raise ConfigError("missing required key: radii")
    try:
        radii = [float(tok) for tok in cfg["radii"].split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse radii list {cfg['radii']!r}") from exc
    if len(radii) < 2 or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ConfigError("radii must be strictly decreasing")
    return radii


def _resolve_model(cfg) -> mp.ValidatedModel:
    try:
        params = mp.params_from_text("\n".join(f"{k} = {v}" for k, v in cfg.items()
                                               if k in mp.PARAM_KEYS))
    except InvalidParameter as exc:
        raise ConfigError(str(exc)) from exc
    try:
        return mp.validate(params)
    except InvalidParameter as exc:
        raise ModelInvalid(f"{type(exc).__name__}: {exc}") from exc


def _write(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n")


def _manifest(out: Path, cfg: dict, exp: str, seed) -> None:
    lines = [f"library_version = {__version__}", f"experiment = {exp}"]
    if seed is not None:
        lines.append(f"seed = {seed}")
    for k in sorted(cfg):
        if k not in ("experiment", "seed"):
            lines.append(f"{k} = {cfg[k]}")
    _write(out / "manifest.txt", lines)


def _family(model, cfg) -> ms.LeafFamily:
    n = _get_int(cfg, "grid_n", DEFAULTS["grid_n"])
    m = _get_int(cfg, "grid_m", DEFAULTS["grid_m"])
    iters = _get_int(cfg, "iters", DEFAULTS["iters"])
    return ms.srb_iterate(model, iters, n, m)


def _write_times_csv(path: Path, experiment_id: str, samples) -> None:
    rows = ["experiment_id,target_x,target_y,r,sample_id,time,censored"]
    rows += [
        f"{experiment_id},{fmt(s.target_x)},{fmt(s.target_y)},{fmt(s.r)},"
        f"{s.sample_id},{fmt(s.time)},{fmt(s.censored)}"
        for s in samples
    ]
    _write(path, rows)


def _write_fits_csv(path: Path, rows) -> None:
    out = ["experiment_id,slope,ci,n_samples,quality"]
    out += [f"{rid},{fmt(sl)},{fmt(ci)},{n},{fmt(q)}" for rid, sl, ci, n, q in rows]
    _write(path, out)


# ---------------------------------------------------------------------------
# experiment bodies


def _run_validate(model, cfg, out: Path, seed):
    lines = [
        f"alpha = {fmt(model.alpha)}",
        f"beta = {fmt(model.beta)}",
        f"leaf_contraction = {fmt(model.leaf_contraction)}",
        f"min_expansion = {fmt(model.theta * model.alpha * 2 ** (1 - model.alpha))}",
        f"image_bound = {fmt(model.theta * 0.5 ** model.alpha)}",
        "valid = 1",
    ]
    _write(out / "validate.txt", lines)


def _run_density(model, cfg, out: Path, seed):
    n = _get_int(cfg, "grid_n", DEFAULTS["grid_n"])
    op = ms.ulam_operator(lambda x: mp.one_d_map_batch(model, x), n)
    dens = ms.invariant_density(op)
    xs = dens.centers()
    rows = ["cell_center,value"] + [f"{fmt(x)},{fmt(v)}" for x, v in zip(xs, dens.values)]
    _write(out / "density.csv", rows)
    _write(out / "density_stats.txt", [
        f"bv_seminorm = {fmt(ms.variation(dens))}",
        f"sup = {fmt(dens.values.max())}",
        f"mean_return_time = {fmt(fl.mean_return_time(model, dens))}",
    ])


def _run_srb(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    marg = fam.marginal
    rows = ["cell_center,value"] + [
        f"{fmt(x)},{fmt(v)}" for x, v in zip(marg.centers(), marg.values)
    ]
    _write(out / "marginal.csv", rows)
    leaf_xs = ms.cell_centers(fam.n_leaves)
    header = "y_center," + ",".join(fmt(x) for x in leaf_xs)
    body = []
    ys = ms.cell_centers(fam.leaf_cells)
    lm = fam.leaf_masses
    for k in range(fam.leaf_cells):
        body.append(fmt(ys[k]) + "," + ",".join(fmt(lm[j, k]) for j in range(fam.n_leaves)))
    _write(out / "family.csv", [header] + body)


def _corr_pairs():
    return [
        ("avg_xy", lambda x, y: 0.5 * (x + y), "x", lambda x, y: x, 1.0, 1.0),
        ("x_plus_2y", lambda x, y: (x + 2 * y) / 3.0, "x", lambda x, y: x, 1.0, 1.0),
        ("2x_plus_y", lambda x, y: (2 * x + y) / 3.0, "x", lambda x, y: x, 1.0, 1.0),
    ]


def _run_correlations(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    n_max = _get_int(cfg, "n_max", DEFAULTS["n_max"])
    trajectories = _get_int(cfg, "samples", 100_000)
    rows = ["experiment_id,n,value,se"]
    fits = []
    for i, (name, f, gname, g, _, _) in enumerate(_corr_pairs()):
        dec = st.correlation_mc(model, fam, f, g, n_max=n_max,
                                trajectories=trajectories, seed=seed + i)
        rid = f"corr-{name}-{gname}"
        rows += [f"{rid},{n},{fmt(v)},{fmt(s)}"
                 for n, v, s in zip(dec.ns, dec.values, dec.ses)]
        fits.append((rid, dec.fit_rate, 0.0, int(dec.fit_mask.sum()), dec.fit_quality))
    _write(out / "correlations.csv", rows)
    _write_fits_csv(out / "fits.csv", fits)


def _run_hitting_map(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    radii = _get_radii(cfg)
    res = st.loglaw_map_experiment(model, fam, _get_int(cfg, "targets", DEFAULTS["targets"]),
                                   _get_int(cfg, "samples", DEFAULTS["samples"]),
                                   radii, seed)
    _write_times_csv(out / "times.csv", "hitting-map", res.samples)
    fits = []
    for t, (dim, est) in enumerate(zip(res.dim_estimates, res.slope_estimates)):
        fits.append((f"hitting-map-t{t}-slope", est.slope, est.ci_halfwidth,
                     len(res.samples) // res.n_targets, 1.0))
        fits.append((f"hitting-map-t{t}-dimension", dim.slope, dim.ci_halfwidth, 0, 1.0))
    _write_fits_csv(out / "fits.csv", fits)


def _run_hitting_flow(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    radii = _get_radii(cfg)
    res = st.loglaw_flow_experiment(model, fam, _get_int(cfg, "targets", DEFAULTS["targets"]),
                                    _get_int(cfg, "samples", DEFAULTS["samples"]),
                                    radii, seed)
    _write_times_csv(out / "times.csv", "hitting-flow", res.samples)
    fits = []
    for t, (dim, est) in enumerate(zip(res.dim_estimates, res.slope_estimates)):
        fits.append((f"hitting-flow-t{t}-slope", est.slope, est.ci_halfwidth,
                     len(res.samples) // res.n_targets, 1.0))
        fits.append((f"hitting-flow-t{t}-dimension", dim.slope, dim.ci_halfwidth, 0, 1.0))
    _write_fits_csv(out / "fits.csv", fits)


def _run_recurrence(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    radii = _get_radii(cfg)
    res = st.recurrence_experiment(model, fam, radii,
                                   _get_int(cfg, "samples", DEFAULTS["samples"]), seed)
    _write_times_csv(out / "times.csv", "recurrence", res.samples)
    _write_fits_csv(out / "fits.csv", [
        ("recurrence-fit", res.fit.slope, res.fit.ci_halfwidth, len(res.samples), 1.0),
        ("recurrence-window-low", res.slope_window[0], 0.0, 0, 1.0),
        ("recurrence-window-high", res.slope_window[1], 0.0, 0, 1.0),
    ])


def _run_dimension(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    exact = st.exact_dimension(model, fam)
    lines = [
        f"formula_value = {fmt(exact.value)}",
        f"entropy = {fmt(exact.entropy)}",
        f"expansion_integral = {fmt(exact.psi_integral)}",
        f"contraction_integral = {fmt(exact.phi_integral)}",
        f"richardson_expansion = {fmt(exact.richardson_psi)}",
        f"richardson_contraction = {fmt(exact.richardson_phi)}",
    ]
    _write(out / "dimension.txt", lines)
    rng = stream(seed if seed is not None else 0, 3)
    pts_x, pts_y = st.sample_family_points(fam, _get_int(cfg, "targets", 5), rng,
                                           exclude_x_below=0.05)
    radii = st._dim_radii_for(fam)
    fits = []
    for i, (px, py) in enumerate(zip(pts_x, pts_y)):
        d = st.local_dimension(fam, (float(px), float(py)), radii)
        fits.append((f"dimension-p{i}", d.slope, d.ci_halfwidth, 0, 1.0))
    _write_fits_csv(out / "fits.csv", fits)


def _run_saussol(model, cfg, out: Path, seed):
    fam = _family(model, cfg)
    rep = st.saussol_check(model, fam)
    lines = [
        f"partition_size = {rep.partition_size}",
        f"mass_decay_slope = {fmt(rep.mass_decay_slope)}",
        f"mass_bound_ok = {fmt(rep.mass_bound_ok)}",
        f"log_lipschitz_sum = {fmt(rep.log_lipschitz_sum)}",
        f"tail_bound = {fmt(rep.tail_bound)}",
        f"sum_converged = {fmt(rep.sum_converged)}",
        f"boundary_exponent = {fmt(rep.boundary_exponent)}",
        f"boundary_ok = {fmt(rep.boundary_ok)}",
        f"all_pass = {fmt(rep.all_pass)}",
    ]
    _write(out / "saussol.txt", lines)
    rows = ["i,mass"] + [f"{i + 1},{fmt(v)}" for i, v in enumerate(rep.masses)]
    _write(out / "partition_masses.csv", rows)


def report(run_dir: Path) -> str:
    """One-page text summary of the CSV artifacts in a run directory."""
    run_dir = Path(run_dir)
    files = sorted(run_dir.glob("*.csv")) + sorted(run_dir.glob("*.txt"))
    files = [f for f in files if f.name != "summary.txt"]
    if not files:
        raise MissingArtifacts(f"no experiment artifacts in {run_dir}")
    lines = [f"run summary: {run_dir.name}", "=" * 40]
    fits = run_dir / "fits.csv"
    if fits.exists():
        lines.append("fits:")
        rows = fits.read_text().strip().splitlines()
        for row in rows[1:]:
            rid, slope, ci, n, q = row.split(",")
            lines.append(f"  {rid}: slope={slope} ci={ci} n={n} quality={q}")
    for f in files:
        if f.name in ("fits.csv",):
            continue
        if f.suffix == ".txt":
            lines.append(f"{f.name}:")
            lines += [f"  {ln}" for ln in f.read_text().strip().splitlines()]
        else:
            n_rows = max(len(f.read_text().strip().splitlines()) - 1, 0)
            lines.append(f"{f.name}: {n_rows} rows")
    return "\n".join(lines) + "\n"


_BODIES = {
    "validate": _run_validate,
    "density": _run_density,
    "srb": _run_srb,
    "correlations": _run_correlations,
    "hitting-map": _run_hitting_map,
    "hitting-flow": _run_hitting_flow,
    "recurrence": _run_recurrence,
    "dimension": _run_dimension,
    "saussol": _run_saussol,
}


def run(cfg: dict, out_dir=None, seed_override=None) -> int:
    """Execute one configured experiment; returns the process exit status."""
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    seed = seed_override
    if seed is None and "seed" in cfg:
        try:
            seed = int(cfg["seed"])
        except ValueError as exc:
            raise ConfigError(f"seed must be an integer, got {cfg['seed']!r}") from exc
    if exp in STOCHASTIC and seed is None:
        raise ConfigError(f"experiment {exp} is stochastic and requires a seed")

    if exp == "report":
        src = cfg.get("in_dir") or out_dir or cfg.get("out_dir")
        if src is None:
            raise ConfigError("report needs in_dir (or --out)")
        text = report(Path(src))
        dest = Path(out_dir or cfg.get("out_dir") or src)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "summary.txt").write_text(text)
        sys.stdout.write(text)
        return 0

    out = Path(out_dir or cfg.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    model = _resolve_model(cfg)
    _manifest(out, cfg, exp, seed)
    try:
        _BODIES[exp](model, cfg, out, seed)
    except LorenzLabError:
        raise
    except Exception as exc:  # propagate with a nonzero exit
        raise ExperimentFailed(f"{exp}: {type(exc).__name__}: {exc}") from exc
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="lorenzlab",
        description="run geometric Lorenz map experiments from a flat config file",
    )
    ap.add_argument("--config", required=True, help="path to key = value config")
    ap.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker hint; never changes results")
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text())
        return run(cfg, out_dir=args.out, seed_override=args.seed)
    except ModelInvalid as exc:
        print(f"model invalid: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except MissingArtifacts as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return 4
    except LorenzLabError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
