"""Verification campaigns driven by an :class:`ExperimentConfig`.

Every random quantity is drawn from a named sub-stream of the root seed
(``substream(seed, experiment, instance, ...)``), so instances can run in
any order and a rerun reproduces the CSV byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import criteria as C
from .config import ExperimentConfig
from .gamma import campbell_second_moment, estimate_expected_gamma_norm, umd_equivalence_check
from .measures import DiscreteMeasure, DomainError, MeasureSequence, ModelSpace, RadialFamily
from .norms import SimpleFunction, identity_integrand, ip_norm
from .prm import (cauchy_statistic, discrete_levels, estimate_lhs, l1_bound, mean_and_stderr,
                  series_levels, sup_and_terminal_batch, terminal_values, truncation_sequence)
from .rng import substream

FLAT, CONVERGING, DIVERGING = "Flat-Converged", "Converging", "Diverging"


@dataclass(frozen=True)
class Metric:
    name: str
    level: object
    estimate: float
    stderr: float | None = None


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    metrics: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def add(self, name, level, estimate, stderr=None):
        self.metrics.append(Metric(str(name), level, float(estimate), None if stderr is None else float(stderr)))

    def value(self, name, level=None) -> float:
        for m in self.metrics:
            if m.name == name and (level is None or m.level == level):
                return m.estimate
        raise KeyError((name, level))

    def values(self, name) -> list:
        return [m for m in self.metrics if m.name == name]

    @property
    def inconclusive(self) -> bool:
        """An Inconclusive headline verdict (the cross-tabulated one when
        present, since a failed sufficient condition alone decides nothing)."""
        if "matrix" in self.verdicts:
            return self.verdicts["matrix"] == C.INCONCLUSIVE
        return any(v == C.INCONCLUSIVE for v in _flatten(self.verdicts))

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "metric", "level", "estimate", "stderr"])
        for m in self.metrics:
            w.writerow([self.experiment, m.name, _fmt(m.level), _fmt(m.estimate),
                        "" if m.stderr is None else _fmt(m.stderr)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "verdicts": self.verdicts,
            "metrics": [{"name": m.name, "level": _jsonable(m.level), "estimate": _jsonable(m.estimate),
                         "stderr": _jsonable(m.stderr)} for m in self.metrics],
            "details": _jsonable(self.details),
            "wall_time": self.wall_time,
        }

    def write(self, out) -> tuple[Path, Path]:
        """Write ``<name>.csv`` and ``<name>.json``; ``out`` is a directory or
        a path ending in ``.json`` / ``.csv``."""
        out = Path(out)
        if out.suffix in (".json", ".csv"):
            stem = out.with_suffix("")
        else:
            stem = out / self.experiment
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        csv_path.write_text(self.csv_text())
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _flatten(v):
    if isinstance(v, dict):
        for x in v.values():
            yield from _flatten(x)
    elif isinstance(v, (list, tuple)):
        for x in v:
            yield from _flatten(x)
    else:
        yield v


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# --------------------------------------------------------------------------
# shared helpers


def finite_measure(measure, cfg: ExperimentConfig) -> DiscreteMeasure:
    """A finite measure to simulate with: a materialised truncation at the
    finest schedule level for radial families, the largest member of a
    sequence."""
    if isinstance(measure, DiscreteMeasure):
        return measure
    if isinstance(measure, RadialFamily):
        delta = cfg.schedule[-1]
        if delta >= measure.rmax:
            return DiscreteMeasure.empty(measure.space)
        return measure.materialise(delta, cfg.cells)
    if isinstance(measure, MeasureSequence):
        return measure.member(measure.sizes[-1])
    raise DomainError("unsupported measure type")


def random_instance(rng, p: float, max_dim: int = 16, max_atoms: int = 32, t: float = 1.0,
                    max_intervals: int = 3, grid: bool | None = None):
    """Random finite measure and simple integrand for norm-equivalence runs."""
    d = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_atoms + 1))
    use_grid = bool(rng.integers(2)) if grid is None else grid
    space = ModelSpace.grid(rng.uniform(0.2, 2.0, d), p) if use_grid else ModelSpace.sequence(d, p)
    atoms = rng.normal(size=(n, d)) * rng.uniform(0.1, 1.5)
    masses = rng.uniform(0.05, 1.0, n)
    measure = DiscreteMeasure(space, atoms, masses)
    m = int(rng.integers(1, max_intervals + 1))
    bp = np.concatenate(([0.0], np.sort(rng.uniform(0, t, m - 1)), [t])) if m > 1 else np.array([0.0, t])
    if np.any(np.diff(bp) <= 0):
        bp = np.linspace(0.0, t, m + 1)
    ncell = int(rng.integers(1, n + 1))
    perm = rng.permutation(n)
    cuts = np.sort(rng.choice(np.arange(1, n), size=ncell - 1, replace=False)) if ncell > 1 else []
    cells = tuple(np.sort(c) for c in np.split(perm, cuts))
    values = rng.normal(size=(m, ncell, d)) * rng.uniform(0.2, 3.0)
    return measure, SimpleFunction(bp, cells, values)


def _p_values(cfg, default):
    return [float(x) for x in cfg.params.get("p_values", default)]


# --------------------------------------------------------------------------
# campaigns


def run_novikov(cfg: ExperimentConfig) -> ResultRecord:
    """Ratios ``(E sup ||int F dN~||^p)^(1/p) / ||F||_{I_p}`` on random
    instances, for each p, plus the same ratio for ``scale * F`` under
    common random numbers."""
    rec = ResultRecord("novikov", cfg.config_hash())
    n_inst = int(cfg.params.get("instances", 20))
    scale = float(cfg.params.get("scale", 10.0))
    max_dim = int(cfg.params.get("max_dim", 16))
    max_atoms = int(cfg.params.get("max_atoms", 32))
    for p in _p_values(cfg, [cfg.p]):
        ratios, drift, excluded = [], [], []
        for i in range(n_inst):
            rng = substream(cfg.seed, "novikov", "instance", repr(p), i)
            measure, F = random_instance(rng, p, max_dim, max_atoms, cfg.t)
            measure = DiscreteMeasure(measure.space.with_p(p), measure.atoms, measure.masses)
            norm, status = ip_norm(measure, F, p, cfg.solver)
            if norm == 0:
                excluded.append((i, "degenerate"))
                continue
            if status not in ("exact", "converged"):
                excluded.append((i, status))
                continue
            seed_i = ("novikov", "lhs", repr(p), i)
            lhs = estimate_lhs(measure, F, None, p, cfg.t, cfg.reps, substream(cfg.seed, *seed_i))
            r = lhs.estimate ** (1 / p) / norm
            norm_s, _ = ip_norm(measure, F.scaled(scale), p, cfg.solver)
            lhs_s = estimate_lhs(measure, F.scaled(scale), None, p, cfg.t, cfg.reps, substream(cfg.seed, *seed_i))
            r_s = lhs_s.estimate ** (1 / p) / norm_s
            ratios.append(r)
            drift.append(abs(r_s / r - 1.0))
            rec.add("ratio", f"p={p}/i={i}", r, r * lhs.stderr / (p * lhs.estimate) if lhs.estimate else 0.0)
            rec.add("ratio_scaled", f"p={p}/i={i}", r_s)
            rec.add("ip_norm", f"p={p}/i={i}", norm)
        if ratios:
            lo, hi = min(ratios), max(ratios)
            band = max(hi, 1.0 / lo)
            rec.add("ratio_min", f"p={p}", lo)
            rec.add("ratio_median", f"p={p}", statistics.median(ratios))
            rec.add("ratio_max", f"p={p}", hi)
            rec.add("band_C", f"p={p}", band)
            rec.add("scale_drift_max", f"p={p}", max(drift))
        rec.details[f"excluded_p={p}"] = excluded
    return rec


def convergence_verdict(adjacent, adjacent_scale, cumulative, cumulative_scale, n_boot=2000, seed=0):
    """Flat-Converged / Converging / Diverging / Inconclusive from the
    Cauchy statistics along the levels."""
    adj = np.asarray(adjacent, float)
    info = {}
    if np.all(adj == 0):
        return FLAT, info
    if np.all(adj > 0):
        s, ci = C.slope_ci(np.log(adjacent_scale), adj, n_boot, seed)
        info["adjacent_slope"], info["adjacent_ci"] = s, ci
        if ci[1] < 0:
            return CONVERGING, info
    # reaching here means the adjacent statistics are not significantly decaying
    cum = np.asarray(cumulative, float)
    if cum.size >= 3 and np.all(cum > 0):
        s, ci = C.slope_ci(np.log(cumulative_scale), cum, n_boot, seed)
        info["cumulative_slope"], info["cumulative_ci"] = s, ci
        if ci[0] > 0:
            return DIVERGING, info
    return C.INCONCLUSIVE, info


def run_convergence(cfg: ExperimentConfig) -> ResultRecord:
    """Coupled truncation levels, Cauchy statistics and a slope verdict."""
    rec = ResultRecord("convergence", cfg.config_hash())
    measure = cfg.build_measure()
    p = cfg.p
    rng = substream(cfg.seed, "convergence", "levels")
    if isinstance(measure, RadialFamily):
        levels = truncation_sequence(measure, cfg.schedule, cfg.cells, cfg.t, rng, cfg.reps)
    elif isinstance(measure, MeasureSequence):
        sp = cfg.measure.params.get("p", p) if cfg.measure.kind == "generator" else p
        if float(sp) != p:
            raise DomainError("the series family must be run at its own exponent")
        levels = series_levels(p, measure.sizes, cfg.t, rng, cfg.reps)
    else:
        levels = discrete_levels(measure, cfg.schedule, cfg.t, rng, cfg.reps)
    stats = cauchy_statistic(levels, p)
    adj = [(k, e, s) for k, j, e, s in stats if j == k - 1]
    cum = [(k, e, s) for k, j, e, s in stats if j == 0 and k >= 2]
    scales = levels.scales
    for k, e, s in adj:
        rec.add("adjacent", _fmt(levels.labels[k]), e, s)
    for k, e, s in cum:
        rec.add("cumulative", _fmt(levels.labels[k]), e, s)
    a_est = [e for _, e, _ in adj]
    verdict, info = convergence_verdict(a_est, [scales[k] for k, _, _ in adj],
                                        [e for _, e, _ in cum], [scales[k] for k, _, _ in cum],
                                        seed=int(cfg.params.get("bootstrap_seed", 0)))
    for k, v in info.items():
        if isinstance(v, tuple):
            rec.add(f"{k}_low", "", v[0])
            rec.add(f"{k}_high", "", v[1])
        else:
            rec.add(k, "", v)
    rec.verdicts["convergence"] = verdict
    rec.details["adjacent_monotone_decreasing"] = bool(np.all(np.diff(a_est) < 0))
    rec.details["cumulative_nondecreasing"] = bool(np.all(np.diff([e for _, e, _ in cum]) >= 0))
    return rec


def run_criteria_matrix(cfg: ExperimentConfig) -> ResultRecord:
    """Tail finiteness, the sharp criterion, scalar projections on random
    duals, the sufficient condition and (optionally) a gamma-moment growth
    proxy, cross-tabulated."""
    rec = ResultRecord("criteria-matrix", cfg.config_hash())
    measure = cfg.build_measure()
    p = cfg.p
    space = measure.space if not isinstance(measure, MeasureSequence) else None
    verdicts = {}

    if not isinstance(measure, MeasureSequence):
        tails = C.check_tail_finiteness(measure)
        for r, mass, _ in tails:
            rec.add("tail_mass", _fmt(float(r)), mass)
        verdicts["tails"] = C.LEVY if all(f for _, _, f in tails) else C.NOT_LEVY

    sharp = C.check_sharp(measure, p, schedule=cfg.schedule, **_sharp_kw(cfg, p))
    verdicts["sharp"] = sharp.verdict
    for k, v in sharp.quantities.items():
        if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool):
            rec.add(f"sharp:{k}", "", float(v))

    if space is not None:
        n_duals = int(cfg.params.get("duals", 20))
        rng = substream(cfg.seed, "criteria-matrix", "duals")
        proj = []
        for i in range(n_duals):
            dual = rng.normal(size=space.dimension)
            rep = C.check_scalar_projection(measure, dual)
            proj.append(rep.verdict)
            rec.add("projection_integral", i, float(rep.quantities["projected_truncated_second_moment"]))
        verdicts["projections"] = C.LEVY if all(v == C.LEVY for v in proj) else (
            C.NOT_LEVY if C.NOT_LEVY in proj else C.INCONCLUSIVE)
        if p <= 2:
            suff = C.check_type_sufficient(measure, p)
            verdicts["type_sufficient"] = suff.verdict

    if cfg.params.get("gamma", False) and space is not None:
        verdicts["gamma_moment"] = _gamma_proxy(measure, cfg, rec)

    core = [verdicts[k] for k in ("tails", "sharp", "projections", "gamma_moment") if k in verdicts]
    if C.INCONCLUSIVE in core:
        overall = C.INCONCLUSIVE
    elif all(v == C.LEVY for v in core):
        overall = C.LEVY
    else:
        overall = C.NOT_LEVY
    verdicts["matrix"] = overall
    rec.verdicts = verdicts
    rec.details["sharp_notes"] = sharp.notes
    return rec


def _sharp_kw(cfg, p):
    if p < 2:
        return {"solver": cfg.solver}
    return {}


def _gamma_proxy(measure, cfg, rec) -> str:
    """``E||T_G||_gamma^2`` on truncations along the schedule (growth rule)."""
    if isinstance(measure, DiscreteMeasure):
        est = estimate_expected_gamma_norm(measure, identity_integrand(measure, 1.0, cfg.t), None, 2.0, cfg.t,
                                           cfg.reps_outer, cfg.n_gauss, substream(cfg.seed, "criteria-matrix", "gamma"))
        rec.add("gamma_moment", "", est.estimate, est.stderr)
        return C.LEVY if math.isfinite(est.estimate) else C.NOT_LEVY
    vals = []
    for k, delta in enumerate(cfg.schedule):
        m = measure.restrict(1.0, "inside")
        fin = m.materialise(delta, cfg.cells) if delta < m.rmax else DiscreteMeasure.empty(m.space)
        est = estimate_expected_gamma_norm(fin, identity_integrand(fin, 1.0, cfg.t), None, 2.0, cfg.t,
                                           cfg.reps_outer, cfg.n_gauss,
                                           substream(cfg.seed, "criteria-matrix", "gamma", k))
        rec.add("gamma_moment", _fmt(float(delta)), est.estimate, est.stderr)
        vals.append(est.estimate)
    fit = C.divergence_rule(1.0 / np.asarray(cfg.schedule), np.maximum.accumulate(vals))
    return {"converging": C.LEVY, "diverging": C.NOT_LEVY}.get(fit.outcome, C.INCONCLUSIVE)


def run_umd(cfg: ExperimentConfig) -> ResultRecord:
    """Path side against the gamma side for the identity integrand on the
    unit ball, for p in {1, space p, 2} unless ``params.p_values`` is set."""
    rec = ResultRecord("umd", cfg.config_hash())
    measure = finite_measure(cfg.build_measure(), cfg)
    F = identity_integrand(measure, 1.0, cfg.t)
    variant = cfg.params.get("variant", "sup")
    verdicts = {}
    for p in sorted(set(_p_values(cfg, [1.0, measure.space.p, 2.0]))):
        r = umd_equivalence_check(measure, F, None, p, cfg.t, cfg.reps, cfg.reps_outer, cfg.n_gauss,
                                  int(substream(cfg.seed, "umd", repr(p)).integers(2**63)), variant)
        rec.add("lhs", f"p={p}", r.lhs, r.lhs_stderr)
        rec.add("rhs", f"p={p}", r.rhs, r.rhs_stderr)
        if r.status == "ok":
            rec.add("ratio", f"p={p}", r.ratio, r.ratio_stderr)
        if r.campbell is not None:
            rec.add("campbell", f"p={p}", r.campbell)
        verdicts[f"p={p}"] = r.status
    rec.verdicts = verdicts
    rec.details["variant"] = variant
    return rec


def run_gamma_norm(cfg: ExperimentConfig) -> ResultRecord:
    rec = ResultRecord("gamma-norm", cfg.config_hash())
    measure = finite_measure(cfg.build_measure(), cfg)
    F = identity_integrand(measure, 1.0, cfg.t)
    est = estimate_expected_gamma_norm(measure, F, None, cfg.p, cfg.t, cfg.reps_outer, cfg.n_gauss,
                                       substream(cfg.seed, "gamma-norm"))
    rec.add("expected_gamma_pth", f"p={cfg.p}", est.estimate, est.stderr)
    if measure.space.p == 2 and cfg.p == 2:
        rec.add("campbell", f"p={cfg.p}", campbell_second_moment(measure, F, None, cfg.t))
    rec.details["exact_inner"] = est.exact_inner
    return rec


def run_simulate(cfg: ExperimentConfig) -> ResultRecord:
    """Replications of the compensated integral of the identity integrand:
    horizon norm and running supremum per replication, plus summaries."""
    rec = ResultRecord("simulate", cfg.config_hash())
    measure = finite_measure(cfg.build_measure(), cfg)
    F = identity_integrand(measure, 1.0, cfg.t)
    p = cfg.p
    sups, term = sup_and_terminal_batch(measure, F, None, cfg.t, cfg.reps, substream(cfg.seed, "simulate", "paths"))
    nt = measure.space.norm(term) if term.size else np.zeros(cfg.reps)
    for i in range(cfg.reps):
        rec.add("terminal_norm", i, nt[i])
        rec.add("running_sup", i, sups[i])
    rec.add("E_terminal_pth", f"p={p}", *mean_and_stderr(nt**p))
    rec.add("E_sup_pth", f"p={p}", *mean_and_stderr(sups**p))
    est, se, bound = l1_bound(measure, F, None, cfg.t, cfg.reps, substream(cfg.seed, "simulate", "l1"))
    rec.add("E_terminal_norm", "", est, se)
    rec.add("l1_bound", "", bound)
    rec.add("campbell", "", campbell_second_moment(measure, F, None, cfg.t))
    return rec


def run_check(cfg: ExperimentConfig) -> ResultRecord:
    rec = ResultRecord("check", cfg.config_hash())
    measure = cfg.build_measure()
    if cfg.mode == "sufficient":
        rep = C.check_type_sufficient(measure, cfg.p)
    else:
        rep = C.check_sharp(measure, cfg.p, schedule=cfg.schedule, **_sharp_kw(cfg, cfg.p))
    for k, v in rep.quantities.items():
        if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool):
            rec.add(k, "", float(v))
    rec.verdicts["verdict"] = rep.verdict
    rec.details["report"] = rep.to_dict()
    return rec


CAMPAIGNS = {
    "novikov": run_novikov,
    "convergence": run_convergence,
    "criteria-matrix": run_criteria_matrix,
    "umd": run_umd,
    "gamma-norm": run_gamma_norm,
    "simulate": run_simulate,
    "check": run_check,
}


def run(cfg: ExperimentConfig) -> ResultRecord:
    start = time.perf_counter()
    rec = CAMPAIGNS[cfg.experiment](cfg)
    rec.wall_time = time.perf_counter() - start
    return rec
