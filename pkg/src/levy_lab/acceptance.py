"""The twelve acceptance criteria as runnable checks.

Each ``criterion_<n>()`` returns a :class:`CriterionResult` with the
measured quantities, the pass/fail decision at the stated tolerance and the
wall time against its budget. ``run_all`` runs them in order.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import zeta

from . import criteria as C
from .campaigns import random_instance, run, run_novikov
from .config import ExperimentConfig, MeasureSpec
from .gamma import (FiniteRankOperator, build_jump_operator, build_TG, gamma_norm_exact_hilbert, gamma_norm_mc,
                    gaussian_draws, umd_equivalence_check)
from .infconv import SolverConfig
from .measures import DiscreteMeasure, ModelSpace, RadialFamily, unit_directions
from .norms import SimpleFunction, identity_integrand, ip_norm_sum
from .prm import l1_bound, mean_and_stderr, sample_prm, terminal_values
from .rng import substream
from .stats import energy_test

SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    detail: str
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed and self.runtime < self.budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"[{status}] criterion {self.number:2d} {self.name}: {self.detail} "
                f"({self.runtime:.1f}s / {self.budget:.0f}s)")


def _timed(number, name, budget):
    def wrap(fn):
        def runner() -> CriterionResult:
            start = time.perf_counter()
            passed, detail, values = fn()
            return CriterionResult(number, name, bool(passed), time.perf_counter() - start, budget, detail, values)
        runner.__name__ = fn.__name__
        runner.__doc__ = fn.__doc__
        return runner
    return wrap


def _radial(alpha, d, p, rmax=1.0, grid=None):
    space = ModelSpace.sequence(d, p) if grid is None else ModelSpace.grid(grid, p)
    return RadialFamily(space, alpha, unit_directions(space, np.vstack([np.eye(d), -np.eye(d)])), rmax)


# --------------------------------------------------------------------------


@_timed(1, "Hilbert vs L^p at p=2", 5.0)
def criterion_1():
    """check_lp_ge2 at p = 2 against check_hilbert on 50 random families."""
    rng = substream(SEED, "acceptance", 1)
    worst, mismatches, n_radial = 0.0, 0, 0
    for i in range(50):
        if i % 2 == 0:
            d, n = int(rng.integers(1, 6)), int(rng.integers(1, 10))
            space = ModelSpace.grid(rng.uniform(0.3, 2.0, d), 2.0) if rng.integers(2) else ModelSpace.sequence(d, 2.0)
            m = DiscreteMeasure(space, rng.normal(size=(n, d)) * rng.uniform(0.2, 2.0), rng.uniform(0.1, 2.0, n))
        else:
            d = int(rng.integers(1, 4))
            grid = rng.uniform(0.5, 2.0, d) if rng.integers(2) else None
            m = _radial(float((0.5, 1.0, 1.5, 2.0)[(i // 2) % 4]), d, 2.0, float(rng.uniform(0.5, 3.0)), grid)
            n_radial += 1
        h, g = C.check_hilbert(m), C.check_lp_ge2(m, 2.0)
        a, b = h.quantities["inside_ball_integral"], g.quantities["inside_ball_integral"]
        if h.verdict != g.verdict:
            mismatches += 1
        if math.isinf(a) or math.isinf(b):
            if not (math.isinf(a) and math.isinf(b)):
                mismatches += 1
        else:
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    ok = mismatches == 0 and worst <= 1e-10
    return ok, f"{mismatches} verdict mismatches, max quantity diff {worst:.1e} ({n_radial} radial)", \
        {"mismatches": mismatches, "max_diff": worst}


@_timed(2, "sharp l^p discrimination", 10.0)
def criterion_2():
    """Series family: NotLevy, bounded D partial sums, S >= 0.9 ln K."""
    sizes = [2**k for k in range(4, 13)]
    ok, parts, values = True, [], {}
    for p in (2.5, 3.0, 4.0):
        rep = C.check_lp_ge2(C.series_family(p, sizes))
        d = [rep.quantities[f"D_partial_{K}"] for K in sizes]
        s = [rep.quantities[f"S_partial_{K}"] for K in sizes]
        limit = float(zeta(2 * p + 2 / p - 4))  # sum_k k^(4 - 2/p - 2p)
        bounded = all(x <= limit for x in d)
        growth = min(v / math.log(K) for v, K in zip(s, sizes))
        good = rep.verdict == C.NOT_LEVY and bounded and growth >= 0.9
        ok &= good
        values[p] = {"verdict": rep.verdict, "D_max": max(d), "D_limit": limit, "S_over_lnK_min": growth}
        parts.append(f"p={p:g}: {rep.verdict}, D<={max(d):.3f}<{limit:.3f}, min S/lnK={growth:.2f}")
    return ok, "; ".join(parts), values


def _golden(fun, lo, hi):
    return optimize.minimize_scalar(fun, bracket=(lo, 0.5 * (lo + hi), hi), method="golden",
                                    options={"xtol": 1e-12}).fun


@_timed(3, "inf-convolution optimiser", 30.0)
def criterion_3():
    """Golden-section oracle, certified gaps, triangle inequality and homogeneity."""
    tol = SolverConfig().tol
    worst_oracle = 0.0
    space_cases = [(p, w, c) for p in (1.1, 1.3, 1.5, 1.7, 1.9) for w, c in ((0.2, 1.0), (1.0, -2.5), (3.0, 0.7),
                                                                          (0.05, -0.3))]
    for p, w, c in space_cases:
        m = DiscreteMeasure(ModelSpace.sequence(1, p), [[0.5]], [w])
        F = SimpleFunction.constant((np.array([0]),), np.array([[c]]))
        val = ip_norm_sum(m, F).value
        oracle = _golden(lambda a: math.sqrt(w) * abs(a) + w ** (1 / p) * abs(c - a), -3 * abs(c), 3 * abs(c))
        worst_oracle = max(worst_oracle, abs(val - oracle) / oracle)
    rng = substream(SEED, "acceptance", 3)
    worst_gap, worst_tri, worst_hom, n = 0.0, -math.inf, 0.0, 0
    slack = 1e-6 + 2 * tol
    for i in range(30):
        p = float(rng.uniform(1.05, 1.95))
        m, F = random_instance(rng, p, 16, 32)
        m = DiscreteMeasure(m.space.with_p(p), m.atoms, m.masses)
        G = F.with_values(rng.normal(size=F.values.shape) * rng.uniform(0.1, 3.0))
        rf, rg = ip_norm_sum(m, F), ip_norm_sum(m, G)
        rs = ip_norm_sum(m, F.with_values(F.values + G.values))
        c = float(10 ** rng.uniform(-3, 3)) * (-1) ** i
        rc = ip_norm_sum(m, F.scaled(c))
        worst_gap = max(worst_gap, rf.residual, rg.residual, rs.residual, rc.residual)
        worst_tri = max(worst_tri, (rs.value - rf.value - rg.value) / (rf.value + rg.value))
        worst_hom = max(worst_hom, abs(rc.value - abs(c) * rf.value) / (abs(c) * rf.value))
        n += 1
    ok = worst_oracle <= 1e-6 and worst_gap <= 1e-8 and worst_tri <= slack and worst_hom <= slack
    detail = (f"oracle rel err {worst_oracle:.1e} on {len(space_cases)} cases, max gap {worst_gap:.1e} on "
              f"{4 * n} solves, triangle excess {max(worst_tri, 0):.1e}, homogeneity err {worst_hom:.1e}")
    return ok, detail, {"oracle": worst_oracle, "gap": worst_gap, "triangle": worst_tri, "homogeneity": worst_hom}


@_timed(4, "Novikov band", 120.0)
def criterion_4():
    """Ratio band over 20 random integrands per p, and scale invariance."""
    cfg = ExperimentConfig("novikov", SEED, reps=20000,
                           params={"p_values": [1.5, 2.0, 3.0], "instances": 20, "scale": 10.0,
                                   "max_dim": 16, "max_atoms": 32})
    rec = run_novikov(cfg)
    ok, parts, values = True, [], {}
    for p in (1.5, 2.0, 3.0):
        n = len(rec.values("ratio")) and sum(1 for m in rec.values("ratio") if m.level.startswith(f"p={p}/"))
        band, drift = rec.value("band_C", f"p={p}"), rec.value("scale_drift_max", f"p={p}")
        ok &= band <= 10 and drift <= 1e-12 and n == 20
        values[p] = {"C": band, "drift": drift, "instances": n}
        parts.append(f"p={p:g}: C={band:.2f}, drift={drift:.0e}, n={n}")
    return ok, "; ".join(parts), values


def _instance(rng, p=2.0, max_dim=8, max_atoms=12):
    m, F = random_instance(rng, p, max_dim, max_atoms, grid=False)
    return DiscreteMeasure(m.space.with_p(p), m.atoms, m.masses), F


@_timed(5, "Campbell second moment", 20.0)
def criterion_5():
    """Horizon second moment against t * sum_j lambda(B_j) ||v_j||^2."""
    rng = substream(SEED, "acceptance", 5)
    worst, parts = 0.0, []
    for i in range(3):
        m, F = _instance(rng)
        X = terminal_values(m, F, None, 1.0, 100000, rng)
        est, se = mean_and_stderr(m.space.norm(X) ** 2)
        vals = F.atom_values(m.n_atoms)
        exact = math.fsum((np.diff(F.breakpoints)[:, None] * m.masses[None, :] * (vals**2).sum(2)).ravel())
        z = abs(est - exact) / se
        worst = max(worst, z)
        parts.append(f"{est:.4g} vs {exact:.4g}")
    return worst <= 3, f"max |z| = {worst:.2f} ({'; '.join(parts)})", {"max_z": worst}


@_timed(6, "L1 bound", 20.0)
def criterion_6():
    """E||I(F)|| <= 2 ||F||_{L^1} (1 + 3 stderr / estimate)."""
    rng = substream(SEED, "acceptance", 6)
    worst = 0.0
    fails = 0
    for i in range(20):
        p = float((1.5, 2.0, 3.0)[i % 3])
        m, F = random_instance(rng, p, 16, 32)
        est, se, bound = l1_bound(m, F, None, 1.0, 10000, rng)
        fails += est > bound * (1 + 3 * se / est)
        worst = max(worst, est / bound)
    return fails == 0, f"{fails} violations on 20 instances, max E||I||/(2||F||_1) = {worst:.3f}", \
        {"violations": fails, "max_ratio": worst}


def _random_operator(rng, p, weighted):
    d, n, K = int(rng.integers(2, 6)), int(rng.integers(1, 6)), int(rng.integers(2, 8))
    space = ModelSpace.grid(rng.uniform(0.5, 2.0, d), p) if weighted else ModelSpace.sequence(d, p)
    om = rng.uniform(0.3, 3.0, K) if weighted else None
    return FiniteRankOperator(rng.normal(size=(n, K)), rng.normal(size=(n, d)), space, om)


@_timed(7, "gamma-norm oracles", 30.0)
def criterion_7():
    """Hilbert-Schmidt agreement (deterministic and Monte Carlo) and the
    Gaussian p-th moment closed form."""
    rng = substream(SEED, "acceptance", 7)
    det = 0.0
    for i in range(20):
        op = _random_operator(rng, 2.0, bool(i % 2))
        M = (op.h * op.h_weights).T @ op.v  # columns T e_k
        hs = math.sqrt(np.sum(op.space.weights[None, :] * M**2 / op.h_weights[:, None]))
        det = max(det, abs(gamma_norm_exact_hilbert(op) - hs) / hs)
    op = _random_operator(rng, 2.0, True)
    mc = gamma_norm_mc(op, 100000, rng)
    z_mc = abs(mc.estimate - gamma_norm_exact_hilbert(op)) / mc.stderr
    z_mom = {}
    for p in (1.5, 3.0):
        opp = _random_operator(rng, p, True)
        e = gamma_norm_mc(opp, 100000, rng)
        z_mom[p] = abs(e.moment - e.moment_exact) / e.moment_stderr
    ok = det <= 1e-12 and z_mc <= 3 and all(z <= 3 for z in z_mom.values())
    detail = (f"HS rel err {det:.1e}, MC |z|={z_mc:.2f}, moment |z| "
              + ", ".join(f"p={p:g}: {z:.2f}" for p, z in z_mom.items()))
    return ok, detail, {"hs": det, "mc_z": z_mc, "moment_z": z_mom}


@_timed(8, "jump operator identity", 5.0)
def criterion_8():
    """||J_{Delta M}||_gamma = ||T_{F_B}||_gamma on 100 configurations."""
    rng = substream(SEED, "acceptance", 8)
    worst, hilbert = 0.0, 0
    for i in range(100):
        p = float((2.0, 1.5, 3.0)[i % 3])
        m, F = _instance(rng, p, 6, 8)
        cfg = sample_prm(m, F.horizon, rng)
        J, T = build_jump_operator(cfg, F), build_TG(cfg, F)
        if p == 2:
            a, b = gamma_norm_exact_hilbert(J), gamma_norm_exact_hilbert(T)
            hilbert += 1
        else:
            G = gaussian_draws(2000, max(J.rank_bound, T.rank_bound, 1), rng)
            a = gamma_norm_mc(J, 2000, None, G=G).estimate if J.rank_bound else 0.0
            b = gamma_norm_mc(T, 2000, None, G=G).estimate if T.rank_bound else 0.0
        worst = max(worst, abs(a - b) / max(b, 1e-300) if b else abs(a))
    return worst <= 1e-12, f"max rel diff {worst:.1e} ({hilbert} exact Hilbert, {100 - hilbert} shared draws)", \
        {"max_diff": worst}


def _l2_measure():
    space = ModelSpace.sequence(3, 2.0)
    atoms = [[0.5, 0.0, 0.0], [0.0, -0.3, 0.2], [0.2, 0.2, 0.2], [1.5, 0.0, 0.0], [0.0, 0.7, -0.4]]
    return DiscreteMeasure(space, atoms, [1.0, 2.0, 0.7, 0.5, 1.2])


@_timed(9, "UMD equivalence on l^2", 60.0)
def criterion_9():
    """Both sides of the horizon-variant check against Campbell at p = 2."""
    m = _l2_measure()
    F = identity_integrand(m)
    r = umd_equivalence_check(m, F, None, 2.0, 1.0, 10000, 10000, 1, SEED, variant="terminal")
    zl = abs(r.lhs - r.campbell) / r.lhs_stderr
    zr = abs(r.rhs - r.campbell) / r.rhs_stderr
    ok = r.status == "ok" and zl <= 3 and zr <= 3 and 0.9 <= r.ratio <= 1.1
    return ok, f"ratio {r.ratio:.4f}+-{r.ratio_stderr:.4f}, |z| lhs {zl:.2f}, rhs {zr:.2f}", r.to_dict()


@_timed(10, "convergence campaign", 120.0)
def criterion_10():
    """Levy family converges with a negative slope; the series family's
    statistic is nondecreasing in the dimension."""
    levy = ExperimentConfig("convergence", SEED, MeasureSpec("generator", generator="radial",
                                                             params={"alpha": 1.0, "dimension": 2}),
                            p=2.0, schedule=tuple(2.0 ** -k for k in range(1, 9)), reps=20000)
    a = run(levy)
    series = ExperimentConfig("convergence", SEED, MeasureSpec("generator", generator="series",
                                                               params={"p": 3.0, "sizes": [2**k for k in range(4, 13)]}),
                              p=3.0, reps=2000)
    b = run(series)
    hi = a.value("adjacent_ci_high")
    ok = (a.details["adjacent_monotone_decreasing"] and hi < 0 and a.verdicts["convergence"] == "Converging"
          and b.details["cumulative_nondecreasing"] and b.verdicts["convergence"] == "Diverging")
    detail = (f"Levy: {a.verdicts['convergence']}, monotone={a.details['adjacent_monotone_decreasing']}, "
              f"slope {a.value('adjacent_slope'):.3f} CI high {hi:.3f}; series: {b.verdicts['convergence']}, "
              f"nondecreasing={b.details['cumulative_nondecreasing']}")
    return ok, detail, {"levy": a.verdicts, "series": b.verdicts}


@_timed(11, "distribution identity", 30.0)
def criterion_11():
    """Energy test between the compensated identity integral over the unit
    ball and samples of the infinitely divisible law of lambda on the ball."""
    space = ModelSpace.sequence(2, 2.0)
    m = DiscreteMeasure(space, [[0.5, 0.0], [0.0, -0.8], [0.3, 0.3], [-0.6, 0.2]], [0.6, 0.4, 0.5, 0.3])
    inner = m.restrict(1.0, "inside")
    F = identity_integrand(m, 1.0, 1.0)
    x = terminal_values(m, F, None, 1.0, 10000, substream(SEED, "acceptance", 11, "prm"))
    y = inner.sample_eta(substream(SEED, "acceptance", 11, "eta"), 10000)
    res = energy_test(x, y, 1999, substream(SEED, "acceptance", 11, "perm"))
    return res.passes(0.999), f"energy p-value {res.p_value:.3f} ({res.n_distinct} distinct points)", \
        {"p_value": res.p_value, "statistic": res.statistic}


def _small_campaigns():
    radial = MeasureSpec("generator", generator="radial", params={"alpha": 1.0, "dimension": 2})
    discrete = MeasureSpec("generator", generator="random-discrete", params={"dimension": 3, "atoms": 5})
    series = MeasureSpec("generator", generator="series", params={"p": 3.0, "sizes": [4, 8, 16, 32]})
    sched = (0.5, 0.25, 0.125, 0.0625)
    return [
        ExperimentConfig("check", 1, radial, p=1.5, schedule=sched),
        ExperimentConfig("simulate", 2, radial, schedule=sched, reps=300),
        ExperimentConfig("novikov", 3, reps=300, params={"p_values": [1.5, 3.0], "instances": 2, "max_dim": 4,
                                                         "max_atoms": 6}),
        ExperimentConfig("umd", 4, discrete, reps=300, reps_outer=100, n_gauss=16),
        ExperimentConfig("gamma-norm", 5, discrete, p=3.0, reps_outer=100, n_gauss=16),
        ExperimentConfig("convergence", 6, radial, schedule=sched, reps=500),
        ExperimentConfig("convergence", 6, series, p=3.0, reps=200),
        ExperimentConfig("criteria-matrix", 7, radial, schedule=sched, reps_outer=50, n_gauss=4,
                         params={"gamma": True, "duals": 5}),
    ]


@_timed(12, "reproducibility", 5.0)
def criterion_12():
    """Every campaign, rerun with the same seed, writes a byte-identical CSV."""
    import tempfile
    from pathlib import Path

    differ = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, cfg in enumerate(_small_campaigns()):
            paths = []
            for rerun in ("a", "b"):
                csv_path, _ = run(cfg).write(Path(tmp) / rerun / f"{i}_{cfg.experiment}.csv")
                paths.append(csv_path)
            if paths[0].read_bytes() != paths[1].read_bytes():
                differ.append(cfg.experiment)
    n = len(_small_campaigns())
    return not differ, f"{n - len(differ)}/{n} campaign CSVs identical on rerun", {"differ": differ}


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11, criterion_12)


def run_all(verbose: bool = True) -> list:
    out = []
    for crit in CRITERIA:
        res = crit()
        out.append(res)
        if verbose:
            print(res.line(), flush=True)
    return out
