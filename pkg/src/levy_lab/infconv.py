"""Inf-convolution of the square-function norm S and the p-integral norm D.

All routines work on a matrix form of an integrand: rows ``c`` carry a
weight ``w_c`` (time length times cell mass), columns ``s`` carry a grid
weight ``mu_s``::

    S(X) = ( sum_s mu_s (sum_c w_c X_cs^2)^(p/2) )^(1/p)
    D(Y) = ( sum_{c,s} w_c mu_s |Y_cs|^p )^(1/p)

and we minimise ``S(X) + D(F - X)`` over ``X`` for ``1 < p <= 2``.

Every returned point carries a duality-gap certificate: for any ``Z``,
``<Z, F> / max(S*(Z), D*(Z))`` is a lower bound on the infimum, so the
relative gap bounds the relative sub-optimality of the returned value.

Solution path:

1. the two pure assignments ``X = 0`` and ``X = F`` (optimal surprisingly
   often, and always at ``p = 2``);
2. an exact reduction of the optimality conditions: for a scalar ``t`` the
   conditions decouple into one monotone scalar equation per column, and
   ``t`` itself solves a one-dimensional equation;
3. accelerated gradient descent (or a diminishing-step subgradient method)
   as a fallback.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 10_000
    step_rule: str = "backtracking"  # or "diminishing"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.step_rule not in ("backtracking", "diminishing"):
            raise ValueError("step_rule must be 'backtracking' or 'diminishing'")


@dataclass
class InfConvResult:
    value: float
    X: np.ndarray
    status: str  # "converged" | "unconverged"
    residual: float
    iterations: int
    method: str

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# --------------------------------------------------------------------------
# norms, gradients, dual norms


def s_norm(X, w, mu, p):
    m = np.abs(X).max() if X.size else 0.0
    if m == 0:
        return 0.0
    q = w @ (X / m) ** 2
    return m * float(mu @ q ** (p / 2)) ** (1 / p)


def d_norm(Y, w, mu, p):
    m = np.abs(Y).max() if Y.size else 0.0
    if m == 0:
        return 0.0
    return m * float(w @ (np.abs(Y / m) ** p) @ mu) ** (1 / p)


def s_grad(X, w, mu, p):
    """Gradient of S, or None where S is not differentiable (S = 0)."""
    q = w @ X**2
    A = float(mu @ q ** (p / 2))
    if A == 0:
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(q > 0, mu * q ** (p / 2 - 1), 0.0)
    return A ** (1 / p - 1) * fac[None, :] * w[:, None] * X


def d_grad(Y, w, mu, p):
    B = float(w @ (np.abs(Y) ** p) @ mu)
    if B == 0:
        return None
    return B ** (1 / p - 1) * w[:, None] * mu[None, :] * np.abs(Y) ** (p - 1) * np.sign(Y)


def _norm_from_logs(logs, r):
    """``(sum exp(r * logs))^(1/r)`` without overflow."""
    logs = logs[np.isfinite(logs)] if np.any(np.isneginf(logs)) else logs
    if logs.size == 0:
        return 0.0
    m = logs.max()
    if not np.isfinite(m):
        return float(np.exp(m))
    return float(np.exp(m) * np.sum(np.exp(r * (logs - m))) ** (1 / r))


def s_dual(Z, w, mu, p):
    pp = p / (p - 1)
    with np.errstate(divide="ignore"):
        logs = 0.5 * np.log((Z**2 / w[:, None]).sum(0)) - np.log(mu) / p
    return _norm_from_logs(logs, pp)


def d_dual(Z, w, mu, p):
    pp = p / (p - 1)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(Z)) - np.log(w[:, None] * mu[None, :]) / p
    return _norm_from_logs(logs.ravel(), pp)


def duality_gap(X, F, w, mu, p, extra=()):
    """``(primal value, relative gap)`` at the split ``F = X + (F - X)``.

    ``extra`` holds additional dual candidates, e.g. gradients evaluated in
    log space where entries of ``X`` or ``F - X`` underflow.
    """
    P = s_norm(X, w, mu, p) + d_norm(F - X, w, mu, p)
    if P == 0:
        return 0.0, 0.0
    gs, gd = s_grad(X, w, mu, p), d_grad(F - X, w, mu, p)
    cands = [z for z in (gs, gd) if z is not None] + list(extra)
    if gs is not None and gd is not None:
        cands.append(0.5 * (gs + gd))
    best = 0.0
    for Z in cands:
        m = max(s_dual(Z, w, mu, p), d_dual(Z, w, mu, p))
        if m > 0 and np.isfinite(m):
            best = max(best, float((Z * F).sum()) / m)
    return P, (P - best) / P


# --------------------------------------------------------------------------
# exact reduction


def entry_split(a, l, p, with_logs=False):
    """Solve ``exp(l) x = (a - x)^(p-1)`` for ``x`` in ``[0, a]``.

    Returns ``(x, a - x)``, both computed without cancellation, and with
    ``with_logs`` also their logarithms (finite even when x or a - x
    underflows). Each of the
    two regimes (x below or above a/2) is a Newton iteration in log space on
    a convex increasing function started to the right of its root, hence
    monotone.
    """
    a, l = np.broadcast_arrays(np.asarray(a, float), np.asarray(l, float))
    zero = a <= 0
    a = np.where(zero, 1.0, a)
    la = np.log(a)
    lh = la - np.log(2.0)
    with np.errstate(all="ignore"):
        small_x = (0.5 * a - np.exp(-l + (p - 1) * lh)) >= 0
        v = np.minimum(lh, (p - 1) * la - l)  # log x
        u = np.minimum(lh, (l + la) / (p - 1))  # log (a - x)
        eml = np.exp(-l)
        for _ in range(200):
            ev = np.exp(v)
            r = np.maximum(a - ev, 0.0)
            g = ev - eml * r ** (p - 1)
            dg = ev + eml * (p - 1) * r ** (p - 2) * ev
            dv = np.where(small_x, g / dg, 0.0)
            eu = np.exp(u)
            e1 = np.exp((p - 1) * u - l)
            du = np.where(small_x, 0.0, (e1 + eu - a) / ((p - 1) * e1 + eu))
            dv = np.where(np.isfinite(dv), dv, 0.0)
            du = np.where(np.isfinite(du), du, 0.0)
            v = v - dv
            u = u - du
            if np.all(np.abs(dv) <= 2e-15 * np.maximum(1, np.abs(v))) and np.all(
                np.abs(du) <= 2e-15 * np.maximum(1, np.abs(u))
            ):
                break
        x = np.where(small_x, np.exp(v), a - np.exp(u))
        y = np.where(small_x, a - np.exp(v), np.exp(u))
        if with_logs:
            lx = np.where(small_x, v, np.log(x))
            ly = np.where(small_x, np.log(y), u)
            return (np.where(zero, 0.0, x), np.where(zero, 0.0, y),
                    np.where(zero, -np.inf, lx), np.where(zero, -np.inf, ly))
    return np.where(zero, 0.0, x), np.where(zero, 0.0, y)


def _column_equation(A, w, lt, p, l):
    """Residual and derivative of ``l + lt - (p/2 - 1) log q(l)`` per column."""
    x, y = entry_split(A, l[None, :], p)
    q = w @ x**2
    c = p / 2 - 1
    with np.errstate(all="ignore"):
        k = l + lt - c * np.log(q)
        dlogx = np.where(A > 0, -1.0 / (1.0 + (p - 1) * x / y), 0.0)
        dlogx = np.where(np.isfinite(dlogx), dlogx, 0.0)
        dlogq = np.where(q > 0, 2.0 * (w @ (x**2 * dlogx)) / q, 0.0)
    return k, 1.0 - c * dlogq, x


def _solve_columns(A, w, lt, p, max_iter=100):
    """Per-column log-multipliers ``l`` for a fixed scalar ``lt``; the
    magnitudes follow from ``entry_split(A, l, p)``.

    Each column's equation is strictly increasing in ``l`` (slope >= p-1),
    so a bracketed, safeguarded Newton iteration is used.
    """
    G = A.shape[1]
    lo, hi = np.full(G, -1.0), np.full(G, 1.0)
    step = np.full(G, 2.0)
    for _ in range(300):
        k, _, _ = _column_equation(A, w, lt, p, lo)
        bad = k > 0
        if not bad.any():
            break
        lo = np.where(bad, lo - step, lo)
        step = np.where(bad, step * 2, step)
    step[:] = 2.0
    for _ in range(300):
        k, _, _ = _column_equation(A, w, lt, p, hi)
        bad = k < 0
        if not bad.any():
            break
        hi = np.where(bad, hi + step, hi)
        step = np.where(bad, step * 2, step)
    l = 0.5 * (lo + hi)
    evals = 0
    for evals in range(1, max_iter + 1):
        k, dk, _ = _column_equation(A, w, lt, p, l)
        lo = np.where(k < 0, l, lo)
        hi = np.where(k > 0, l, hi)
        with np.errstate(all="ignore"):
            newton = l - k / dk
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        nxt = np.where(ok, newton, 0.5 * (lo + hi))
        done = (np.abs(k) <= 1e-14 * np.maximum(1.0, np.abs(l))) | (hi - lo <= 1e-15 * np.maximum(1.0, np.abs(l)))
        l = np.where(done, l, nxt)
        if done.all():
            break
    return l, evals


def _nested_solve(F, w, mu, p, cfg: SolverConfig):
    active = np.abs(F).sum(0) > 0
    A = np.abs(F[:, active])
    mua = mu[active]
    count = [0]

    def h(lt):
        l, n = _solve_columns(A, w, lt, p)
        X, Y = entry_split(A, l[None, :], p)
        count[0] += n
        s, d = s_norm(X, w, mua, p), d_norm(Y, w, mua, p)
        if s == 0:
            return -np.inf
        if d == 0:
            return np.inf
        return (p - 1) * (np.log(s) - np.log(d)) - lt

    # h decreases through zero; find a finite bracket by doubling steps
    def bracket(x, direction):
        want = -direction  # sign of h wanted at this end
        hx, step, last = h(x), 1.0, None
        for _ in range(60):
            if hx == 0 or (np.isfinite(hx) and hx * want > 0):
                return x, hx
            if np.isfinite(hx):
                last, x, step = x, x + direction * step, 2 * step
                hx = h(x)
                continue
            if last is None or hx * want < 0:
                break
            # overshot into an underflow region: bisect back towards `last`
            lo_, hi_ = last, x
            for _ in range(80):
                mid = 0.5 * (lo_ + hi_)
                hm = h(mid)
                if np.isfinite(hm) and hm * want > 0:
                    return mid, hm
                if np.isfinite(hm):
                    lo_ = mid
                else:
                    hi_ = mid
            break
        return x, hx

    ends = [bracket(-1.0, -1.0), bracket(1.0, 1.0)]
    (a, ha), (b, hb) = ends
    if not (np.isfinite(ha) and np.isfinite(hb)) or ha * hb > 0:
        raise RuntimeError("no sign change for the scalar equation")
    if ha == 0:
        lt = a
    elif hb == 0:
        lt = b
    else:
        lt = brentq(h, a, b, xtol=1e-15, rtol=1e-15, maxiter=min(cfg.max_iter, 500))
    l, n = _solve_columns(A, w, lt, p)
    Xa, Ya, lx, ly = entry_split(A, l[None, :], p, with_logs=True)
    count[0] += n
    X = np.zeros_like(F)
    X[:, active] = np.sign(F[:, active]) * Xa
    return X, count[0], _log_certificates(F, active, A, w, mu, p, Xa, Ya, lx, ly)


def _log_certificates(F, active, A, w, mu, p, Xa, Ya, lx, ly):
    """Gradients of S at X and of D at F - X from log-magnitudes.

    For p close to 1 the optimum can have entries far below the double
    range whose (p-1)-th powers are still of order one; evaluating the
    gradients through logarithms keeps those contributions.
    """
    mua = mu[active]
    sgn = np.sign(F[:, active])
    out = []
    with np.errstate(all="ignore"):
        s, d = s_norm(Xa, w, mua, p), d_norm(Ya, w, mua, p)
        logq = logsumexp(np.log(w)[:, None] + 2 * lx, axis=0)
        if s > 0:
            gs = s ** (1 - p) * mua * w[:, None] * np.exp(lx + (p / 2 - 1) * logq)
            out.append(gs)
        if d > 0:
            gd = d ** (1 - p) * w[:, None] * mua * np.exp((p - 1) * ly)
            out.append(gd)
        if len(out) == 2:
            out.append(0.5 * (out[0] + out[1]))
    certs = []
    for g in out:
        Z = np.zeros_like(F)
        Z[:, active] = sgn * np.where(A > 0, g, 0.0)
        if np.all(np.isfinite(Z)):
            certs.append(Z)
    return certs


# --------------------------------------------------------------------------
# first-order fallback


def _objective(X, F, w, mu, p):
    return s_norm(X, w, mu, p) + d_norm(F - X, w, mu, p)


def _gradient(X, F, w, mu, p):
    gs, gd = s_grad(X, w, mu, p), d_grad(F - X, w, mu, p)
    g = np.zeros_like(X)
    if gs is not None:
        g += gs
    if gd is not None:
        g -= gd
    return g


def _smoothed(X, F, w, mu, p, eps):
    """Value and gradient of S + D(F - X) with every squared magnitude
    shifted by ``eps**2``; an upper bound within ``O(eps)`` of the true value."""
    e2 = eps * eps
    q = w @ X**2 + e2
    S = float(mu @ q ** (p / 2)) ** (1 / p)
    gS = S ** (1 - p) * (mu * q ** (p / 2 - 1))[None, :] * w[:, None] * X
    Y = F - X
    r = Y**2 + e2
    D = float(w @ r ** (p / 2) @ mu) ** (1 / p)
    gD = D ** (1 - p) * w[:, None] * mu[None, :] * r ** (p / 2 - 1) * Y
    return S + D, gS - gD


def _first_order(F, w, mu, p, X0, cfg: SolverConfig, check_every=25):
    f = lambda X: _objective(X, F, w, mu, p)  # noqa: E731
    x = X0.copy()
    best, fbest = x.copy(), f(x)
    gap = duality_gap(x, F, w, mu, p)[1]
    it = 0
    if cfg.step_rule == "diminishing":
        scale = np.abs(F).max()
        for it in range(1, cfg.max_iter + 1):
            g = _gradient(x, F, w, mu, p)
            gn = np.sqrt((g**2).sum())
            if gn == 0:
                break
            x = x - (scale / np.sqrt(it)) * g / gn
            fx = f(x)
            if fx < fbest:
                best, fbest = x.copy(), fx
            if it % check_every == 0:
                gap = duality_gap(best, F, w, mu, p)[1]
                if gap <= cfg.tol:
                    break
        return best, it, duality_gap(best, F, w, mu, p)[1]
    # Accelerated gradient on a smoothed objective: each inner magnitude is
    # lifted by eps**2, which removes the kinks of S at 0 and of D at zero
    # entries. eps shrinks whenever the smoothed problem is nearly solved,
    # and the stopping test always uses the unsmoothed duality gap.
    eps, L, stage = 0.1, 1.0, 0
    fx, _ = _smoothed(x, F, w, mu, p, eps)
    y, t = x.copy(), 1.0
    for it in range(1, cfg.max_iter + 1):
        stage += 1
        fy, gy = _smoothed(y, F, w, mu, p, eps)
        gg = float((gy * gy).sum())
        for _ in range(200):
            xn = y - gy / L
            fn, _ = _smoothed(xn, F, w, mu, p, eps)
            if fn <= fy - 0.5 / L * gg + 1e-15 * abs(fy):
                break
            L *= 2.0
        if fn > fx:  # adaptive restart
            y, t = x.copy(), 1.0
        else:
            tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            y = xn + (t - 1) / tn * (xn - x)
            x, fx, t = xn, fn, tn
            L *= 0.95
        if it % check_every == 0:
            val, g = duality_gap(x, F, w, mu, p)
            if val < fbest or g <= cfg.tol:
                best, fbest = x.copy(), val
            if g <= cfg.tol:
                break
            if (np.sqrt(gg) < eps or stage > 2000) and eps > 1e-14:
                eps, stage = eps * 0.1, 0
                fx, _ = _smoothed(x, F, w, mu, p, eps)
                y, t = x.copy(), 1.0
    return best, it, duality_gap(best, F, w, mu, p)[1]


# --------------------------------------------------------------------------
# driver


def solve_inf_convolution(F, w, mu, p, cfg: SolverConfig | None = None, method: str = "auto") -> InfConvResult:
    """Minimise ``S(X) + D(F - X)``.

    ``method`` is ``"auto"`` (pure assignments, then exact reduction, then
    first-order fallback) or ``"first-order"`` to force the fallback from
    the zero start.
    """
    cfg = cfg or SolverConfig()
    F = np.asarray(F, float)
    w = np.asarray(w, float)
    mu = np.asarray(mu, float)
    if not (1 < p <= 2):
        raise ValueError("inf-convolution needs 1 < p <= 2")
    scale = np.abs(F).max() if F.size else 0.0
    if scale == 0:
        return InfConvResult(0.0, np.zeros_like(F), "converged", 0.0, 0, "zero")
    Fn = F / scale

    def result(X, gap, iters, name):
        val, _ = duality_gap(X, Fn, w, mu, p)
        status = "converged" if gap <= cfg.tol else "unconverged"
        return InfConvResult(val * scale, X * scale, status, gap, iters, name)

    candidates = []
    Z0 = np.zeros_like(Fn)
    if method == "auto":
        for X, name in ((Z0, "pure-D"), (Fn.copy(), "pure-S")):
            val, gap = duality_gap(X, Fn, w, mu, p)
            if gap <= cfg.tol:
                return result(X, gap, 0, name)
            candidates.append((val, gap, X, name))
        try:
            X, iters, certs = _nested_solve(Fn, w, mu, p, cfg)
            val, gap = duality_gap(X, Fn, w, mu, p, extra=certs)
            if np.isfinite(val) and gap <= cfg.tol:
                return result(X, gap, iters, "reduction")
            if np.isfinite(val):
                candidates.append((val, gap, X, "reduction"))
        except (RuntimeError, ValueError, FloatingPointError):
            pass
        start = min(candidates, key=lambda c: c[0])[2]
    elif method == "first-order":
        start = Z0
    else:
        raise ValueError(f"unknown method {method!r}")
    X, iters, gap = _first_order(Fn, w, mu, p, start, cfg)
    candidates.append((duality_gap(X, Fn, w, mu, p)[0], gap, X, "first-order"))
    val, gap, X, name = min(candidates, key=lambda c: (c[1] > cfg.tol, c[0]))
    return result(X, gap, iters, name)
