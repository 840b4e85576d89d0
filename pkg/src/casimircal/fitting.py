"""Calibration analysis: parabola fits, power-law fits and the scans built on them.

Power-law fits share one engine for ``y = c0 + c1 (V0_PZT - V_PZT)^(-q)``.
For fixed ``(V0_PZT, q)`` the model is linear in ``(c1, c0)``, so the
optimizer only searches ``(V0_PZT[, q])``: a coarse grid in
``log(V0_PZT - max V_PZT)`` (and q) followed by a bounded Nelder-Mead or
Brent polish of the profiled chi^2, with a weighted linear solve inside.
The contact voltage therefore always stays above the largest piezo voltage.

Parameter uncertainties come from a second-difference Hessian of the full
chi^2 at the minimum, ``sigma_i = sqrt(2 [H^-1]_ii)``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .constants import EPSILON_0
from .errors import DomainError, FitError
from .models import Geometry

DEFAULT_Q_GRID = np.round(np.arange(0.5, 4.0 + 1e-9, 0.01), 10)
_COARSE_Q = np.arange(0.1, 7.0 + 1e-9, 0.1)
_N_COARSE_U = 160
_U_SPAN = (1e-6, 1e3)  # contact offset range, in units of the V_PZT span
_Q_BOUNDS = (0.02, 12.0)
PLATEAU_TOL = 1e-9


@dataclass(frozen=True)
class CurvatureSample:
    V_PZT: float
    K_el: float
    sigma_K: float
    V0: float
    sigma_V0: float
    nu0_sq: float
    sigma_nu0_sq: float = 0.0
    n_points: int = 0
    flags: tuple = ()


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    chi2: float
    dof: int
    free: tuple = ()
    flags: list = field(default_factory=list)
    covariance: np.ndarray | None = field(default=None, repr=False)  # over ``free``, in that order
    trace: list = field(default_factory=list, repr=False)

    @property
    def reduced_chi2(self):
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def as_dict(self):
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "sigmas": {k: float(v) for k, v in self.sigmas.items()},
            "chi2": float(self.chi2),
            "dof": int(self.dof),
            "reduced_chi2": float(self.reduced_chi2),
            "free": list(self.free),
            "flags": list(self.flags),
        }


# -- parabola ------------------------------------------------------------------

def fit_parabola(points) -> CurvatureSample:
    """Fit ``nu^2 = nu0^2 - K_el (V - V0)^2`` to one bias sweep.

    Weighted by ``1/sigma(nu^2)^2`` with ``sigma(nu^2) = 2 nu sigma_nu`` when
    all points carry an uncertainty (absolute covariance); otherwise
    unweighted with the covariance scaled by the residual variance.
    """
    points = list(points)
    V_PZT = {p.V_PZT for p in points}
    if len(V_PZT) != 1:
        raise FitError("parabola fit needs points at a single piezo voltage")
    V = np.array([p.V_bias for p in points], dtype=float)
    nu = np.array([p.nu for p in points], dtype=float)
    sig = np.array([p.sigma_nu for p in points], dtype=float)
    if len(np.unique(V)) < 3:
        raise FitError("parabola fit needs at least 3 distinct bias values")
    y = nu**2
    absolute = bool(np.all(sig > 0))
    w = 1.0 / (2.0 * nu * sig) ** 2 if absolute else np.ones_like(y)

    # centred, scaled abscissa for conditioning
    m, s = V.mean(), np.ptp(V) / 2.0
    u = (V - m) / s
    X = np.column_stack([np.ones_like(u), u, u * u])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    normal = X.T @ (w[:, None] * X)
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate parabola design matrix") from exc
    resid = y - X @ coef
    dof = len(y) - 3
    if not absolute:
        cov = cov * (np.sum(resid**2) / dof if dof > 0 else 0.0)

    b0, b1, b2 = coef
    flags = ()
    if b2 >= 0:
        flags = ("non-attractive curvature",)
    K = -b2 / s**2
    V0 = m - s * b1 / (2.0 * b2) if b2 != 0 else float("nan")
    nu0_sq = b0 - b1**2 / (4.0 * b2) if b2 != 0 else float("nan")
    J = np.array([
        [0.0, 0.0, -1.0 / s**2],
        [0.0, -s / (2.0 * b2), s * b1 / (2.0 * b2**2)],
        [1.0, -b1 / (2.0 * b2), b1**2 / (4.0 * b2**2)],
    ])
    var = np.diag(J @ cov @ J.T)
    sK, sV0, snu = np.sqrt(np.maximum(var, 0.0))
    return CurvatureSample(V_PZT.pop(), float(K), float(sK), float(V0), float(sV0),
                           float(nu0_sq), float(snu), len(points), flags)


def group_by_position(points):
    groups = defaultdict(list)
    for p in points:
        groups[p.V_PZT].append(p)
    return dict(groups)


def curvature_samples(points):
    """Parabola fit at every piezo voltage of a curvature-technique run."""
    return [fit_parabola(g) for _, g in sorted(group_by_position(points).items())]


# -- power-law engine ----------------------------------------------------------

class _PowerLawProblem:
    def __init__(self, V, y, sigma, offset):
        self.V = np.asarray(V, dtype=float)
        self.y = np.asarray(y, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if np.any(~(sigma > 0)):
            raise FitError("all uncertainties must be > 0 for a weighted fit")
        self.w = 1.0 / sigma**2
        self.offset = offset
        self.vmax = self.V.max()
        span = np.ptp(self.V)
        if span <= 0:
            raise FitError("piezo voltages must not all coincide")
        self.u_bounds = (np.log(span * _U_SPAN[0]), np.log(span * _U_SPAN[1]))

    def linear(self, basis):
        """Weighted linear solve on the last axis; returns (c1, c0, chi2)."""
        w, y = self.w, self.y
        Sw = w.sum()
        Sy = (w * y).sum()
        St = (w * basis).sum(-1)
        Stt = (w * basis * basis).sum(-1)
        Sty = (w * basis * y).sum(-1)
        if self.offset:
            det = Stt * Sw - St * St
            c1 = (Sty * Sw - St * Sy) / det
            c0 = (Stt * Sy - St * Sty) / det
        else:
            c1 = Sty / Stt
            c0 = np.zeros_like(c1)
        r = y - c1[..., None] * basis - c0[..., None]
        return c1, c0, (w * r * r).sum(-1)

    def basis(self, u, q):
        x = np.exp(np.asarray(u, dtype=float))[..., None] + (self.vmax - self.V)
        return np.exp(-np.asarray(q, dtype=float)[..., None] * np.log(x))

    def profile(self, u, q):
        return float(self.linear(self.basis(u, q))[2])

    def profile_residuals(self, u, q):
        b = self.basis(u, q)
        c1, c0, _ = self.linear(b)
        return np.sqrt(self.w) * (self.y - c1 * b - c0)

    def chi2_full(self, theta, q_fixed):
        c1, V0 = theta[0], theta[1]
        i = 2
        if q_fixed is None:
            q = theta[i]
            i += 1
        else:
            q = q_fixed
        c0 = theta[i] if self.offset else 0.0
        x = V0 - self.V
        if np.any(x <= 0):
            return np.inf
        r = self.y - c1 * x ** (-q) - c0
        return float(np.sum(self.w * r * r))

    def jacobian(self, c1, V0, q, q_free):
        x = V0 - self.V
        t = x ** (-q)
        cols = [t, c1 * (-q) * t / x]
        if q_free:
            cols.append(-c1 * t * np.log(x))
        if self.offset:
            cols.append(np.ones_like(t))
        return np.column_stack(cols)


def _solve(problem: _PowerLawProblem, q):
    """Minimize the profiled chi^2; returns (u, q, trace)."""
    lo, hi = problem.u_bounds
    us = np.linspace(lo, hi, _N_COARSE_U)
    trace = []
    if q is None:
        qs = _COARSE_Q
        chi = problem.linear(problem.basis(us[None, :], qs[:, None]))[2]
        chi = np.where(np.isfinite(chi), chi, np.inf)
        iq, iu = np.unravel_index(np.argmin(chi), chi.shape)
        trace.append(("grid", float(us[iu]), float(qs[iq]), float(chi[iq, iu])))

        def fun(theta):
            val = problem.profile(theta[0], theta[1])
            trace.append(("nm", float(theta[0]), float(theta[1]), val))
            return val if np.isfinite(val) else 1e300

        best = None
        for start in ((us[iu], qs[iq]),):
            res = optimize.minimize(fun, np.array(start), method="Nelder-Mead",
                                    bounds=[(lo, hi), _Q_BOUNDS],
                                    options=dict(xatol=1e-10, fatol=1e-13 * chi[iq, iu], maxiter=4000, maxfev=8000))
            if best is None or res.fun < best.fun:
                best = res
        u_opt, q_opt = best.x
        if not np.isfinite(best.fun):
            raise FitError("power-law fit did not converge", trace[-20:])
    else:
        chi = problem.linear(problem.basis(us, np.full_like(us, q)))[2]
        chi = np.where(np.isfinite(chi), chi, np.inf)
        iu = int(np.argmin(chi))
        trace.append(("grid", float(us[iu]), float(q), float(chi[iu])))
        a, b = us[max(iu - 1, 0)], us[min(iu + 1, len(us) - 1)]
        res = optimize.minimize_scalar(lambda u: problem.profile(u, q), bounds=(a, b), method="bounded",
                                       options=dict(xatol=1e-12))
        u_opt, q_opt = res.x, q
        trace.append(("brent", float(u_opt), float(q), float(res.fun)))
    u_opt, q_opt = _polish(problem, u_opt, q_opt, q is None, trace)
    span = hi - lo
    if u_opt > hi - 1e-3 * span or u_opt < lo + 1e-3 * span:
        raise FitError("contact voltage ran to the edge of its search range", trace[-20:])
    if q is None and (q_opt >= _Q_BOUNDS[1] - 1e-6 or q_opt <= _Q_BOUNDS[0] + 1e-6):
        raise FitError("exponent ran to the edge of its search range", trace[-20:])
    return float(u_opt), float(q_opt), trace


def _polish(problem, u, q, q_free, trace):
    """Levenberg-Marquardt refinement of the derivative-free optimum; kept only if chi^2 drops."""
    x0 = np.array([u, q]) if q_free else np.array([u])

    def res(x):
        return problem.profile_residuals(x[0], x[1] if q_free else q)

    f0 = problem.profile(u, q)
    try:
        with np.errstate(all="ignore"):
            sol = optimize.least_squares(res, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    except (ValueError, np.linalg.LinAlgError):
        return u, q
    u_new, q_new = (sol.x[0], sol.x[1]) if q_free else (sol.x[0], q)
    lo, hi = problem.u_bounds
    f1 = problem.profile(u_new, q_new)
    if not (np.isfinite(f1) and f1 <= f0 and lo <= u_new <= hi and _Q_BOUNDS[0] <= q_new <= _Q_BOUNDS[1]):
        return u, q
    trace.append(("lm", float(u_new), float(q_new), f1))
    return u_new, q_new


def _hessian_sigmas(problem, theta, q_fixed, steps):
    n = len(theta)
    f0 = problem.chi2_full(theta, q_fixed)
    H = np.empty((n, n))
    E = np.diag(steps)
    for i in range(n):
        H[i, i] = (problem.chi2_full(theta + E[i], q_fixed) - 2 * f0
                   + problem.chi2_full(theta - E[i], q_fixed)) / steps[i] ** 2
        for j in range(i):
            H[i, j] = H[j, i] = (
                problem.chi2_full(theta + E[i] + E[j], q_fixed) - problem.chi2_full(theta + E[i] - E[j], q_fixed)
                - problem.chi2_full(theta - E[i] + E[j], q_fixed) + problem.chi2_full(theta - E[i] - E[j], q_fixed)
            ) / (4 * steps[i] * steps[j])
    cov = 2.0 * np.linalg.inv(H)
    if not np.all(np.diag(cov) > 0):
        raise np.linalg.LinAlgError("chi2 Hessian is not positive definite")
    return np.sqrt(np.diag(cov)), cov


def _powerlaw_fit(V, y, sigma, q, offset, names):
    """Shared engine. ``names`` labels (c1, V0_PZT, q, c0)."""
    q_fixed = None if q in (None, "free") else float(q)
    problem = _PowerLawProblem(V, y, sigma, offset)
    n_free = 2 + (q_fixed is None) + bool(offset)
    if len(problem.y) < n_free + 1:
        raise FitError(f"need at least {n_free + 1} points for {n_free} free parameters")
    u, q_opt, trace = _solve(problem, q_fixed)
    basis = problem.basis(u, q_opt)
    c1, c0, chi2 = (float(v) for v in problem.linear(basis))
    V0 = problem.vmax + np.exp(u)

    theta = [c1, V0] + ([q_opt] if q_fixed is None else []) + ([c0] if offset else [])
    theta = np.array(theta)
    flags = []
    # conditional Gauss-Newton widths put each finite-difference step at delta-chi2 ~ 1/4
    J = problem.jacobian(c1, V0, q_opt, q_fixed is None)
    info = J.T @ (problem.w[:, None] * J)
    try:
        with np.errstate(invalid="ignore"):
            gn = np.sqrt(np.diag(np.linalg.inv(info)))
    except np.linalg.LinAlgError:
        gn = np.full(len(theta), np.nan)
    cond = 1.0 / np.sqrt(np.diag(info))
    gap = V0 - problem.vmax
    steps = np.where(np.isfinite(cond) & (cond > 0), 0.5 * cond, 1e-6 * np.maximum(np.abs(theta), 1.0))
    steps[1] = min(steps[1], 0.25 * gap)
    try:
        sig, cov = _hessian_sigmas(problem, theta, q_fixed, steps)
    except np.linalg.LinAlgError:
        sig = gn
        cov = np.linalg.pinv(info)
        flags.append("hessian not positive definite; Gauss-Newton errors used")

    params = {names[0]: c1, names[1]: float(V0), names[2]: q_opt, names[3]: c0 if offset else 0.0}
    sig_list = list(sig)
    sigmas = {names[0]: sig_list.pop(0), names[1]: sig_list.pop(0)}
    sigmas[names[2]] = sig_list.pop(0) if q_fixed is None else 0.0
    sigmas[names[3]] = sig_list.pop(0) if offset else 0.0
    free = tuple(k for k, on in zip(names, (True, True, q_fixed is None, bool(offset))) if on)
    return FitResult(params, {k: float(v) for k, v in sigmas.items()}, chi2,
                     len(problem.y) - n_free, free, flags, cov, trace)


def fit_curvature_powerlaw(samples: Sequence[CurvatureSample], q="free", offset=False) -> FitResult:
    """Weighted fit of ``K_el = gamma (V0_PZT - V_PZT)^(-q) [+ offset]``.

    ``q`` is ``"free"`` or a fixed exponent. Weights are ``1/sigma_K^2``.
    """
    V = [s.V_PZT for s in samples]
    K = [s.K_el for s in samples]
    sK = [s.sigma_K for s in samples]
    order = np.argsort(V)
    return _powerlaw_fit(np.take(V, order), np.take(K, order), np.take(sK, order), q, offset,
                         ("gamma", "V0_PZT", "q", "offset"))


@dataclass
class ExponentScan:
    q: np.ndarray
    reduced_chi2: np.ndarray
    q_best: float
    plateau: bool
    failed: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.q.tolist(), self.reduced_chi2.tolist()))


def exponent_chi2_scan(samples, q_grid=None, offset=False) -> ExponentScan:
    """Reduced chi^2 profile over a grid of fixed exponents."""
    q_grid = DEFAULT_Q_GRID if q_grid is None else np.asarray(q_grid, dtype=float)
    if np.any(q_grid <= 0) or np.any(q_grid > 6):
        raise DomainError("exponent grid must lie within (0, 6]")
    red = np.full(len(q_grid), np.nan)
    failed = []
    for i, q in enumerate(q_grid):
        try:
            red[i] = fit_curvature_powerlaw(samples, q=float(q), offset=offset).reduced_chi2
        except FitError as exc:
            failed.append((float(q), str(exc)))
    if not np.any(np.isfinite(red)):
        raise FitError("every exponent in the scan failed", failed)
    best = np.nanmin(red)
    ties = np.flatnonzero(np.abs(red - best) <= PLATEAU_TOL * max(abs(best), 1.0))
    return ExponentScan(q_grid, red, float(q_grid[ties[0]]), len(ties) > 1, failed)


@dataclass
class TruncationRow:
    n_removed: int
    V_PZT_min: float
    d_min_nominal: float
    free: FitResult | None
    fixed: FitResult | None
    error: str | None = None


def truncation_scan(samples, *, beta, q="free", offset=False, min_samples=6, stride=1,
                    with_fixed=True, fixed_q=2.5):
    """Refit after repeatedly dropping the closest remaining sample.

    Distances are "nominal": ``beta (V0_PZT - V_PZT)`` with V0_PZT from a
    fixed-exponent (2.5) fit to the complete sample set. With
    ``with_fixed`` every level is also refitted at the fixed exponent.
    """
    samples = sorted(samples, key=lambda s: -s.V_PZT)  # closest first
    if len(samples) < min_samples:
        raise FitError(f"need at least {min_samples} samples")
    reference = fit_curvature_powerlaw(samples, q=fixed_q, offset=offset)
    V0_ref = reference.params["V0_PZT"]
    rows = []
    for k in range(0, len(samples) - min_samples + 1, stride):
        kept = samples[k:]
        v_min = kept[0].V_PZT
        row = TruncationRow(k, v_min, beta * (V0_ref - v_min), None, None)
        try:
            row.free = fit_curvature_powerlaw(kept, q=q, offset=offset)
            if with_fixed:
                row.fixed = fit_curvature_powerlaw(kept, q=fixed_q, offset=offset)
        except FitError as exc:
            row.error = str(exc)
        rows.append(row)
    return rows


def distance_parameters(result: FitResult, beta, V0_PZT_true):
    """Express a piezo-voltage fit as ``alpha (d - d0)^(-q)`` in gap units.

    Returns ``(alpha, sigma_alpha, d0, sigma_d0)`` with
    ``alpha = gamma beta^q`` and ``d0 = beta (V0_PZT_true - V0_PZT_fit)``.
    """
    q = result.params["q"]
    scale = beta**q
    return (result.params["gamma"] * scale, result.sigmas["gamma"] * scale,
            beta * (V0_PZT_true - result.params["V0_PZT"]), beta * result.sigmas["V0_PZT"])


# -- fast approach ---------------------------------------------------------------

def _single_bias(points):
    biases = {p.V_bias for p in points}
    if len(biases) != 1:
        raise FitError(f"fast-approach fit needs a constant bias, got {sorted(biases)}")
    return biases.pop()


def fit_fast_approach(points, q="free") -> FitResult:
    """Fit ``nu^2 = nu0^2 - A (V0_PZT - V_PZT)^(-q)`` at constant bias."""
    points = sorted(points, key=lambda p: p.V_PZT)
    _single_bias(points)
    V = np.array([p.V_PZT for p in points])
    nu = np.array([p.nu for p in points])
    sig = np.array([p.sigma_nu for p in points])
    result = _powerlaw_fit(V, nu**2, 2.0 * nu * sig, q, True, ("A", "V0_PZT", "q", "nu0_sq"))
    result.params["A"] = -result.params["A"]
    result.covariance[0, :] *= -1.0
    result.covariance[:, 0] *= -1.0
    return result


def split_by_bias(points):
    groups = defaultdict(list)
    for p in points:
        groups[p.V_bias].append(p)
    return {k: sorted(v, key=lambda p: p.V_PZT) for k, v in sorted(groups.items())}


# -- effective mass --------------------------------------------------------------

def _gamma_prefactor(geom: Geometry, beta):
    return 3.0 * EPSILON_0 * np.sqrt(geom.a) * geom.L_eff / (16.0 * np.sqrt(2.0) * np.pi * beta**2.5)


def effective_mass_from_gamma(gamma, geom: Geometry, beta):
    """Invert ``gamma = 3 eps0 sqrt(a) L_eff / (16 sqrt2 pi m_eff beta^2.5)``."""
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    return float(_gamma_prefactor(geom, beta) / gamma)


def gamma_from_effective_mass(m_eff, geom: Geometry, beta):
    if not m_eff > 0:
        raise DomainError(f"m_eff must be > 0, got {m_eff}")
    return float(_gamma_prefactor(geom, beta) / m_eff)


# -- residuals -------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualRow:
    V_PZT: float
    d: float
    nu_sq_residual: float
    sigma_nu_sq: float  # measurement and extrapolated-fit uncertainty combined
    force_residual: float


@dataclass
class ResidualAnalysis:
    fit: FitResult
    rows: list
    m_eff: float

    def peak(self):
        """Most negative squared-frequency residual in the evaluation window."""
        return min(r.nu_sq_residual for r in self.rows)


def _in_window(V, window):
    lo, hi = window
    return (V >= lo) & (V <= hi)


def _prediction_sigma(fit: FitResult, V):
    """Delta-method uncertainty of the fitted fast-approach model at ``V``."""
    p = fit.params
    x = p["V0_PZT"] - V
    t = x ** (-p["q"])
    grads = {"A": -t, "V0_PZT": p["A"] * p["q"] * t / x,
             "q": p["A"] * t * np.log(x), "nu0_sq": np.ones_like(t)}
    G = np.column_stack([grads[k] for k in fit.free])
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", G, fit.covariance, G), 0.0))


def residual_analysis(points, fit_window, eval_window, *, beta, geom=None, v0=0.0, q=2.5):
    """Extrapolate a far-distance Coulomb fit and report residuals closer in.

    The constant-bias data inside ``fit_window`` (V_PZT range) are fitted
    with a fixed exponent; residuals ``nu^2 - nu_fit^2`` are reported over
    ``eval_window`` with gaps from the fitted contact voltage. Their
    uncertainty combines the measurement error with the propagated fit
    covariance, which dominates close to contact.

    Force residuals integrate ``dF/dd = 4 pi^2 m_eff (nu^2 - nu_fit^2)`` in
    gap, anchored to zero at the farthest fitted point. ``m_eff`` comes from
    the fitted amplitude through ``A = gamma (V_bias - v0)^2``. Forces are
    attractive-positive, and NaN when no geometry is given.
    """
    points = sorted(points, key=lambda p: p.V_PZT)
    V_bias = _single_bias(points)
    V = np.array([p.V_PZT for p in points])
    nu = np.array([p.nu for p in points])
    sig = np.array([p.sigma_nu for p in points])
    in_fit = _in_window(V, fit_window)
    in_eval = _in_window(V, eval_window)
    if in_fit.sum() < 4:
        raise FitError("fit window holds fewer than 4 points")
    fit = fit_fast_approach([p for p, m in zip(points, in_fit) if m], q=q)
    V0_PZT = fit.params["V0_PZT"]
    use = in_fit | in_eval
    if np.any(V[use] >= V0_PZT):
        raise FitError("evaluation window reaches beyond the fitted contact voltage")
    V, nu, sig = V[use], nu[use], sig[use]
    in_fit, in_eval = in_fit[use], in_eval[use]

    model = fit.params["nu0_sq"] - fit.params["A"] * (V0_PZT - V) ** (-fit.params["q"])
    resid = nu**2 - model
    sig_sq = np.hypot(2.0 * nu * sig, _prediction_sigma(fit, V))
    d = beta * (V0_PZT - V)

    m_eff = float("nan")
    force = np.full(len(d), np.nan)
    if geom is not None and fit.params["A"] > 0 and V_bias != v0:
        gamma = fit.params["A"] / (V_bias - v0) ** 2
        m_eff = effective_mass_from_gamma(gamma, geom, beta)
        grad = 4.0 * np.pi**2 * m_eff * resid
        order = np.argsort(d)
        ds, gs = d[order], grad[order]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (gs[1:] + gs[:-1]) * np.diff(ds))])
        anchor = int(np.argmax(np.where(in_fit[order], ds, -np.inf)))
        force[order] = cum - cum[anchor]

    rows = [ResidualRow(float(V[i]), float(d[i]), float(resid[i]), float(sig_sq[i]), float(force[i]))
            for i in np.flatnonzero(in_eval)]
    return ResidualAnalysis(fit, rows, m_eff)
