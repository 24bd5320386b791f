"""Linear regression on the smoothed factor with ARMA(p, q) errors.

The target is modeled as y_t = a + b'F_t + u_t with u_t an ARMA(p, q)
process, estimated by exact Gaussian maximum likelihood. The error process
runs through a stationary Kalman filter in innovations form; regression
coefficients and the innovation variance are concentrated out (Kalman
whitening turns the GLS step into ordinary least squares on filtered
data), so the numerical search only covers the ARMA parameters, which are
kept stationary/invertible by a partial-autocorrelation
reparameterization throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

_STEADY_TOL = 1e-13
_BOUNDARY_PACF = 0.995


def _transient_filter_py(u2, t_mat, rr, cov, steady_tol, min_steps):
    """Unit-variance Kalman recursion until the prediction variance
    stabilizes; returns innovations so far plus the live filter state."""
    t_len, n_cols = u2.shape
    v = np.empty((t_len, n_cols))
    s = np.empty(t_len)
    a = np.zeros((t_mat.shape[0], n_cols))
    steady_at = -1
    prev_cov = None
    for tt in range(t_len):
        s_t = cov[0, 0]
        s[tt] = s_t
        v[tt] = u2[tt] - a[0]
        gain = cov[:, 0] / s_t
        a = a + np.outer(gain, v[tt])
        cov = cov - np.outer(gain, cov[0, :])
        a = t_mat @ a
        cov = t_mat @ cov @ t_mat.T + rr
        if prev_cov is not None and tt + 1 >= min_steps:
            if np.max(np.abs(cov - prev_cov)) < steady_tol:
                steady_at = tt + 1
                break
        prev_cov = cov
    return v, s, steady_at, a, cov


try:  # pragma: no cover - optional numba acceleration of the hot loop
    from numba import njit

    @njit(cache=True)
    def _transient_filter_nb(u2, t_mat, rr, cov, steady_tol, min_steps):
        t_len, n_cols = u2.shape
        m = t_mat.shape[0]
        v = np.empty((t_len, n_cols))
        s = np.empty(t_len)
        a = np.zeros((m, n_cols))
        prev = np.full((m, m), np.inf)
        steady_at = -1
        for tt in range(t_len):
            s_t = cov[0, 0]
            s[tt] = s_t
            for c in range(n_cols):
                v[tt, c] = u2[tt, c] - a[0, c]
            for i in range(m):
                g = cov[i, 0] / s_t
                for c in range(n_cols):
                    a[i, c] += g * v[tt, c]
            row0 = cov[0, :].copy()
            for i in range(m):
                g = cov[i, 0] / s_t
                for j in range(m):
                    cov[i, j] -= g * row0[j]
            a = t_mat @ a
            cov = t_mat @ cov @ t_mat.T + rr
            if tt + 1 >= min_steps:
                diff = 0.0
                for i in range(m):
                    for j in range(m):
                        d = abs(cov[i, j] - prev[i, j])
                        if d > diff:
                            diff = d
                if diff < steady_tol:
                    steady_at = tt + 1
                    break
            for i in range(m):
                for j in range(m):
                    prev[i, j] = cov[i, j]
        return v, s, steady_at, a, cov

    _transient_filter = _transient_filter_nb
except Exception:  # pragma: no cover - numba not installed
    _transient_filter = _transient_filter_py


class ArmaConvergenceError(RuntimeError):
    """Raised when no optimizer start converges; carries the best iterate."""

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


@dataclass
class ArmaRegModel:
    """Fitted factor regression with ARMA errors."""

    intercept: float
    factor_coef: np.ndarray
    ar: np.ndarray
    ma: np.ndarray
    innovation_var: float
    orders: tuple
    loglik: float
    coef_se: np.ndarray
    converged: bool = True
    boundary: bool = False
    n_obs: int = 0
    final_state: np.ndarray = field(default=None, repr=False)
    final_state_cov: np.ndarray = field(default=None, repr=False)

    @property
    def params(self):
        return np.concatenate(([self.intercept], self.factor_coef, self.ar, self.ma))

    def to_dict(self):
        return {
            "orders": list(self.orders),
            "intercept": float(self.intercept),
            "factor_coef": [float(v) for v in self.factor_coef],
            "ar": [float(v) for v in self.ar],
            "ma": [float(v) for v in self.ma],
            "innovation_var": float(self.innovation_var),
            "loglik": float(self.loglik),
            "coef_se": [float(v) for v in self.coef_se],
            "converged": bool(self.converged),
            "boundary": bool(self.boundary),
            "n_obs": int(self.n_obs),
        }


@dataclass(frozen=True)
class Forecast:
    """Point forecasts with innovation-propagation variances."""

    points: np.ndarray
    variances: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float


# ---------------------------------------------------------------------------
# stationarity-preserving reparameterization

def _constrain(x):
    x = np.asarray(x, dtype=float)
    return x / np.sqrt(1.0 + x * x)


def _unconstrain(r):
    r = np.asarray(r, dtype=float)
    r = np.clip(r, -1 + 1e-12, 1 - 1e-12)
    return r / np.sqrt(1.0 - r * r)


def _pacf_to_ar(pacf):
    pacf = np.asarray(pacf, dtype=float)
    coefs = np.zeros(0)
    for k, rk in enumerate(pacf, start=1):
        prev = coefs
        coefs = np.empty(k)
        coefs[: k - 1] = prev - rk * prev[::-1]
        coefs[k - 1] = rk
    return coefs


def _ar_to_pacf(ar):
    coefs = np.asarray(ar, dtype=float).copy()
    pacf = np.zeros(len(coefs))
    for k in range(len(coefs), 0, -1):
        rk = coefs[k - 1]
        pacf[k - 1] = rk
        if k > 1:
            denom = 1.0 - rk * rk
            if denom <= 0:
                denom = 1e-12
            coefs = (coefs[: k - 1] + rk * coefs[: k - 1][::-1]) / denom
    return pacf


def _params_from_x(x, p, q):
    phi = _pacf_to_ar(_constrain(x[:p])) if p else np.zeros(0)
    ma = -_pacf_to_ar(_constrain(x[p:])) if q else np.zeros(0)
    return phi, ma


def _x_from_params(phi, ma):
    parts = []
    if len(phi):
        parts.append(_unconstrain(np.clip(_ar_to_pacf(phi), -0.99, 0.99)))
    if len(ma):
        parts.append(_unconstrain(np.clip(_ar_to_pacf(-np.asarray(ma)), -0.99, 0.99)))
    return np.concatenate(parts) if parts else np.zeros(0)


def _poly_stable(coefs):
    """True when 1 - sum(c_i z^i) has all roots outside the unit circle."""
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        return True
    roots = np.roots(np.concatenate(([1.0], -c))[::-1])
    return bool(np.all(np.abs(roots) > 1.0)) if roots.size else True


# ---------------------------------------------------------------------------
# exact stationary innovations

def _system_matrices(phi, ma):
    p, q = len(phi), len(ma)
    m = max(p, q + 1)
    t_mat = np.zeros((m, m))
    t_mat[:p, 0] = phi
    t_mat[: m - 1, 1:] = np.eye(m - 1)
    r_vec = np.zeros(m)
    r_vec[0] = 1.0
    r_vec[1 : q + 1] = ma
    return t_mat, r_vec


def _stationary_cov(t_mat, rr):
    # direct kron solve of C = T C T' + RR; cheaper than the scipy general
    # solver at these state dimensions (m <= 5)
    m = t_mat.shape[0]
    vec = np.linalg.solve(np.eye(m * m) - np.kron(t_mat, t_mat), rr.ravel())
    return vec.reshape(m, m)


def _initial_conditions(b_poly, a_poly, past_out, past_in):
    """Direct-form-II-transposed filter state implied by recursion history.

    ``past_out``/``past_in`` are (K, C) with the most recent value first;
    vectorized equivalent of scipy.signal.lfiltic per column.
    """
    k = max(len(a_poly), len(b_poly)) - 1
    b_pad = np.zeros(k + 1)
    b_pad[: len(b_poly)] = b_poly
    a_pad = np.zeros(k + 1)
    a_pad[: len(a_poly)] = a_poly
    zi = np.zeros((k, past_in.shape[1]))
    for kk in range(k):
        for j in range(kk + 1, k + 1):
            lag = j - kk - 1
            zi[kk] += b_pad[j] * past_in[lag] - a_pad[j] * past_out[lag]
    return zi


def arma_innovations(u, phi, ma, steady_tol=_STEADY_TOL):
    """Exact innovations and scaled variances of stationary ARMA noise.

    Runs the unit-variance Kalman filter from the stationary distribution;
    once the prediction variance reaches its fixed point the recursion is
    handed over to the equivalent direct ARMA filter (scipy.signal.lfilter
    seeded with the live filter history), which is the same arithmetic at a
    fraction of the cost. Accepts a vector or a T x C matrix of columns
    sharing the same error process.
    """
    u2 = np.asarray(u, dtype=float)
    squeeze = u2.ndim == 1
    if squeeze:
        u2 = u2[:, None]
    t_len, n_cols = u2.shape
    p, q = len(phi), len(ma)
    if p == 0 and q == 0:
        v = u2.copy()
        return (v[:, 0] if squeeze else v), np.ones(t_len)

    t_mat, r_vec = _system_matrices(phi, ma)
    m = t_mat.shape[0]
    rr = np.outer(r_vec, r_vec)
    cov0 = _stationary_cov(t_mat, rr)

    v, s, steady_at, _, cov = _transient_filter(
        np.ascontiguousarray(u2),
        np.ascontiguousarray(t_mat),
        np.ascontiguousarray(rr),
        np.ascontiguousarray(cov0),
        float(steady_tol),
        m + max(p, q) + 1,
    )

    if steady_at >= 0 and steady_at < t_len:
        b_poly = np.concatenate(([1.0], -np.asarray(phi)))
        a_poly = np.concatenate(([1.0], np.asarray(ma)))
        order = max(p, q)
        if order:
            zi = _initial_conditions(
                b_poly,
                a_poly,
                v[steady_at - 1 : steady_at - 1 - order : -1],
                u2[steady_at - 1 : steady_at - 1 - order : -1],
            )
            rest, _ = signal.lfilter(b_poly, a_poly, u2[steady_at:], axis=0, zi=zi)
        else:
            rest = signal.lfilter(b_poly, a_poly, u2[steady_at:], axis=0)
        v[steady_at:] = rest
        s[steady_at:] = cov[0, 0]

    return (v[:, 0] if squeeze else v), s


def _profile_loglik(y, x_reg, phi, ma):
    """GLS of whitened target on whitened regressors; concentrated loglik."""
    t_len = len(y)
    stacked = np.column_stack([y, x_reg])
    v, s = arma_innovations(stacked, phi, ma)
    w = 1.0 / np.sqrt(s)
    vy = v[:, 0] * w
    vx = v[:, 1:] * w[:, None]
    gram = vx.T @ vx
    try:
        beta = np.linalg.solve(gram, vx.T @ vy)
    except np.linalg.LinAlgError:
        beta, *_ = np.linalg.lstsq(vx, vy, rcond=None)
    resid = vy - vx @ beta
    sigma2 = max(float(resid @ resid) / t_len, 1e-300)
    loglik = -0.5 * t_len * (np.log(2.0 * np.pi) + 1.0 + np.log(sigma2)) - 0.5 * np.sum(np.log(s))
    return beta, sigma2, loglik


def _fixed_beta_loglik(y, x_reg, beta, phi, ma):
    t_len = len(y)
    u = y - x_reg @ beta
    v, s = arma_innovations(u, phi, ma)
    sigma2 = max(float(np.sum(v * v / s)) / t_len, 1e-300)
    return -0.5 * t_len * (np.log(2.0 * np.pi) + 1.0 + np.log(sigma2)) - 0.5 * np.sum(np.log(s)), sigma2


def _hannan_rissanen(y, x_reg, p, q):
    """Regression-based starting values for the ARMA error parameters."""
    beta0, *_ = np.linalg.lstsq(x_reg, y, rcond=None)
    u = y - x_reg @ beta0
    t_len = len(u)
    if p + q == 0:
        return np.zeros(0)
    lag = min(max(2 * (p + q), 8), max(t_len // 3, p + q + 1))
    innov = u.copy()
    if lag < t_len - 1:
        rows = np.column_stack([u[lag - i : t_len - i] for i in range(1, lag + 1)])
        coef, *_ = np.linalg.lstsq(rows, u[lag:], rcond=None)
        innov = np.zeros(t_len)
        innov[lag:] = u[lag:] - rows @ coef
    start = max(p, q)
    cols = [u[start - i : t_len - i] for i in range(1, p + 1)]
    cols += [innov[start - j : t_len - j] for j in range(1, q + 1)]
    if not cols:
        return np.zeros(0)
    design = np.column_stack(cols)
    theta, *_ = np.linalg.lstsq(design, u[start:], rcond=None)
    phi0 = theta[:p]
    ma0 = theta[p:]
    return _x_from_params(phi0, ma0)


def _numerical_hessian(fun, x, step=1e-4):
    k = x.size
    hess = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = step
        f_pp = fun(x + ei)
        f_mm = fun(x - ei)
        hess[i, i] = (f_pp - 2.0 * fun(x) + f_mm) / step**2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4.0 * step**2)
    return hess


def fit_armareg(y, factors, p, q, *, n_restarts=5, seed=0, start=None, compute_se=True, max_iter=200):
    """Exact maximum-likelihood fit of the factor regression with ARMA errors.

    Starts from Hannan-Rissanen-style values, from the OLS point (all ARMA
    parameters zero) and from ``n_restarts`` seeded perturbations; the best
    optimum wins, so the returned likelihood can never fall below the
    OLS-initialized start. Standard errors come from the numerical Hessian
    of the concentrated likelihood in the original parameter space.

    Parameters
    ----------
    y : array_like
        Target sample, length T*.
    factors : array_like
        Aligned factor path, T* rows (one column per factor).
    p, q : int
        AR and MA orders of the error process.
    n_restarts : int
        Extra randomized starts around the primary initial value.
    seed : int
        Seed for the restart perturbations.
    start : tuple of (ar, ma), optional
        Warm start; replaces the OLS start and anchors the restarts
        (expanding-window refits pass the previous origin's estimate).
    compute_se : bool
        Skip the Hessian when standard errors are not needed (grid
        backtests).
    max_iter : int
        Iteration cap per optimizer start.

    Returns
    -------
    ArmaRegModel

    Raises
    ------
    ArmaConvergenceError
        When no start yields a finite optimum; the best iterate rides on
        the exception's ``model`` attribute.
    """
    y = np.asarray(y, dtype=float).ravel()
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if len(y) != f.shape[0]:
        raise ValueError("target and factor samples must align")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        raise ValueError("non-finite values in the estimation sample")
    p, q = int(p), int(q)
    if p < 0 or q < 0:
        raise ValueError("ARMA orders must be nonnegative")
    t_len, r = len(y), f.shape[1]
    if t_len <= 2 * (p + q) + r + 1:
        raise ValueError(f"sample of {t_len} too short for orders ({p}, {q})")
    x_reg = np.column_stack([np.ones(t_len), f])

    if p + q == 0:
        beta, sigma2, loglik = _profile_loglik(y, x_reg, np.zeros(0), np.zeros(0))
        x_opt = np.zeros(0)
        converged = True
    else:
        # warm starts (expanding-window refits) replace the zero start and
        # anchor the random perturbations; cold fits begin at the
        # Hannan-Rissanen point and at the OLS point (all ARMA params zero)
        if start is not None:
            starts = [
                _x_from_params(np.asarray(start[0]), np.asarray(start[1])),
                _hannan_rissanen(y, x_reg, p, q),
            ]
        else:
            starts = [_hannan_rissanen(y, x_reg, p, q), np.zeros(p + q)]
        rng = np.random.default_rng(seed)
        starts += [starts[0] + rng.normal(0.0, 0.3, p + q) for _ in range(n_restarts)]

        def nll(x):
            phi, ma = _params_from_x(x, p, q)
            return -_profile_loglik(y, x_reg, phi, ma)[2]

        best = None
        any_success = False
        options = {"gtol": 1e-8, "ftol": 1e-12, "maxiter": int(max_iter), "maxfun": 10 * int(max_iter)}
        for x0 in starts:
            res = optimize.minimize(nll, x0, method="L-BFGS-B", options=options)
            any_success = any_success or bool(res.success)
            if best is None or res.fun < best.fun:
                best = res
        x_opt = best.x
        phi, ma = _params_from_x(x_opt, p, q)
        beta, sigma2, loglik = _profile_loglik(y, x_reg, phi, ma)
        converged = any_success
        if not np.isfinite(best.fun):
            model = _build_model(y, x_reg, beta, sigma2, loglik, x_opt, p, q, r, converged=False)
            raise ArmaConvergenceError(
                f"no optimizer start converged for orders ({p}, {q})", model=model
            )

    model = _build_model(y, x_reg, beta, sigma2, loglik, x_opt, p, q, r, converged=converged)

    if compute_se:
        params = model.params

        def nll_orig(theta):
            b = theta[: 1 + r]
            phi = theta[1 + r : 1 + r + p]
            ma = theta[1 + r + p :]
            if not (_poly_stable(phi) and _poly_stable(-ma)):
                return np.inf
            return -_fixed_beta_loglik(y, x_reg, b, phi, ma)[0]

        try:
            hess = _numerical_hessian(nll_orig, params)
            cov = np.linalg.inv(hess)
            diag = np.diag(cov)
            model.coef_se = np.sqrt(np.where(diag > 0, diag, np.nan))
        except np.linalg.LinAlgError:
            model.coef_se = np.full(params.size, np.nan)
    return model


def _build_model(y, x_reg, beta, sigma2, loglik, x_opt, p, q, r, converged):
    phi, ma = _params_from_x(x_opt, p, q)
    boundary = bool(np.any(np.abs(_constrain(x_opt)) > _BOUNDARY_PACF)) if p + q else False
    if boundary:
        warnings.warn(
            f"ARMA({p},{q}) estimate sits near the stationarity/invertibility boundary",
            RuntimeWarning,
            stacklevel=3,
        )
    u = y - x_reg @ beta
    t_mat, r_vec = _system_matrices(phi, ma) if p + q else (np.zeros((1, 1)), np.ones(1))
    m = t_mat.shape[0]
    cov = _stationary_cov(t_mat, np.outer(r_vec, r_vec)) if p + q else np.ones((1, 1))
    a = np.zeros(m)
    for tt in range(len(u)):
        s_t = cov[0, 0]
        innov = u[tt] - a[0]
        gain = cov[:, 0] / s_t
        a = a + gain * innov
        cov = cov - np.outer(gain, cov[0, :])
        a = t_mat @ a
        cov = t_mat @ cov @ t_mat.T + np.outer(r_vec, r_vec)
    return ArmaRegModel(
        intercept=float(beta[0]),
        factor_coef=np.asarray(beta[1:], dtype=float),
        ar=phi,
        ma=ma,
        innovation_var=float(sigma2),
        orders=(p, q),
        loglik=float(loglik),
        coef_se=np.full(1 + r + p + q, np.nan),
        converged=converged,
        boundary=boundary,
        n_obs=len(y),
        final_state=a,
        final_state_cov=cov,
    )


def forecast(model, factors_future, history=None, level=0.95):
    """Multi-step forecasts with innovation-propagation variances.

    ``factors_future`` holds the factor rows for the horizons in order.
    Future shocks enter at their zero expectation; parameter uncertainty is
    not folded into the intervals.
    """
    f = np.asarray(factors_future, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if not np.all(np.isfinite(f)):
        raise ValueError("missing factor rows for the forecast horizons")
    p, q = model.orders
    t_mat, r_vec = _system_matrices(model.ar, model.ma) if p + q else (np.zeros((1, 1)), np.ones(1))
    rr = np.outer(r_vec, r_vec)
    if history is not None:
        a, cov = history
        a, cov = np.asarray(a, float).copy(), np.asarray(cov, float).copy()
    else:
        a, cov = model.final_state.copy(), model.final_state_cov.copy()
    # final_state is already the one-step prediction after the last update,
    # so horizon 1 reads it directly and later horizons iterate the VAR once each
    h = f.shape[0]
    points = np.empty(h)
    variances = np.empty(h)
    for i in range(h):
        points[i] = model.intercept + f[i] @ model.factor_coef + a[0]
        variances[i] = cov[0, 0] * model.innovation_var
        a = t_mat @ a
        cov = t_mat @ cov @ t_mat.T + rr
    z = stats.norm.ppf(0.5 + level / 2.0)
    sd = np.sqrt(variances)
    return Forecast(
        points=points,
        variances=variances,
        ci_low=points - z * sd,
        ci_high=points + z * sd,
        level=level,
    )


def fitted_and_residuals(model, y, factors):
    """One-step fitted values and innovations on the estimation sample.

    The two add back to the observed target exactly.
    """
    y = np.asarray(y, dtype=float).ravel()
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    u = y - model.intercept - f @ model.factor_coef
    v, _ = arma_innovations(u, model.ar, model.ma)
    return y - v, v


def ljung_box(residuals, lags, dof_adjust=0):
    """Portmanteau test of residual serial correlation.

    Degrees of freedom are reduced by ``dof_adjust`` (the number of fitted
    ARMA parameters) when requested.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    t_len = e.size
    lags = int(lags)
    if lags < 1:
        raise ValueError("need at least one lag")
    if lags >= t_len / 2:
        raise ValueError("lag count must stay below half the sample")
    df = lags - int(dof_adjust)
    if df < 1:
        raise ValueError("degrees of freedom exhausted by the adjustment")
    ec = e - e.mean()
    denom = float(ec @ ec)
    if denom == 0:
        raise ValueError("residuals are constant")
    stat = 0.0
    for k in range(1, lags + 1):
        rho = float(ec[k:] @ ec[:-k]) / denom
        stat += rho * rho / (t_len - k)
    stat *= t_len * (t_len + 2.0)
    return float(stat), float(stats.chi2.sf(stat, df))
