"""Two-step factor extraction with ragged-edge handling.

Step one estimates loadings and static factors by principal components on
the balanced part of the panel, with heteroskedasticity-robust asymptotic
confidence bands. Step two fits a VAR to the static factors, casts the
model in state-space form and runs a fixed-interval Kalman smoother in
which unavailable observations carry an effectively infinite measurement
variance, so the smoothed factor extends through months that only some
series have reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .transform import TransformedPanel

_MAX_EDGE_ITER = 50


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalue spectrum and the estimated number of factors."""

    eigenvalues: np.ndarray
    r_hat: int
    delta: float
    converged: bool = True


@dataclass(frozen=True)
class FactorModel:
    """Everything the two-step procedure estimates.

    ``static_factors`` has NaN rows wherever the panel row is incomplete;
    ``smoothed_factors`` covers every period, ragged edge included.
    ``var_coefficients`` is the VAR(1) companion of the fitted VAR(k), so
    it is r x r for the default k = 1.
    """

    loadings: np.ndarray
    static_factors: np.ndarray
    smoothed_factors: np.ndarray
    var_coefficients: np.ndarray
    eta_cov: np.ndarray
    idio_variances: np.ndarray
    factor_uncond_cov: np.ndarray
    loading_ci: np.ndarray
    factor_ci: np.ndarray
    smoothed_loadings: np.ndarray
    smoothed_factor_var: np.ndarray
    balanced_rows: np.ndarray
    r: int
    var_order: int
    eigen: EigenReport | None = None


def _as_matrix_mask(x, mask=None):
    if isinstance(x, TransformedPanel):
        return x.panel.values, x.panel.mask
    values = np.asarray(x, dtype=float)
    if mask is None:
        mask = np.isfinite(values)
    return values, np.asarray(mask, dtype=bool)


def estimate_num_factors(x, r_max=10):
    """Count factors by the edge-distribution threshold on eigenvalue gaps.

    Eigenvalues of the sample covariance are sorted descending; the
    threshold is twice the absolute OLS slope of five post-factor
    eigenvalues on {(j-1)^(2/3), ..., (j+3)^(2/3)}, re-anchored at the
    current estimate until the count stops moving. Scale-invariant by
    construction: rescaling the data rescales gaps and threshold alike.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("factor counting needs a complete (balanced) matrix")
    t, n = x.shape
    if r_max + 5 > n:
        raise ValueError(f"r_max {r_max} too large: need r_max + 5 <= {n} series")
    cov = x.T @ x / t
    eigenvalues = np.linalg.eigvalsh(cov)[::-1]
    eigenvalues = np.maximum(eigenvalues, 0.0)

    def _count(j):
        idx = np.arange(j, j + 5)
        lam = eigenvalues[idx - 1]
        reg = (idx - 1).astype(float) ** (2.0 / 3.0)
        slope = np.polyfit(reg, lam, 1)[0]
        delta = 2.0 * abs(slope)
        gaps = eigenvalues[:r_max] - eigenvalues[1 : r_max + 1]
        hits = np.flatnonzero(gaps >= delta)
        return (0 if hits.size == 0 else int(hits[-1] + 1)), delta

    j = r_max + 1
    r_hat, delta = _count(j)
    converged = False
    for _ in range(_MAX_EDGE_ITER):
        if r_hat + 1 == j:
            converged = True
            break
        j = r_hat + 1
        r_hat, delta = _count(j)
    return EigenReport(eigenvalues=eigenvalues, r_hat=r_hat, delta=float(delta), converged=converged)


def _orient_signs(loadings, factors=None):
    # deterministic orientation: the largest-|loading| entry of each column is positive
    p = loadings.copy()
    f = None if factors is None else factors.copy()
    for j in range(p.shape[1]):
        anchor = int(np.argmax(np.abs(p[:, j])))
        if p[anchor, j] < 0:
            p[:, j] = -p[:, j]
            if f is not None:
                f[:, j] = -f[:, j]
    return p if f is None else (p, f)


def pc_extract(x, r, mask=None):
    """Principal-component loadings, static factors and residuals.

    The eigenproblem runs on the balanced rows (no missing cell); loadings
    are sqrt(N) times the leading eigenvectors of X'X so that P'P/N = I_r,
    and factors are F = X P / N, defined only on balanced rows.
    """
    values, mask = _as_matrix_mask(x, mask)
    t, n = values.shape
    if r < 1:
        raise ValueError("need at least one factor")
    balanced = mask.all(axis=1)
    xb = values[balanced]
    if xb.shape[0] < r + 2:
        raise ValueError("balanced window too short for the requested factor count")
    gram = xb.T @ xb
    eigval, eigvec = np.linalg.eigh(gram)
    order = np.argsort(eigval)[::-1]
    if r > np.sum(eigval[order] > 1e-12 * max(eigval[order][0], 1.0)):
        raise ValueError(f"rank of the balanced window is below r = {r}")
    loadings = np.sqrt(n) * eigvec[:, order[:r]]
    factors = np.full((t, r), np.nan)
    factors[balanced] = xb @ loadings / n
    loadings, factors_b = _orient_signs(loadings, factors[balanced])
    factors[balanced] = factors_b
    residuals = np.where(mask, values - factors @ loadings.T, np.nan)
    return loadings, factors, residuals


def bai_confidence_intervals(loadings, factors, residuals, level=0.95):
    """Heteroskedasticity-robust asymptotic bands for loadings and factors.

    Loading rows use the factor outer-product sandwich over observed
    periods; factor dates use the loading outer-product sandwich over
    observed series. Unavailable cells are skipped with count
    normalization.
    """
    p = np.asarray(loadings, float)
    f = np.asarray(factors, float)
    e = np.asarray(residuals, float)
    n, r = p.shape
    t = f.shape[0]
    z = stats.norm.ppf(0.5 + level / 2.0)
    frow = np.isfinite(f).all(axis=1)

    loading_ci = np.empty((n, r, 2))
    for i in range(n):
        ok = frow & np.isfinite(e[:, i])
        t_i = int(ok.sum())
        if t_i < r + 1:
            raise ValueError(f"series {i} has fewer than r + 1 observed residuals")
        ff_inv = np.linalg.inv(f[ok].T @ f[ok] / t_i)
        mid = (f[ok].T * e[ok, i] ** 2) @ f[ok] / t_i
        avar = ff_inv @ mid @ ff_inv / t_i
        half = z * np.sqrt(np.diag(avar))
        loading_ci[i, :, 0] = p[i] - half
        loading_ci[i, :, 1] = p[i] + half

    factor_ci = np.full((t, r, 2), np.nan)
    pp_inv = np.linalg.inv(p.T @ p / n)
    for tt in range(t):
        if not frow[tt]:
            continue
        ok = np.isfinite(e[tt])
        n_t = int(ok.sum())
        if n_t < r + 1:
            raise ValueError(f"period {tt} has fewer than r + 1 observed residuals")
        mid = (p[ok].T * e[tt, ok] ** 2) @ p[ok] / n_t
        avar = pp_inv @ mid @ pp_inv / n_t
        half = z * np.sqrt(np.diag(avar))
        factor_ci[tt, :, 0] = f[tt] - half
        factor_ci[tt, :, 1] = f[tt] + half
    return loading_ci, factor_ci


def _companion(coefs, r, k):
    phi = np.zeros((r * k, r * k))
    phi[:r, :] = np.hstack(coefs)
    if k > 1:
        phi[r:, : r * (k - 1)] = np.eye(r * (k - 1))
    return phi


def stationary_state_cov(companion, innovation_cov):
    """Unconditional state covariance S solving S = Phi S Phi' + Q.

    ``innovation_cov`` may be the r x r innovation block; it is embedded in
    the top-left corner of the companion-sized Q.
    """
    phi = np.atleast_2d(np.asarray(companion, float))
    q_small = np.atleast_2d(np.asarray(innovation_cov, float))
    d = phi.shape[0]
    q = np.zeros((d, d))
    q[: q_small.shape[0], : q_small.shape[1]] = q_small
    vec = np.linalg.solve(np.eye(d * d) - np.kron(phi, phi), q.flatten(order="F"))
    out = vec.reshape((d, d), order="F")
    return 0.5 * (out + out.T)


def fit_var(factors, k=1):
    """OLS VAR(k) on the factors, stacked to its VAR(1) companion.

    Returns (companion, innovation covariance, unconditional covariance of
    the stacked state) where the last solves the discrete Lyapunov identity
    vec(S) = (I - Phi (x) Phi)^{-1} vec(Q).
    """
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    t, r = f.shape
    if t <= r * k + 1:
        raise ValueError("factor sample too short for the VAR order")
    frow = np.isfinite(f).all(axis=1)
    usable = np.array([frow[i - k : i + 1].all() for i in range(k, t)])
    rows = np.flatnonzero(usable) + k
    if rows.size <= r * k + 1:
        raise ValueError("too few complete lag windows for the VAR order")
    yy = f[rows]
    zz = np.hstack([f[rows - lag] for lag in range(1, k + 1)])
    coef, *_ = np.linalg.lstsq(zz, yy, rcond=None)
    coef = coef.T  # r x rk
    resid = yy - zz @ coef.T
    eta_cov = resid.T @ resid / rows.size

    companion = _companion([coef[:, i * r : (i + 1) * r] for i in range(k)], r, k)
    rho = np.max(np.abs(np.linalg.eigvals(companion)))
    if rho >= 1.0:
        raise ValueError(f"explosive factor VAR: spectral radius {rho:.4f} >= 1")
    return companion, eta_cov, stationary_state_cov(companion, eta_cov)


def kalman_smooth(
    x,
    loadings,
    idio_variances,
    var_coefficients,
    eta_cov,
    factor_uncond_cov,
    mask=None,
    with_variance=False,
):
    """Fixed-interval smoother of the factors under the estimated system.

    Unavailable cells get the diffuse-measurement-variance treatment in its
    exact limit: their rows are simply dropped from the update, which is
    the same algebra as a 1e32 variance without the overflow. Periods with
    no observations at all fall back to the VAR prediction, so the smoothed
    factor is defined for every row.
    """
    values, mask = _as_matrix_mask(x, mask)
    t, n = values.shape
    p = np.asarray(loadings, float)
    r = p.shape[1]
    phi = np.atleast_2d(np.asarray(var_coefficients, float))
    d = phi.shape[0]
    k = d // r
    psi = np.asarray(idio_variances, float)
    q = np.zeros((d, d))
    q[:r, :r] = np.asarray(eta_cov, float)
    z = np.zeros((n, d))
    z[:, :r] = p
    p0 = np.asarray(factor_uncond_cov, float)
    if p0.shape != (d, d):
        full = np.zeros((d, d))
        full[: p0.shape[0], : p0.shape[1]] = p0
        p0 = full

    a_pred = np.zeros((t, d))
    p_pred = np.zeros((t, d, d))
    a_filt = np.zeros((t, d))
    p_filt = np.zeros((t, d, d))

    a, pp = np.zeros(d), p0
    for tt in range(t):
        a_pred[tt], p_pred[tt] = a, pp
        obs = mask[tt]
        if obs.any():
            zt = z[obs]
            s = zt @ pp @ zt.T + np.diag(psi[obs])
            gain = np.linalg.solve(s, zt @ pp).T
            innov = values[tt, obs] - zt @ a
            a = a + gain @ innov
            pp = pp - gain @ zt @ pp
            pp = 0.5 * (pp + pp.T)
        a_filt[tt], p_filt[tt] = a, pp
        a = phi @ a
        pp = phi @ pp @ phi.T + q

    a_sm = np.zeros((t, d))
    p_sm = np.zeros((t, d, d))
    a_sm[-1], p_sm[-1] = a_filt[-1], p_filt[-1]
    for tt in range(t - 2, -1, -1):
        try:
            j = np.linalg.solve(p_pred[tt + 1].T, (p_filt[tt] @ phi.T).T).T
        except np.linalg.LinAlgError:
            # higher-order companions can make the prediction variance singular
            j = p_filt[tt] @ phi.T @ np.linalg.pinv(p_pred[tt + 1])
        a_sm[tt] = a_filt[tt] + j @ (a_sm[tt + 1] - a_pred[tt + 1])
        p_sm[tt] = p_filt[tt] + j @ (p_sm[tt + 1] - p_pred[tt + 1]) @ j.T

    smoothed = a_sm[:, :r]
    if with_variance:
        return smoothed, np.stack([np.diag(p_sm[tt])[:r] for tt in range(t)])
    return smoothed


def smoothed_loadings_mc(smoothed_factors, x, loading_ci, n_draws=1000, seed=0, mask=None):
    """Re-estimate loadings consistent with the smoothed factor.

    Draws candidate loadings uniformly inside the per-entry confidence
    bounds and keeps the draw whose implied projection X P / N is closest
    (Frobenius norm on balanced rows) to the smoothed factor. Draw d uses
    its own counter-based seed, so the first n draws of a longer run are
    the same draws and results do not depend on execution order.
    """
    values, mask = _as_matrix_mask(x, mask)
    f = np.asarray(smoothed_factors, float)
    ci = np.asarray(loading_ci, float)
    n, r = ci.shape[:2]
    if n_draws < 1:
        raise ValueError("need at least one draw")
    balanced = mask.all(axis=1)
    xb, fb = values[balanced], f[balanced]
    lo, hi = ci[:, :, 0], ci[:, :, 1]

    best, best_obj = None, np.inf
    for d in range(n_draws):
        rng = np.random.default_rng((int(seed), d))
        cand = lo + rng.random((n, r)) * (hi - lo)
        obj = float(np.linalg.norm(fb - xb @ cand / n))
        if obj < best_obj:
            best, best_obj = cand, obj
    return best


def two_step(
    x,
    r="auto",
    k=1,
    r_max=10,
    level=0.95,
    n_draws=1000,
    seed=0,
    mask=None,
):
    """Full two-step estimation: PCs, VAR, smoother, bands, MC loadings.

    Parameters
    ----------
    x : TransformedPanel or array_like
        Standardized T x N observations. Arrays may carry NaN for
        unavailable cells when no explicit ``mask`` is given.
    r : int or "auto"
        Number of common factors; "auto" runs the eigenvalue-gap count on
        the balanced rows (floored at one factor).
    k : int
        VAR order for the factor dynamics.
    r_max : int
        Cap for the automatic factor count.
    level : float
        Confidence level of the loading and factor bands.
    n_draws, seed : int
        Monte Carlo budget and seed for the smoothed-loading search.
    mask : ndarray of bool, optional
        Availability flags when ``x`` is a plain array.

    Returns
    -------
    FactorModel
        Loadings, static and smoothed factor paths, VAR companion and
        covariances, confidence bands, smoothed loadings, and the
        eigenvalue report that fixed the factor count.
    """
    values, mask = _as_matrix_mask(x, mask)
    balanced = mask.all(axis=1)
    eigen = None
    if r == "auto":
        eigen = estimate_num_factors(values[balanced], r_max=r_max)
        r = max(eigen.r_hat, 1)
    r = int(r)

    loadings, static_f, residuals = pc_extract(values, r, mask)
    if eigen is None:
        t_b = int(balanced.sum())
        eigvals = np.linalg.eigvalsh(values[balanced].T @ values[balanced] / t_b)[::-1]
        eigen = EigenReport(eigenvalues=np.maximum(eigvals, 0.0), r_hat=r, delta=np.nan)

    idio = np.array(
        [np.var(residuals[:, i][np.isfinite(residuals[:, i])]) for i in range(values.shape[1])]
    )
    idio = np.maximum(idio, 1e-12)
    companion, eta_cov, uncond = fit_var(static_f, k=k)
    smoothed, smoothed_var = kalman_smooth(
        values, loadings, idio, companion, eta_cov, uncond, mask=mask, with_variance=True
    )
    loading_ci, factor_ci = bai_confidence_intervals(loadings, static_f, residuals, level=level)
    smoothed_p = smoothed_loadings_mc(smoothed, values, loading_ci, n_draws=n_draws, seed=seed, mask=mask)
    return FactorModel(
        loadings=loadings,
        static_factors=static_f,
        smoothed_factors=smoothed,
        var_coefficients=companion,
        eta_cov=eta_cov,
        idio_variances=idio,
        factor_uncond_cov=uncond,
        loading_ci=loading_ci,
        factor_ci=factor_ci,
        smoothed_loadings=smoothed_p,
        smoothed_factor_var=smoothed_var,
        balanced_rows=balanced,
        r=r,
        var_order=k,
        eigen=eigen,
    )


def factor_report(model, dates=None):
    """Plot-ready factor artifacts: spectrum, loadings with bands, paths."""
    t, r = model.smoothed_factors.shape
    rows = []
    for tt in range(t):
        row = {"date": str(dates[tt]) if dates is not None else tt}
        for j in range(r):
            sf = model.static_factors[tt, j]
            row[f"static_{j}"] = None if not np.isfinite(sf) else float(sf)
            row[f"static_lo_{j}"] = (
                None if not np.isfinite(model.factor_ci[tt, j, 0]) else float(model.factor_ci[tt, j, 0])
            )
            row[f"static_hi_{j}"] = (
                None if not np.isfinite(model.factor_ci[tt, j, 1]) else float(model.factor_ci[tt, j, 1])
            )
            row[f"smoothed_{j}"] = float(model.smoothed_factors[tt, j])
            row[f"smoothed_var_{j}"] = float(model.smoothed_factor_var[tt, j])
        rows.append(row)
    return {
        "r_hat": int(model.r),
        "var_order": int(model.var_order),
        "delta": None if model.eigen is None or not np.isfinite(model.eigen.delta) else float(model.eigen.delta),
        "eigenvalues": [float(v) for v in (model.eigen.eigenvalues if model.eigen is not None else [])],
        "loadings": [
            {
                "index": i,
                "estimate": [float(v) for v in model.loadings[i]],
                "ci_low": [float(v) for v in model.loading_ci[i, :, 0]],
                "ci_high": [float(v) for v in model.loading_ci[i, :, 1]],
                "smoothed": [float(v) for v in model.smoothed_loadings[i]],
            }
            for i in range(model.loadings.shape[0])
        ],
        "factors": rows,
    }
