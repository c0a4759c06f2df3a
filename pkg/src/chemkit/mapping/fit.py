"""Fitting routines: OLS, log-link GLMs by IRLS, transformed OLS, random-intercept LMM by EM."""

from __future__ import annotations

import math
import warnings
from dataclasses import replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar

from ..errors import ModelFitError, RankDeficientError, SpecificationError
from .models import INTERCEPT, FittedModel, ModelFamily, default_terms, forward_transform, inverse_transform


class ConvergenceWarning(UserWarning):
    pass


def _names(X: np.ndarray, names: Sequence[str] | None) -> list[str]:
    if names is not None:
        if len(names) != X.shape[1]:
            raise SpecificationError(f"{len(names)} names for {X.shape[1]} design columns")
        return list(names)
    out = [f"x{j}" for j in range(X.shape[1])]
    if X.shape[1] and np.all(X[:, 0] == 1.0):
        out[0] = INTERCEPT
    return out


def _prepare(y, X) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise SpecificationError(f"y has {y.shape[0]} rows, X has {X.shape[0]}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise SpecificationError("y and X must be finite (drop incomplete rows first)")
    n, p = X.shape
    if n <= p:
        raise SpecificationError(f"need more rows than columns (n={n}, p={p})")
    return y, X


def _qr_checked(X: np.ndarray, names: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR; raises naming the first column that lies in the span of earlier ones."""
    Q, R = np.linalg.qr(X, mode="reduced")
    norms = np.linalg.norm(X, axis=0)
    for j in range(X.shape[1]):
        if norms[j] == 0.0 or abs(R[j, j]) <= 1e-9 * norms[j]:
            raise RankDeficientError(names[j])
    return Q, R


def check_full_rank(X, names: Sequence[str] | None = None) -> None:
    X = np.asarray(X, dtype=float)
    _qr_checked(X, _names(X, names))


def _ols_core(y: np.ndarray, X: np.ndarray, names: list[str]):
    Q, R = _qr_checked(X, names)
    beta = solve_triangular(R, Q.T @ y)
    # polish once against the original system: tightens X'r toward zero
    r = y - X @ beta
    beta = beta + solve_triangular(R, Q.T @ r)
    Rinv = solve_triangular(R, np.eye(R.shape[0]))
    return beta, Rinv


def fit_ols(y, X, names: Sequence[str] | None = None) -> FittedModel:
    """Least squares via QR. ``X`` should already contain the intercept column."""
    y, X = _prepare(y, X)
    names = _names(X, names)
    n, p = X.shape
    beta, Rinv = _ols_core(y, X, names)
    fitted = X @ beta
    rss = float(np.sum((y - fitted) ** 2))
    sigma = math.sqrt(rss / (n - p))
    se = sigma * np.sqrt(np.sum(Rinv**2, axis=1))
    return FittedModel(
        family=ModelFamily("ols"),
        coefficients=dict(zip(names, map(float, beta))),
        coefficient_se=dict(zip(names, map(float, se))),
        transform="identity",
        sigma=sigma,
        n_train=n,
        converged=True,
        iterations=1,
        terms=default_terms(names),
        fitted_values=fitted,
    )


# -- log-link GLMs -----------------------------------------------------------

_GLM_KINDS = {"gaussian": "glm_gaussian_log", "gamma": "glm_gamma_log", "glm_gaussian_log": "glm_gaussian_log", "glm_gamma_log": "glm_gamma_log"}


def _glm_kind(family: str) -> str:
    try:
        return _GLM_KINDS[family]
    except KeyError:
        raise SpecificationError(f"family must be 'gaussian' or 'gamma' (log link), got '{family}'") from None


def glm_loglik(beta, y, X, family: str) -> float:
    """Log-likelihood up to terms free of ``beta`` (unit dispersion).

    gaussian: ``-0.5 * sum((y - mu)^2)``; gamma: ``sum(-y/mu - log(mu))``.
    """
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    mu = np.exp(eta)
    y = np.asarray(y, dtype=float)
    if _glm_kind(family) == "glm_gaussian_log":
        return float(-0.5 * np.sum((y - mu) ** 2))
    return float(np.sum(-y / mu - eta))


def glm_score(beta, y, X, family: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    mu = np.exp(X @ np.asarray(beta, dtype=float))
    y = np.asarray(y, dtype=float)
    if _glm_kind(family) == "glm_gaussian_log":
        return X.T @ ((y - mu) * mu)
    return X.T @ (y / mu - 1.0)


def _deviance(y, mu, kind) -> float:
    if kind == "glm_gaussian_log":
        return float(np.sum((y - mu) ** 2))
    return float(2.0 * np.sum(-np.log(y / mu) + (y - mu) / mu))


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    # relative for large coefficients, absolute for coefficients near zero
    return float(np.max(np.abs(new - old) / np.maximum(np.abs(new), 1.0)))


def fit_glm_irls(y, X, family: str = "gamma", max_iter: int = 200, tol: float = 1e-10, names: Sequence[str] | None = None) -> FittedModel:
    """Log-link GLM (gaussian or gamma) by iteratively reweighted least squares.

    Iterates until the largest relative coefficient change drops below
    ``tol``. Step halving guards against deviance increases. A model that
    runs out of iterations is still returned, with ``converged=False`` and a
    note; a :class:`ConvergenceWarning` is issued too.
    """
    kind = _glm_kind(family)
    y, X = _prepare(y, X)
    nonpos = np.flatnonzero(y <= 0)
    if nonpos.size:
        raise ModelFitError(f"row {nonpos[0] + 1}: response must be positive under log link")
    names = _names(X, names)
    n, p = X.shape
    _qr_checked(X, names)

    beta, _ = _ols_core(np.log(y), X, names)
    dev = _deviance(y, np.exp(X @ beta), kind)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = np.exp(eta)
        w = mu**2 if kind == "glm_gaussian_log" else np.ones(n)
        z = eta + (y - mu) / mu
        sw = np.sqrt(w)
        cand, _ = _ols_core(z * sw, X * sw[:, None], names)
        new_dev = _deviance(y, np.exp(np.clip(X @ cand, -700, 700)), kind)
        step, trial = 1.0, cand
        while not (new_dev <= dev + 1e-12 * abs(dev) + 1e-14) and step > 1e-8:
            step /= 2
            trial = beta + step * (cand - beta)
            new_dev = _deviance(y, np.exp(np.clip(X @ trial, -700, 700)), kind)
        cand = trial
        change = _rel_change(cand, beta)
        beta, dev = cand, new_dev
        if change < tol:
            converged = True
            break

    eta = X @ beta
    mu = np.exp(eta)
    w = mu**2 if kind == "glm_gaussian_log" else np.ones(n)
    if kind == "glm_gaussian_log":
        phi = float(np.sum((y - mu) ** 2) / (n - p))
    else:
        phi = float(np.sum(((y - mu) / mu) ** 2) / (n - p))
    sw = np.sqrt(w)
    _, Rinv = _ols_core(np.zeros(n), X * sw[:, None], names)
    se = np.sqrt(phi) * np.sqrt(np.sum(Rinv**2, axis=1))
    notes: tuple[str, ...] = ()
    if not converged:
        msg = f"IRLS did not converge in {max_iter} iterations (last relative change {change:.3g})"
        notes = (msg,)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return FittedModel(
        family=ModelFamily(kind, max_iter, tol),
        coefficients=dict(zip(names, map(float, beta))),
        coefficient_se=dict(zip(names, map(float, se))),
        transform="log",
        sigma=math.sqrt(phi),
        n_train=n,
        converged=converged,
        iterations=it,
        terms=default_terms(names),
        notes=notes,
        fitted_values=mu,
    )


# -- transformed-scale OLS ---------------------------------------------------

DEFAULT_EPSILON = 0.005


def fit_transformed_ols(y, X, transform: str = "logit", epsilon: float = DEFAULT_EPSILON, names: Sequence[str] | None = None) -> FittedModel:
    """OLS on ``logit(y)`` or ``cloglog(y)`` after clamping y to ``[eps, 1 - eps]``."""
    if transform not in ("logit", "cloglog"):
        raise SpecificationError(f"transform must be 'logit' or 'cloglog', got '{transform}'")
    if not (0 < epsilon <= 0.01):
        raise SpecificationError(f"epsilon must lie in (0, 0.01], got {epsilon}")
    y, X = _prepare(y, X)
    bad = np.flatnonzero((y < 0) | (y > 1))
    if bad.size:
        raise ModelFitError(f"row {bad[0] + 1}: response {y[bad[0]]:g} outside [0, 1]")
    z = forward_transform(np.clip(y, epsilon, 1 - epsilon), transform)
    m = fit_ols(z, X, names)
    kind = "ols_logit_transform" if transform == "logit" else "ols_cloglog_transform"
    return replace(
        m,
        family=ModelFamily(kind),
        transform=transform,
        epsilon=epsilon,
        fitted_values=inverse_transform(X @ m.beta, transform),
    )


# -- random-intercept linear mixed model -------------------------------------


def _clusters(cluster) -> tuple[np.ndarray, int]:
    cluster = np.asarray(cluster)
    if any(c is None or (isinstance(c, float) and math.isnan(c)) for c in cluster.tolist()):
        raise SpecificationError("cluster ids must not be missing")
    _, inv = np.unique(cluster.astype(str) if cluster.dtype == object else cluster, return_inverse=True)
    return inv.ravel(), int(inv.max()) + 1


def lmm_loglik(beta, sb2: float, se2: float, y, X, cluster) -> float:
    """Marginal Gaussian log-likelihood of the random-intercept model."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    idx, g = cluster if isinstance(cluster, tuple) else _clusters(cluster)
    r = y - X @ np.asarray(beta, dtype=float)
    n_c = np.bincount(idx, minlength=g).astype(float)
    s_c = np.bincount(idx, weights=r, minlength=g)
    rr = float(r @ r)
    denom = se2 + n_c * sb2
    logdet = np.sum((n_c - 1) * math.log(se2) + np.log(denom))
    quad = (rr - float(np.sum(sb2 / denom * s_c**2))) / se2
    return float(-0.5 * (len(y) * math.log(2 * math.pi) + logdet + quad))


def lmm_gls_beta(sb2: float, se2: float, y, X, cluster) -> np.ndarray:
    """GLS fixed effects for given variance components."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    idx, g = cluster if isinstance(cluster, tuple) else _clusters(cluster)
    n_c = np.bincount(idx, minlength=g).astype(float)
    gamma = sb2 / (se2 + n_c * sb2)
    Sx = np.zeros((g, X.shape[1]))
    np.add.at(Sx, idx, X)
    Sy = np.bincount(idx, weights=y, minlength=g)
    A = X.T @ X - (Sx * gamma[:, None]).T @ Sx
    b = X.T @ y - Sx.T @ (gamma * Sy)
    return np.linalg.solve(A, b)


def _profile(theta: float, y, X, cl) -> tuple[float, np.ndarray, float]:
    """Log-likelihood maximized over beta and se2 with sb2 = theta * se2 held fixed."""
    beta = lmm_gls_beta(theta, 1.0, y, X, cl)
    idx, g = cl
    r = y - X @ beta
    n_c = np.bincount(idx, minlength=g).astype(float)
    s_c = np.bincount(idx, weights=r, minlength=g)
    se2 = (float(r @ r) - float(np.sum(theta / (1.0 + n_c * theta) * s_c**2))) / len(y)
    return lmm_loglik(beta, theta * se2, se2, y, X, cl), beta, se2


def fit_lmm_random_intercept(y, X, cluster, max_iter: int = 5000, tol: float = 1e-10, names: Sequence[str] | None = None) -> FittedModel:
    """Maximum likelihood (not REML) random-intercept model fitted by EM.

    EM stops once the relative log-likelihood change falls below ``tol``;
    a one-dimensional search on the profiled likelihood then polishes the
    variance ratio. The
    between-cluster variance is floored at zero: if the boundary solution
    (ordinary least squares) has at least the EM likelihood it is returned.
    """
    y, X = _prepare(y, X)
    names = _names(X, names)
    n, p = X.shape
    idx, g = _clusters(cluster)
    if len(idx) != n:
        raise SpecificationError(f"cluster has {len(idx)} ids for {n} rows")
    if g < 2:
        raise ModelFitError("need at least 2 clusters for a random intercept; use fit_ols for a single cluster")
    _qr_checked(X, names)
    cl = (idx, g)
    n_c = np.bincount(idx, minlength=g).astype(float)

    beta, _ = _ols_core(y, X, names)
    r = y - X @ beta
    v = float(r @ r) / n
    sb2, se2 = 0.5 * v, 0.5 * v
    if v == 0.0:
        sb2, se2 = 0.0, 1e-300
    ll = lmm_loglik(beta, sb2, se2, y, X, cl)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step: posterior of each cluster's random intercept
        s_c = np.bincount(idx, weights=y - X @ beta, minlength=g)
        post_var = 1.0 / (1.0 / sb2 + n_c / se2) if sb2 > 0 else np.zeros(g)
        post_mean = post_var * s_c / se2
        # M-step
        beta, _ = _ols_core(y - post_mean[idx], X, names)
        e = y - X @ beta - post_mean[idx]
        sb2 = float(np.mean(post_mean**2 + post_var))
        se2 = float((e @ e + np.sum(n_c * post_var)) / n)
        new_ll = lmm_loglik(beta, sb2, se2, y, X, cl)
        change = abs(new_ll - ll) / max(1.0, abs(ll))
        ll = new_ll
        if change < tol:
            converged = True
            break

    # EM crawls when the between-cluster variance is small; finish with a
    # bounded Brent search on the likelihood profiled over theta = sb2 / se2
    if sb2 > 0 and se2 > 0:
        t_em = math.log(sb2 / se2)
        res = minimize_scalar(
            lambda t: -_profile(math.exp(t), y, X, cl)[0],
            bounds=(t_em - 12.0, t_em + 12.0),
            method="bounded",
            options={"xatol": 1e-10, "maxiter": 500},
        )
        ll_p, beta_p, se2_p = _profile(math.exp(res.x), y, X, cl)
        if ll_p >= ll:
            beta, sb2, se2, ll = beta_p, math.exp(res.x) * se2_p, se2_p, ll_p
            converged = converged or bool(res.success)

    beta_ols, _ = _ols_core(y, X, names)
    r0 = y - X @ beta_ols
    se2_0 = float(r0 @ r0) / n
    ll0 = lmm_loglik(beta_ols, 0.0, se2_0, y, X, cl)
    notes: tuple[str, ...] = ()
    if ll0 >= ll:
        beta, sb2, se2, ll = beta_ols, 0.0, se2_0, ll0
        converged = True
        notes = ("between-cluster variance at the zero boundary",)
    elif not converged:
        msg = f"EM did not converge in {max_iter} iterations"
        notes = (msg,)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)

    gamma = sb2 / (se2 + n_c * sb2)
    Sx = np.zeros((g, p))
    np.add.at(Sx, idx, X)
    info = (X.T @ X - (Sx * gamma[:, None]).T @ Sx) / se2
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    return FittedModel(
        family=ModelFamily("lmm_random_intercept", max_iter, tol),
        coefficients=dict(zip(names, map(float, beta))),
        coefficient_se=dict(zip(names, map(float, se))),
        transform="identity",
        sigma=math.sqrt(se2),
        random_intercept_var=sb2,
        n_train=n,
        converged=converged,
        iterations=it,
        terms=default_terms(names),
        notes=notes,
        fitted_values=X @ beta,
    )


def fit_family(family: ModelFamily, y, X, names: Sequence[str] | None = None, cluster=None, epsilon: float = DEFAULT_EPSILON) -> FittedModel:
    """Dispatch to the fitting routine for ``family.kind``."""
    k = family.kind
    if k == "ols":
        return fit_ols(y, X, names)
    if k in ("glm_gaussian_log", "glm_gamma_log"):
        return fit_glm_irls(y, X, k, family.max_iter, family.tol, names)
    if k == "ols_logit_transform":
        return fit_transformed_ols(y, X, "logit", epsilon, names)
    if k == "ols_cloglog_transform":
        return fit_transformed_ols(y, X, "cloglog", epsilon, names)
    if cluster is None:
        raise SpecificationError("lmm_random_intercept needs cluster ids")
    return fit_lmm_random_intercept(y, X, cluster, family.max_iter, family.tol, names)
