"""Unpenalized Tweedie GLM with log link, fitted by IRLS."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import FeatureMatrix
from .errors import ConvergenceError, DomainError, SingularDesignError
from .tweedie import clamp_eta, deviance, pearson_dispersion, unit_deviance

log = logging.getLogger(__name__)

TOL = 1e-8
MAX_ITER = 100


@dataclass(frozen=True)
class FittedGlm:
    coefficients: np.ndarray
    columns: list
    p: float
    phi: float
    deviance: float
    n_iter: int
    converged: bool
    hat: np.ndarray
    fitted: np.ndarray
    trace: tuple
    gradient_norm: float
    cov_unscaled: np.ndarray = field(repr=False)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(self.phi * np.diag(self.cov_unscaled))

    def coefficient_table(self) -> list[tuple]:
        names = ["(intercept)"] + list(self.columns)
        return list(zip(names, self.coefficients, self.standard_errors()))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("term,estimate,std_error\n")
            for name, b, se in self.coefficient_table():
                fh.write(f"{name},{b:.12g},{se:.12g}\n")


def _check_rank(X, columns):
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps * 1e3 if diag.size else 0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        names = ["(intercept)"] + list(columns)
        dependent = [names[j] for j in piv[rank:]]
        raise SingularDesignError(
            f"design is rank deficient; dependent columns: {dependent}", dependent)


def _gradient(X, y, mu, p):
    # d deviance / d beta under log link
    return -2 * X.T @ ((y - mu) * mu ** (1 - p))


def fit_glm(design: FeatureMatrix, p: float, max_iter: int = MAX_ITER,
            tol: float = TOL, strict: bool = True) -> FittedGlm:
    """IRLS with step halving; raises on rank deficiency or non-convergence.

    With ``strict=False`` a fit that is still creeping downhill after
    ``max_iter`` iterations (typically quasi-separation, where some fitted
    means head to zero) is returned with ``converged=False`` and a warning
    instead of an error.
    """
    X = design.design
    y = design.y
    n, k = X.shape
    if n <= k:
        raise DomainError(f"need more rows ({n}) than coefficients ({k})")
    if np.any(y < 0) or not np.any(y > 0):
        raise DomainError("responses must be nonnegative with at least one positive")
    _check_rank(X, design.columns)

    beta = np.zeros(k)
    beta[0] = np.log(y.mean())
    eta = X @ beta
    mu = np.exp(eta)
    dev = deviance(y, mu, p)
    trace = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = mu ** (2 - p)
        z = eta + (y - mu) / mu
        sw = np.sqrt(w)
        step, *_ = linalg.lstsq(X * sw[:, None], z * sw, check_finite=False)
        delta = step - beta
        for _ in range(30):
            cand = beta + delta
            eta_c = clamp_eta(X @ cand)
            mu_c = np.exp(eta_c)
            dev_c = deviance(y, mu_c, p)
            if np.isfinite(dev_c) and dev_c <= dev * (1 + 1e-12):
                break
            delta /= 2
        else:
            log.debug("step halving exhausted at iteration %d", it)
            cand, eta_c, mu_c, dev_c = beta, eta, mu, dev
        change = abs(dev - dev_c) / (abs(dev_c) + 0.1)
        beta, eta, mu = cand, eta_c, mu_c
        dev = min(dev_c, dev)
        trace.append(dev)
        if change < tol:
            converged = True
            break
    if not converged:
        if strict or not np.isfinite(dev):
            raise ConvergenceError(
                f"IRLS did not converge in {max_iter} iterations", trace=trace)
        warnings.warn(f"IRLS stopped at {max_iter} iterations without converging",
                      stacklevel=2)

    w = mu ** (2 - p)
    xtwx = X.T @ (X * w[:, None])
    cov = linalg.pinvh(xtwx)
    hat = w * np.einsum("ij,jk,ik->i", X, cov, X)
    phi = pearson_dispersion(y, mu, p, k)
    grad = _gradient(X, y, mu, p)
    return FittedGlm(
        coefficients=beta, columns=list(design.columns), p=p, phi=phi,
        deviance=dev, n_iter=it, converged=converged, hat=hat, fitted=mu,
        trace=tuple(trace), gradient_norm=float(np.max(np.abs(grad))),
        cov_unscaled=cov)


def predict_glm(fit: FittedGlm, rows: FeatureMatrix) -> np.ndarray:
    rows.check_compatible(fit.columns)
    return np.exp(clamp_eta(rows.design @ fit.coefficients))


@dataclass(frozen=True)
class OutlierReport:
    removed: np.ndarray
    statistics: np.ndarray
    threshold: float
    capped: bool
    n_exceeding: int


def cooks_distance(design: FeatureMatrix, fit: FittedGlm) -> np.ndarray:
    """D_i = r_i^2 h_i / (k (1 - h_i)^2) with r_i the dispersion-scaled Pearson residual."""
    mu = fit.fitted
    h = np.clip(fit.hat, 0.0, 1 - 1e-12)
    r = (design.y - mu) / np.sqrt(fit.phi * mu ** fit.p)
    k = design.k + 1
    return r ** 2 * h / (k * (1 - h) ** 2)


def remove_outliers(design: FeatureMatrix, fit: FittedGlm, threshold=None,
                    cap: float = 0.05):
    """Drop influential rows (Cook's distance above ``threshold``, default 4/n).

    At most ``cap`` of the rows are removed; when more exceed the
    threshold only the largest distances go and the report is flagged.
    """
    n = design.n
    stat = cooks_distance(design, fit)
    threshold = 4.0 / n if threshold is None else float(threshold)
    over = np.flatnonzero(stat > threshold)
    limit = int(np.floor(cap * n))
    capped = len(over) > limit
    if capped:
        order = np.argsort(-stat[over], kind="stable")
        over = np.sort(over[order[:limit]])
    keep = np.setdiff1d(np.arange(n), over)
    report = OutlierReport(removed=over, statistics=stat[over], threshold=threshold,
                           capped=capped, n_exceeding=int(np.sum(stat > threshold)))
    return design.take(keep), report


def null_deviance(y, p) -> float:
    y = np.asarray(y, float)
    return float(np.sum(unit_deviance(y, np.full_like(y, y.mean()), p)))
