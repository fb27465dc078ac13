"""Grouped LASSO / grouped elastic net for the Tweedie deviance.

Objective, for a fixed power ``p``::

    (1/n) sum_i d(y_i, mu_i) / 2
        + lam * sum_g [ alpha * w_g * ||b_g||_2 + (1 - alpha) / 2 * ||b_g||_2^2 ]

with ``log mu = b0 + X b``, ``w_g = sqrt(|g|)`` and the intercept left
unpenalized. The solver is an IRLS outer loop around blockwise
majorization descent on the penalized weighted least-squares problem.
Internally the response is divided by its mean, which rescales the
objective by ``mean(y)^(2-p)`` and leaves the minimiser unchanged apart
from an intercept shift; all reported quantities are in original units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import FeatureMatrix
from .errors import ConvergenceError, DomainError
from .tweedie import clamp_eta, unit_deviance

log = logging.getLogger(__name__)

N_LAMBDA = 100
LAMBDA_RATIO = 1e-4
KKT_TOL = 1e-6
CV_PATIENCE = 10
EN_ALPHAS = tuple(np.round(np.arange(0.1, 0.91, 0.1), 1))


@dataclass(frozen=True)
class PenaltySpec:
    alpha: float = 1.0
    lambda_grid: tuple | None = None
    n_lambda: int = N_LAMBDA
    lambda_ratio: float = LAMBDA_RATIO

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, float)
            if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise DomainError("lambda grid must be positive and strictly decreasing")


def group_weights(design: FeatureMatrix) -> np.ndarray:
    return np.sqrt(np.bincount(design.groups, minlength=design.n_groups)).astype(float)


def _null_gradient(design: FeatureMatrix, p: float) -> np.ndarray:
    y = design.y
    mu = y.mean()
    return -(design.X.T @ (y * mu ** (1 - p) - mu ** (2 - p))) / design.n


def lambda_max(design: FeatureMatrix, p: float, alpha: float = 1.0) -> float:
    """Smallest lambda at which every penalized group is zero."""
    grad = _null_gradient(design, p)
    norms = np.sqrt(np.bincount(design.groups, weights=grad ** 2,
                                minlength=design.n_groups))
    return float(np.max(norms / (alpha * group_weights(design))))


def lambda_grid(lam_max: float, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO):
    return lam_max * np.logspace(0, np.log10(ratio), n)


@numba.njit(cache=True)
def _objective(X, y, p, beta, cols, ncols, g_start, g_end, wts, lam, alpha, mu):
    """Scaled penalized objective; fills ``mu`` for the given coefficients."""
    n = X.shape[0]
    for i in range(n):
        mu[i] = 0.0
    for c in range(ncols):
        j = cols[c]
        b = beta[j]
        if b != 0.0:
            for i in range(n):
                mu[i] += X[i, j] * b
    loss = 0.0
    for i in range(n):
        e = min(max(mu[i], -30.0), 30.0)
        m = np.exp(e)
        mu[i] = m
        loss += -y[i] * m ** (1 - p) / (1 - p) + m ** (2 - p) / (2 - p)
    pen = 0.0
    for g in range(1, g_start.shape[0]):
        sq = 0.0
        for j in range(g_start[g], g_end[g]):
            sq += beta[j] * beta[j]
        if sq > 0.0:
            pen += alpha * wts[g] * np.sqrt(sq) + (1 - alpha) / 2 * sq
    return loss / n + lam * pen


@numba.njit(cache=True)
def _gradient(X, y, p, mu, gsel, g_start, g_end, grad):
    """grad_j = -(1/n) sum_i x_ij (y_i mu_i^(1-p) - mu_i^(2-p)) for groups in gsel."""
    n = X.shape[0]
    r = np.empty(n)
    for i in range(n):
        r[i] = y[i] * mu[i] ** (1 - p) - mu[i] ** (2 - p)
    for g in gsel:
        for j in range(g_start[g], g_end[g]):
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * r[i]
            grad[j] = -acc / n


@numba.njit(cache=True)
def _group_violation(beta, grad, s, e, lam, alpha, w):
    nb = 0.0
    ng = 0.0
    for j in range(s, e):
        nb += beta[j] * beta[j]
        ng += grad[j] * grad[j]
    if nb == 0.0:
        return max(0.0, np.sqrt(ng) - alpha * lam * w)
    nb = np.sqrt(nb)
    v = 0.0
    for j in range(s, e):
        t = grad[j] + lam * (1 - alpha) * beta[j] + alpha * lam * w * beta[j] / nb
        v += t * t
    return np.sqrt(v)


@numba.njit(cache=True)
def _polish(Q, gq, base, delta, work, active, pos, g_start, g_end, wts, lam, alpha,
            ftol):
    """Newton solve of the quadratic model on the current active groups.

    Succeeds when stationarity holds to ``ftol`` without any active group
    collapsing and every inactive group satisfies its zero condition;
    otherwise ``delta``/``gq`` are restored and False is returned.
    """
    idx = np.empty(Q.shape[0], dtype=np.int64)
    gid = np.empty(Q.shape[0], dtype=np.int64)
    m = 0
    for wi in range(work.shape[0]):
        if active[wi]:
            g = work[wi]
            s = pos[g_start[g]]
            for a in range(s, s + g_end[g] - g_start[g]):
                idx[m] = a
                gid[m] = g
                m += 1
    if m == 0:
        return False
    saved_delta = delta.copy()
    saved_gq = gq.copy()
    b = np.empty(m)
    F = np.empty(m)
    J = np.empty((m, m))
    ok = False
    for it in range(30):
        for u in range(m):
            b[u] = base[idx[u]] + delta[idx[u]]
        worst = 0.0
        u = 0
        while u < m:
            g = gid[u]
            v = u
            nb = 0.0
            while v < m and gid[v] == g:
                nb += b[v] * b[v]
                v += 1
            nb = np.sqrt(nb)
            if g != 0 and nb == 0.0:
                break
            for a in range(u, v):
                for c in range(m):
                    J[a, c] = Q[idx[a], idx[c]]
                F[a] = gq[idx[a]]
                if g != 0:
                    l1 = alpha * lam * wts[g]
                    l2 = (1 - alpha) * lam
                    F[a] += l2 * b[a] + l1 * b[a] / nb
                    J[a, a] += l2 + l1 / nb
                    for c in range(u, v):
                        J[a, c] -= l1 * b[a] * b[c] / nb ** 3
                worst = max(worst, abs(F[a]))
            u = v
        if u < m:
            break
        if worst <= ftol:
            ok = True
            break
        step = np.linalg.solve(J, -F)
        for u in range(m):
            a = idx[u]
            before = base[a] + delta[a]
            delta[a] += step[u]
            if gid[u] != 0 and g_end[gid[u]] - g_start[gid[u]] == 1 and \
                    before * (base[a] + delta[a]) <= 0.0:
                ok = False
                it = 99
            for c in range(Q.shape[0]):
                gq[c] += Q[c, a] * step[u]
        if it == 99:
            break
    if ok:
        for wi in range(work.shape[0]):
            g = work[wi]
            if active[wi] or g == 0:
                continue
            s = pos[g_start[g]]
            ng = 0.0
            for a in range(s, s + g_end[g] - g_start[g]):
                ng += gq[a] * gq[a]
            if np.sqrt(ng) > alpha * lam * wts[g]:
                ok = False
                break
    if not ok:
        delta[:] = saved_delta
        gq[:] = saved_gq
    return ok


@numba.njit(cache=True)
def _solve_working_set(X, y, p, beta, work, g_start, g_end, wts, lam, alpha,
                       tol, max_outer, max_cycles):
    """Newton outer loop + Gram-space block descent restricted to ``work`` groups.

    Returns (status, outer iterations). Status 0 = converged, 1 = inner
    descent failed, 2 = outer loop exhausted.
    """
    n = X.shape[0]
    cols = np.empty(X.shape[1], dtype=np.int64)
    ncols = 0
    for g in work:
        for j in range(g_start[g], g_end[g]):
            cols[ncols] = j
            ncols += 1
    pos = np.full(X.shape[1], -1, dtype=np.int64)
    for c in range(ncols):
        pos[cols[c]] = c
    mu = np.empty(n)
    cand_mu = np.empty(n)
    obj = _objective(X, y, p, beta, cols, ncols, g_start, g_end, wts, lam, alpha, mu)
    h = np.empty(n)
    r = np.empty(n)
    Q = np.empty((ncols, ncols))
    gq = np.empty(ncols)
    delta = np.empty(ncols)
    grad = np.zeros(X.shape[1])
    cand = beta.copy()
    base = np.empty(ncols)
    inner_tol = tol * tol
    for outer in range(max_outer):
        for i in range(n):
            m = mu[i]
            h[i] = (2 - p) * m ** (2 - p) + (p - 1) * y[i] * m ** (1 - p)
            r[i] = y[i] * m ** (1 - p) - m ** (2 - p)
        sub = np.empty((n, ncols))
        for c in range(ncols):
            j = cols[c]
            for i in range(n):
                sub[i, c] = X[i, j]
        hs = sub * np.sqrt(h).reshape(n, 1)
        Q[:, :] = np.dot(hs.T, hs) / n
        gq[:] = -np.dot(r, sub) / n
        for c in range(ncols):
            delta[c] = 0.0
        # block descent on the quadratic model in delta
        full = True
        active = np.zeros(work.shape[0], dtype=np.bool_)
        for wi in range(work.shape[0]):
            g = work[wi]
            for j in range(g_start[g], g_end[g]):
                if beta[j] != 0.0:
                    active[wi] = True
            if g == 0:
                active[wi] = True
        converged = False
        polish_tol = 1e-4
        for c in range(ncols):
            base[c] = beta[cols[c]]
        for cycle in range(max_cycles):
            change = 0.0
            for wi in range(work.shape[0]):
                if not (full or active[wi]):
                    continue
                g = work[wi]
                s = pos[g_start[g]]
                e = s + g_end[g] - g_start[g]
                gamma = 0.0
                for a in range(s, e):
                    rowsum = 0.0
                    for b in range(s, e):
                        rowsum += abs(Q[a, b])
                    gamma = max(gamma, rowsum)
                if gamma <= 0.0:
                    continue
                if g == 0:
                    l1 = 0.0
                    l2 = 0.0
                else:
                    l1 = alpha * lam * wts[g]
                    l2 = (1 - alpha) * lam
                norm2 = 0.0
                for a in range(s, e):
                    u = gamma * (beta[cols[a]] + delta[a]) - gq[a]
                    norm2 += u * u
                norm = np.sqrt(norm2)
                # relative slack so a group sitting exactly on the boundary
                # (lambda = lambda_max) stays at zero despite rounding
                if norm <= l1 * (1.0 + 1e-12):
                    shrink = 0.0
                else:
                    shrink = (1.0 - l1 / norm) / (gamma + l2)
                moved = 0.0
                for a in range(s, e):
                    u = gamma * (beta[cols[a]] + delta[a]) - gq[a]
                    d = u * shrink - (beta[cols[a]] + delta[a])
                    if d != 0.0:
                        delta[a] += d
                        for b in range(ncols):
                            gq[b] += Q[b, a] * d
                        moved += d * d
                active[wi] = shrink > 0.0 or g == 0
                if gamma * moved > change:
                    change = gamma * moved
            if full and change < polish_tol:
                if _polish(Q, gq, base, delta, work, active, pos, g_start, g_end,
                           wts, lam, alpha, tol * 1e-3):
                    converged = True
                    break
                polish_tol *= 1e-2
            if change < inner_tol:
                if full:
                    converged = True
                    break
                full = True
            else:
                full = False
        if not converged:
            return 1, outer + 1
        # backtracking on the true objective
        step = 1.0
        accepted = False
        for _ in range(50):
            for c in range(ncols):
                cand[cols[c]] = beta[cols[c]] + step * delta[c]
            cobj = _objective(X, y, p, cand, cols, ncols, g_start, g_end, wts,
                              lam, alpha, cand_mu)
            if cobj <= obj + 1e-14 * abs(obj):
                accepted = True
                break
            step *= 0.5
        moved = 0.0
        if accepted:
            for c in range(ncols):
                moved = max(moved, abs(cand[cols[c]] - beta[cols[c]]))
                beta[cols[c]] = cand[cols[c]]
            for i in range(n):
                mu[i] = cand_mu[i]
            obj = cobj
        _gradient(X, y, p, mu, work, g_start, g_end, grad)
        worst = 0.0
        for g in work:
            if g == 0:
                worst = max(worst, abs(grad[0]))
            else:
                worst = max(worst, _group_violation(
                    beta, grad, g_start[g], g_end[g], lam, alpha, wts[g]))
        if worst <= tol:
            return 0, outer + 1
        # the quadratic model was not solved finely enough to certify
        inner_tol = max(inner_tol * 1e-2, 1e-32)
    return 2, max_outer


@numba.njit(cache=True)
def _solve_path(X, y, p, lambdas, alpha, g_start, g_end, wts, tol, beta,
                max_outer, max_cycles, prev_lam):
    """Warm-started path with sequential strong-rule screening.

    Column 0 of X is the intercept and group 0 holds it alone. ``prev_lam``
    is the lambda at which ``beta`` was solved (for screening the first
    point). Returns (coefs, kkt, outer iterations, status, failing index).
    """
    n, K = X.shape
    G = g_start.shape[0]
    L = lambdas.shape[0]
    coefs = np.zeros((L, K))
    kkt = np.zeros(L)
    iters = np.zeros(L, dtype=np.int64)
    mu = np.empty(n)
    grad = np.zeros(K)
    all_groups = np.arange(G)
    allcols = np.arange(K)
    _objective(X, y, p, beta, allcols, K, g_start, g_end, wts, lambdas[0], alpha, mu)
    _gradient(X, y, p, mu, all_groups, g_start, g_end, grad)
    for li in range(L):
        lam = lambdas[li]
        inset = np.zeros(G, dtype=np.bool_)
        inset[0] = True
        for g in range(1, G):
            nb = 0.0
            ng = 0.0
            for j in range(g_start[g], g_end[g]):
                nb += beta[j] * beta[j]
                ng += grad[j] * grad[j]
            if nb > 0.0 or np.sqrt(ng) >= alpha * wts[g] * (2 * lam - prev_lam):
                inset[g] = True
        total = 0
        while True:
            work = np.flatnonzero(inset)
            status, it = _solve_working_set(X, y, p, beta, work, g_start, g_end, wts,
                                            lam, alpha, tol, max_outer, max_cycles)
            total += it
            if status != 0:
                iters[li] = total
                return coefs, kkt, iters, status, li
            _objective(X, y, p, beta, allcols, K, g_start, g_end, wts, lam, alpha, mu)
            _gradient(X, y, p, mu, all_groups, g_start, g_end, grad)
            added = False
            worst = abs(grad[0])
            for g in range(1, G):
                v = _group_violation(beta, grad, g_start[g], g_end[g], lam, alpha,
                                     wts[g])
                if v > tol and not inset[g]:
                    inset[g] = True
                    added = True
                worst = max(worst, v)
            if not added:
                break
        coefs[li] = beta
        kkt[li] = worst
        iters[li] = total
        prev_lam = lam
    return coefs, kkt, iters, 0, L


class _Problem:
    """Scaled, group-contiguous view of one training design."""

    def __init__(self, design: FeatureMatrix, p: float):
        if np.any(design.y < 0) or not np.any(design.y > 0):
            raise DomainError("responses must be nonnegative with at least one positive")
        self.p = p
        self.design = design
        self.order = np.argsort(design.groups, kind="stable")
        groups = design.groups[self.order]
        self.X = np.asfortranarray(design.X[:, self.order])
        self.n, self.k = self.X.shape
        G = design.n_groups
        counts = np.bincount(groups, minlength=G)
        self.g_end = np.cumsum(counts).astype(np.int64)
        self.g_start = (self.g_end - counts).astype(np.int64)
        self.groups = groups
        self.weights = np.sqrt(counts).astype(float)
        self.scale = float(design.y.mean())
        self.y = design.y / self.scale
        self.factor = self.scale ** (2 - p)

    def eta(self, b0, beta):
        return b0 + self.X @ beta

    def loss(self, mu):
        return float(np.mean(unit_deviance(self.y, mu, self.p))) / 2

    def penalty(self, beta, lam, alpha):
        sq = np.bincount(self.groups, weights=beta ** 2, minlength=len(self.weights))
        return lam * (alpha * np.sum(self.weights * np.sqrt(sq))
                      + (1 - alpha) / 2 * np.sum(sq))

    def gamma(self, v):
        out = np.empty(len(self.weights))
        for g, (s, e) in enumerate(zip(self.g_start, self.g_end)):
            Xg = self.X[:, s:e]
            if e - s == 1:
                out[g] = float(v @ Xg[:, 0] ** 2) / self.n
            else:
                out[g] = float(np.linalg.eigvalsh(Xg.T @ (Xg * v[:, None]) / self.n)[-1])
        return out

    def kkt(self, b0, beta, lam, alpha):
        """Largest violation of the stationarity conditions (scaled units)."""
        p = self.p
        mu = np.exp(clamp_eta(self.eta(b0, beta)))
        resid = self.y * mu ** (1 - p) - mu ** (2 - p)
        grad = -(self.X.T @ resid) / self.n
        worst = abs(float(np.mean(resid)))
        for g, (s, e) in enumerate(zip(self.g_start, self.g_end)):
            bg, gg = beta[s:e], grad[s:e]
            nb = np.linalg.norm(bg)
            if nb == 0:
                viol = max(0.0, np.linalg.norm(gg) - alpha * lam * self.weights[g])
            else:
                viol = np.linalg.norm(gg + lam * (1 - alpha) * bg
                                      + alpha * lam * self.weights[g] * bg / nb)
            worst = max(worst, float(viol))
        return worst


@dataclass(frozen=True)
class PenalizedPath:
    lambdas: np.ndarray
    alpha: float
    p: float
    intercepts: np.ndarray
    coefs: np.ndarray
    deviance: np.ndarray
    kkt: np.ndarray
    columns: list
    groups: np.ndarray
    group_names: list
    phi: float | None = None
    n_iter: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.lambdas)

    def active_groups(self, index) -> list[str]:
        beta = self.coefs[index]
        return [self.group_names[g] for g in sorted(set(self.groups[beta != 0]))]

    @property
    def n_active(self) -> np.ndarray:
        return np.array([len(self.active_groups(i)) for i in range(len(self))])

    def predict(self, rows: FeatureMatrix, index) -> np.ndarray:
        rows.check_compatible(self.columns)
        return np.exp(clamp_eta(self.intercepts[index] + rows.X @ self.coefs[index]))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("lambda,alpha,deviance,n_active,active_groups\n")
            for i, lam in enumerate(self.lambdas):
                groups = self.active_groups(i)
                fh.write(f"{lam:.10g},{self.alpha:g},{self.deviance[i]:.10g},"
                         f"{len(groups)},{';'.join(groups)}\n")


class _PathRunner:
    """Solves a lambda grid in pieces, keeping the warm start in solver units.

    Advancing in several steps gives exactly the points of one
    uninterrupted path.
    """

    def __init__(self, design, p, alpha, grid, kkt_tol, start=None,
                 start_lambda=None, max_outer=100, max_cycles=200_000):
        prob = self.prob = _Problem(design, p)
        self.design, self.p, self.alpha = design, float(p), float(alpha)
        self.grid = np.asarray(grid, float)
        self.kkt_tol = kkt_tol
        self.max_outer, self.max_cycles = max_outer, max_cycles
        self.X = np.asfortranarray(np.column_stack([np.ones(prob.n), prob.X]))
        self.g_start = np.concatenate([[0], prob.g_start + 1]).astype(np.int64)
        self.g_end = np.concatenate([[1], prob.g_end + 1]).astype(np.int64)
        self.wts = np.concatenate([[0.0], prob.weights])
        self.beta = np.zeros(prob.k + 1)
        if start is None:
            self.beta[0] = np.log(prob.y.mean())
        else:
            self.beta[0] = start[0] - np.log(prob.scale)
            self.beta[1:] = np.asarray(start[1], float)[prob.order]
        self.prev = float(self.grid[0] if start_lambda is None else start_lambda)
        self.coefs, self.kkt, self.iters = [], [], []

    @property
    def done(self) -> int:
        return len(self.iters)

    def advance(self, stop: int) -> None:
        prob = self.prob
        lams = self.grid[self.done:stop]
        if lams.size == 0:
            return
        coefs, kkt, iters, status, where = _solve_path(
            self.X, prob.y, self.p, lams / prob.factor, self.alpha, self.g_start,
            self.g_end, self.wts, 0.5 * self.kkt_tol / prob.factor, self.beta,
            self.max_outer, self.max_cycles, self.prev / prob.factor)
        if status != 0:
            reason = "inner descent" if status == 1 else "Newton loop"
            index = self.done + where
            raise ConvergenceError(
                f"{reason} did not converge at lambda={self.grid[index]:.6g} "
                f"(path index {index})",
                trace={"iterations": self.iters + iters[:where + 1].tolist()})
        self.coefs.extend(coefs)
        self.kkt.extend(kkt)
        self.iters.extend(iters.tolist())
        self.prev = float(lams[-1])

    def original(self, index=slice(None)):
        """(intercepts, coefficients) in the design's units and column order."""
        prob = self.prob
        coefs = np.asarray(self.coefs)[index]
        inverse = np.argsort(prob.order)
        return coefs[..., 0] + np.log(prob.scale), coefs[..., 1:][..., inverse]

    def result(self) -> PenalizedPath:
        design, prob = self.design, self.prob
        intercepts, betas = self.original()
        eta = intercepts[:, None] + betas @ design.X.T
        dev = unit_deviance(design.y[None, :], np.exp(clamp_eta(eta)),
                            self.p).sum(axis=1)
        return PenalizedPath(lambdas=self.grid[:self.done], alpha=self.alpha, p=self.p,
                             intercepts=intercepts, coefs=betas, deviance=dev,
                             kkt=np.asarray(self.kkt) * prob.factor,
                             columns=list(design.columns), groups=design.groups,
                             group_names=list(design.group_names),
                             n_iter=tuple(self.iters))


def fit_path(design: FeatureMatrix, p: float, spec: PenaltySpec = PenaltySpec(),
             kkt_tol: float = KKT_TOL, start=None, max_outer: int = 100,
             max_cycles: int = 200_000, start_lambda=None) -> PenalizedPath:
    """Warm-started path over ``spec.lambda_grid`` (default: 100 log-spaced
    values from lambda_max down to 1e-4 lambda_max).

    Each point is certified by the solver: the largest KKT violation, in
    original units, is at most ``kkt_tol``. ``start`` optionally gives an
    ``(intercept, coefs)`` warm start for the first lambda, solved at
    ``start_lambda`` (used only to screen groups).
    """
    if spec.lambda_grid is None:
        grid = lambda_grid(lambda_max(design, p, spec.alpha), spec.n_lambda,
                           spec.lambda_ratio)
    else:
        grid = np.asarray(spec.lambda_grid, float)
    runner = _PathRunner(design, p, spec.alpha, grid, kkt_tol, start, start_lambda,
                         max_outer, max_cycles)
    runner.advance(len(grid))
    return runner.result()


def kkt_violation(design: FeatureMatrix, p, intercept, coefs, lam, alpha) -> float:
    """Largest KKT violation of a candidate solution, in original units."""
    prob = _Problem(design, p)
    beta = np.asarray(coefs, float)[prob.order]
    return prob.kkt(intercept - np.log(prob.scale), beta, lam / prob.factor,
                    alpha) * prob.factor


def selected_variables(path: PenalizedPath, index) -> set:
    """Columns belonging to active groups at one path point."""
    beta = path.coefs[index]
    active = set(path.groups[beta != 0].tolist())
    return {c for c, g in zip(path.columns, path.groups) if g in active}


@dataclass(frozen=True)
class CvChoice:
    alpha: float
    lam: float
    index: int
    seed: int
    curves: dict
    path: PenalizedPath = field(repr=False)

    @property
    def intercept(self) -> float:
        return float(self.path.intercepts[self.index])

    @property
    def coefficients(self) -> np.ndarray:
        return self.path.coefs[self.index]

    def predict(self, rows: FeatureMatrix) -> np.ndarray:
        return self.path.predict(rows, self.index)

    def selected(self) -> set:
        return selected_variables(self.path, self.index)

    def selected_groups(self) -> list[str]:
        return self.path.active_groups(self.index)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("alpha,lambda,mean_deviance,sd_deviance\n")
            for alpha in sorted(self.curves):
                lams, per_fold = self.curves[alpha]
                mean, sd = per_fold.mean(axis=0), per_fold.std(axis=0)
                for lam, m, s in zip(lams, mean, sd):
                    fh.write(f"{alpha:g},{lam:.10g},{m:.10g},{s:.10g}\n")


def assign_folds(y, k, seed) -> np.ndarray:
    """Seeded shuffle into k folds; retries once if a training part is all-zero."""
    n = len(y)
    if not 3 <= k <= n:
        raise DomainError(f"need 3 <= folds <= n, got {k}")
    rng = np.random.default_rng(seed)
    for _ in range(2):
        folds = np.empty(n, dtype=int)
        folds[rng.permutation(n)] = np.arange(n) % k
        if all(np.any(y[folds != f] > 0) for f in range(k)):
            return folds
    raise DomainError("could not assign folds with a positive response in every training part")


def cross_validate(design: FeatureMatrix, p: float, alphas=(1.0,), folds: int = 5,
                   seed: int = 0, n_lambda: int = N_LAMBDA,
                   lambda_ratio: float = LAMBDA_RATIO,
                   kkt_tol: float = KKT_TOL, patience: int | None = CV_PATIENCE) -> CvChoice:
    """Pick (alpha, lambda) minimising mean held-out deviance.

    Every fold uses the lambda grid of the full training design for that
    alpha. Ties go to the larger lambda, then the larger alpha. With
    ``patience`` set, the fold paths for one alpha stop once the mean
    held-out deviance has not improved for that many grid points (the
    curve is then reported only up to there); ``None`` runs every point.
    """
    y = design.y
    fold = assign_folds(y, folds, seed)
    parts = [(design.take(np.flatnonzero(fold != f)), design.take(np.flatnonzero(fold == f)))
             for f in range(folds)]
    step = n_lambda if patience is None else max(1, patience)
    curves = {}
    best = None
    for alpha in alphas:
        grid = lambda_grid(lambda_max(design, p, alpha), n_lambda, lambda_ratio)
        runners = [_PathRunner(train, p, alpha, grid, kkt_tol) for train, _ in parts]
        per_fold = np.empty((folds, len(grid)))
        done = 0
        while done < len(grid):
            stop = min(len(grid), done + step)
            for f, (runner, (_, test)) in enumerate(zip(runners, parts)):
                runner.advance(stop)
                b0, beta = runner.original(slice(done, stop))
                mu = np.exp(clamp_eta(b0[:, None] + beta @ test.X.T))
                per_fold[f, done:stop] = unit_deviance(test.y[None, :], mu, p).mean(axis=1)
            done = stop
            mean = per_fold[:, :done].mean(axis=0)
            if patience is not None and done - 1 - int(np.argmin(mean)) >= patience:
                break
        curves[float(alpha)] = (grid[:done], per_fold[:, :done])
        for i, m in enumerate(mean):
            # equal deviance: larger lambda, then larger alpha
            key = (m, -grid[i], -alpha)
            if best is None or key < best[0]:
                best = (key, float(alpha), i)
    _, alpha, index = best
    grid = lambda_grid(lambda_max(design, p, alpha), n_lambda, lambda_ratio)
    path = fit_path(design, p, PenaltySpec(alpha, tuple(grid)), kkt_tol)
    return CvChoice(alpha=alpha, lam=float(grid[index]), index=index, seed=seed,
                    curves=curves, path=path)
