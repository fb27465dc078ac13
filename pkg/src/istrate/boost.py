"""Gradient boosted regression trees under Tweedie deviance with log link.

Each iteration fits a depth-limited least-squares tree to the deviance
pseudo-residuals on a row subsample, then replaces every leaf value by
the exact one-dimensional minimiser of the leaf's deviance (Newton
iterations over all training rows in the leaf). Leaf values are scaled by
the learning rate when added to the score.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import FeatureMatrix
from .errors import DomainError
from .tweedie import clamp_eta, deviance_pseudo_residual, unit_deviance

log = logging.getLogger(__name__)

LEAF_STEP_LIMIT = 5.0


@dataclass(frozen=True)
class BoostConfig:
    M: int = 3000
    nu: float = 0.005
    depth: int = 3
    min_leaf: int = 20
    bag_fraction: float = 0.5
    patience: int = 50
    validation_fraction: float = 0.2
    seed: int = 0
    balance: bool = False

    def __post_init__(self):
        # nu = 0 is accepted as the degenerate constant model
        if not 0 <= self.nu <= 1:
            raise DomainError(f"learning rate must lie in [0, 1], got {self.nu}")
        if self.M < 1 or self.depth < 1 or self.min_leaf < 1:
            raise DomainError("M, depth and min_leaf must be positive")
        if not 0 < self.bag_fraction <= 1:
            raise DomainError("bag_fraction must lie in (0, 1]")
        if self.patience and not 0 < self.validation_fraction < 1:
            raise DomainError("early stopping needs a validation fraction in (0, 1)")


@dataclass(frozen=True)
class RegressionTree:
    """Complete binary layout: node q has children 2q+1 and 2q+2.

    ``feature[q] == -1`` marks a leaf; ``value`` is only meaningful there.
    """

    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        internal = np.flatnonzero(self.feature >= 0)
        if internal.size == 0:
            return 0
        return int(np.floor(np.log2(internal.max() + 1))) + 1

    def apply(self, X) -> np.ndarray:
        return _route(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    @classmethod
    def leaf(cls, value: float) -> "RegressionTree":
        return cls(np.array([-1]), np.array([0.0]), np.array([float(value)]))


@numba.njit(cache=True)
def _route(X, feature, threshold):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        q = 0
        while feature[q] >= 0:
            if X[i, feature[q]] <= threshold[q]:
                q = 2 * q + 1
            else:
                q = 2 * q + 2
        out[i] = q
    return out


@numba.njit(cache=True)
def _grow(X, order, xs, inbag, r, depth, min_leaf, gains):
    """Level-wise exact least-squares tree on the in-bag rows.

    ``order[f]`` lists training rows sorted by feature f and ``xs[f]`` the
    matching sorted values. Ties in gain go
    to the lowest feature index, then the lowest threshold. Returns
    (feature, threshold, node of every training row).
    """
    n, K = X.shape
    size = 2 ** (depth + 1) - 1
    feature = np.full(size, -1, dtype=np.int64)
    threshold = np.zeros(size)
    node = np.zeros(n, dtype=np.int64)
    cnt = np.zeros(size)
    tot = np.zeros(size)
    left_cnt = np.zeros(size)
    left_sum = np.zeros(size)
    last = np.zeros(size)
    best_score = np.zeros(size)
    inv = np.zeros(n + 1)
    for c in range(1, n + 1):
        inv[c] = 1.0 / c
    best_f = np.full(size, -1, dtype=np.int64)
    best_t = np.zeros(size)
    # in-bag rows in sorted order, compacted without branching
    border = np.empty_like(order)
    bxs = np.empty_like(xs)
    m = 0
    for f in range(K):
        m = 0
        for k in range(n):
            i = order[f, k]
            border[f, m] = i
            bxs[f, m] = xs[f, k]
            m += inbag[i]
    for level in range(depth):
        lo = 2 ** level - 1
        hi = 2 ** (level + 1) - 1
        for q in range(lo, hi):
            cnt[q] = 0.0
            tot[q] = 0.0
            best_f[q] = -1
        for i in range(n):
            if inbag[i] and node[i] >= lo and node[i] < hi:
                cnt[node[i]] += 1.0
                tot[node[i]] += r[i]
        for q in range(lo, hi):
            # a split must beat the parent by a relative margin to count
            best_score[q] = tot[q] * tot[q] / max(cnt[q], 1.0)
            best_score[q] += 1e-12 * abs(best_score[q]) + 1e-300
        for f in range(K):
            for q in range(lo, hi):
                left_cnt[q] = 0.0
                left_sum[q] = 0.0
                last[q] = -np.inf
            for k in range(m):
                i = border[f, k]
                q = node[i]
                if q < lo or q >= hi:
                    continue
                x = bxs[f, k]
                if x > last[q]:
                    nl = left_cnt[q]
                    nr = cnt[q] - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        sl = left_sum[q]
                        sr = tot[q] - sl
                        score = sl * sl * inv[int(nl)] + sr * sr * inv[int(nr)]
                        if score > best_score[q]:
                            best_score[q] = score
                            best_f[q] = f
                            best_t[q] = 0.5 * (last[q] + x)
                left_cnt[q] += 1.0
                left_sum[q] += r[i]
                last[q] = x
        split_any = False
        for q in range(lo, hi):
            if best_f[q] >= 0:
                feature[q] = best_f[q]
                threshold[q] = best_t[q]
                gains[best_f[q]] += best_score[q] - tot[q] * tot[q] / cnt[q]
                split_any = True
        if not split_any:
            break
        for i in range(n):
            q = node[i]
            if q >= lo and q < hi and feature[q] >= 0:
                if X[i, feature[q]] <= threshold[q]:
                    node[i] = 2 * q + 1
                else:
                    node[i] = 2 * q + 2
    return feature, threshold, node


@numba.njit(cache=True)
def _leaf_values(node, y, F, p, size, limit):
    """Per-leaf minimiser of sum d(y, exp(F + c)) by Newton's method."""
    values = np.zeros(size)
    n = y.shape[0]
    for q in range(size):
        c = 0.0
        has = False
        for it in range(50):
            g = 0.0
            h = 0.0
            for i in range(n):
                if node[i] != q:
                    continue
                has = True
                eta = min(max(F[i] + c, -30.0), 30.0)
                a = np.exp((1 - p) * eta)
                b = np.exp((2 - p) * eta)
                g += y[i] * a - b
                h += (2 - p) * b + (p - 1) * y[i] * a
            if not has or h <= 0.0:
                break
            step = g / h
            c_new = min(max(c + step, -limit), limit)
            if abs(c_new - c) <= 1e-12 * (1.0 + abs(c)):
                c = c_new
                break
            c = c_new
        values[q] = c
    return values


def _keyed_uniforms(seed, stream, row_ids):
    """Uniform draw per row, keyed to the row's stable id (not its position)."""
    rng = np.random.default_rng([seed, stream])
    return rng.random(int(row_ids.max()) + 1)[row_ids]


def _smallest(draws, fraction):
    m = max(1, int(np.floor(fraction * len(draws))))
    mask = np.zeros(len(draws), bool)
    mask[np.argsort(draws, kind="stable")[:m]] = True
    return mask


@dataclass(frozen=True)
class BoostModel:
    F0: float
    trees: list
    steps: list
    nu: float
    p: float
    columns: list
    groups: np.ndarray
    group_names: list
    gains: np.ndarray
    train_trace: tuple
    valid_trace: tuple
    n_degenerate: int = 0
    all_degenerate: bool = False
    config: BoostConfig | None = field(default=None, compare=False)

    @property
    def n_iter(self) -> int:
        return len(self.trees)

    def score(self, X) -> np.ndarray:
        F = np.full(X.shape[0], self.F0)
        for tree, gamma in zip(self.trees, self.steps):
            F += gamma * self.nu * tree.predict(X)
        return F

    def to_json(self) -> str:
        return json.dumps({
            "F0": self.F0, "nu": self.nu, "p": self.p, "columns": self.columns,
            "groups": self.groups.tolist(), "group_names": self.group_names,
            "gains": self.gains.tolist(),
            "train_trace": list(self.train_trace), "valid_trace": list(self.valid_trace),
            "n_degenerate": self.n_degenerate,
            "trees": [{"gamma": g, "feature": t.feature.tolist(),
                       "threshold": t.threshold.tolist(), "value": t.value.tolist()}
                      for t, g in zip(self.trees, self.steps)],
        })

    @classmethod
    def from_json(cls, text: str) -> "BoostModel":
        raw = json.loads(text)
        trees = [RegressionTree(np.array(t["feature"], dtype=np.int64),
                                np.array(t["threshold"], dtype=float),
                                np.array(t["value"], dtype=float)) for t in raw["trees"]]
        return cls(F0=raw["F0"], trees=trees, steps=[t["gamma"] for t in raw["trees"]],
                   nu=raw["nu"], p=raw["p"], columns=raw["columns"],
                   groups=np.array(raw["groups"], dtype=int),
                   group_names=raw["group_names"], gains=np.array(raw["gains"]),
                   train_trace=tuple(raw["train_trace"]),
                   valid_trace=tuple(raw["valid_trace"]),
                   n_degenerate=raw["n_degenerate"])


def fit_boost(design: FeatureMatrix, p: float, config: BoostConfig = BoostConfig()) -> BoostModel:
    """Boost from F0 = log(mean y); stop at M or after ``patience`` iterations
    without a new best validation deviance (the model is cut back to the best).

    With ``config.balance`` the final F0 is shifted so that the fitted means
    of all rows in ``design`` sum to the observed total. The deviance traces
    describe the unshifted path.
    """
    y = design.y
    if np.any(y < 0) or not np.any(y > 0):
        raise DomainError("responses must be nonnegative with at least one positive")
    row_ids = design.row_ids if design.row_ids is not None else np.arange(design.n)
    if config.patience:
        valid = _smallest(_keyed_uniforms(config.seed, 2**32 - 1, row_ids),
                          config.validation_fraction)
    else:
        valid = np.zeros(design.n, bool)
    train = ~valid
    Xt = np.ascontiguousarray(design.X[train])
    yt, yv = y[train], y[valid]
    Xv = np.ascontiguousarray(design.X[valid])
    ids = row_ids[train]
    order = np.ascontiguousarray(np.argsort(Xt, axis=0, kind="stable").T)
    xs = np.take_along_axis(Xt.T, order, axis=1)
    size = 2 ** (config.depth + 1) - 1

    F0 = float(np.log(yt.mean()))
    Ft = np.full(len(yt), F0)
    Fv = np.full(len(yv), F0)
    gains = np.zeros(design.k)
    trees, steps = [], []
    train_trace, valid_trace = [], []
    gain_history = []
    best, best_m, degenerate = np.inf, 0, 0
    dev_t = float(np.sum(unit_deviance(yt, np.exp(Ft), p)))
    for m in range(config.M):
        r = deviance_pseudo_residual(yt, Ft, p)
        if config.bag_fraction < 1:
            inbag = _smallest(_keyed_uniforms(config.seed, m, ids), config.bag_fraction)
        else:
            inbag = np.ones(len(yt), bool)
        step_gains = np.zeros(design.k)
        feature, threshold, node = _grow(Xt, order, xs, inbag, r, config.depth,
                                         config.min_leaf, step_gains)
        if feature[0] < 0:
            degenerate += 1
            tree = RegressionTree.leaf(0.0)
        else:
            values = _leaf_values(node, yt, Ft, p, size, LEAF_STEP_LIMIT)
            values = np.where(feature < 0, values, 0.0)
            tree = RegressionTree(feature, threshold, values)
            Ft = Ft + config.nu * values[node]
            if len(yv):
                Fv = Fv + config.nu * tree.predict(Xv)
        trees.append(tree)
        steps.append(1.0)
        gain_history.append(step_gains)
        new_dev = float(np.sum(unit_deviance(yt, np.exp(clamp_eta(Ft)), p)))
        assert new_dev <= dev_t * (1 + 1e-10) + 1e-9, "training deviance increased"
        dev_t = new_dev
        train_trace.append(dev_t)
        if len(yv):
            dv = float(np.sum(unit_deviance(yv, np.exp(clamp_eta(Fv)), p)))
            valid_trace.append(dv)
            if dv < best:
                best, best_m = dv, m + 1
            elif config.patience and m + 1 - best_m >= config.patience:
                break
    if len(yv):
        keep = best_m
        trees, steps = trees[:keep], steps[:keep]
        train_trace, valid_trace = train_trace[:keep], valid_trace[:keep]
        gain_history = gain_history[:keep]
        degenerate = sum(1 for t in trees if t.feature[0] < 0)
    for g in gain_history:
        gains += g
    all_degenerate = bool(trees) and degenerate == len(trees)
    if all_degenerate:
        warnings.warn("every boosting iteration produced a degenerate tree", stacklevel=2)
    if config.balance:
        # shift the intercept so fitted means sum to the observed total
        F = np.full(design.n, F0)
        for tree in trees:
            F += config.nu * tree.predict(design.X)
        F0 += float(np.log(y.sum()) - np.log(np.sum(np.exp(clamp_eta(F)))))
    return BoostModel(F0=F0, trees=trees, steps=steps, nu=config.nu, p=p,
                      columns=list(design.columns), groups=design.groups,
                      group_names=list(design.group_names), gains=gains,
                      train_trace=tuple(train_trace), valid_trace=tuple(valid_trace),
                      n_degenerate=degenerate, all_degenerate=all_degenerate,
                      config=config)


def predict_boost(model: BoostModel, rows: FeatureMatrix) -> np.ndarray:
    rows.check_compatible(model.columns)
    return np.exp(clamp_eta(model.score(np.ascontiguousarray(rows.X))))


def boost_selected_variables(model: BoostModel, threshold: float = 0.0) -> set:
    """Groups whose total split gain exceeds ``threshold`` of the overall gain."""
    per_group = np.bincount(model.groups, weights=model.gains,
                            minlength=len(model.group_names))
    total = per_group.sum()
    if total <= 0:
        return set()
    return {model.group_names[g] for g in np.flatnonzero(
        (per_group > threshold * total) & (per_group > 0))}
