"""Logistic scorers with an optional demographic-parity constraint.

Fair training is done in two stages. First the logistic scorer is fit on the
log-loss plus ``multiplier * max(0, tau - soft_dp)``, where ``soft_dp`` is the
min/max ratio of the two groups' mean scores; the multiplier doubles from 0
up to ``TrainConfig.multiplier_cap``. Then, for every fitted scorer whose
plain 0.5 cut-off violates the constraint, a pair of group-specific
thresholds is picked on a grid to maximize training accuracy subject to
``dp_ratio >= tau - epsilon``. The most accurate feasible candidate wins.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, InfeasibleError, NonConvergenceError
from .ingest import FAVORABLE, PRIVILEGED, UNPRIVILEGED, Dataset
from .metrics import PREDICTED, OutcomeVector, dp_ratio

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_iters: int = 2000
    l2_penalty: float = 1e-4
    epsilon: float = 0.05
    seed: int = 0
    multiplier_cap: float = 64.0
    threshold_step: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.multiplier_cap <= 0:
            raise ValueError("multiplier_cap must be positive")
        if not 0 < self.threshold_step < 0.5:
            raise ValueError("threshold_step must lie in (0, 0.5)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_iters": self.max_iters,
            "l2_penalty": self.l2_penalty,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "multiplier_cap": self.multiplier_cap,
            "threshold_step": self.threshold_step,
        }


@dataclass(frozen=True, eq=False)
class Model:
    weights: np.ndarray
    bias: float
    group_thresholds: dict
    tau: float
    trained_epsilon: float
    converged: bool
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    multiplier: float = 0.0
    train_accuracy: float = math.nan
    train_dp: float = math.nan
    info: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "group_thresholds": {
                "privileged": self.group_thresholds[PRIVILEGED],
                "unprivileged": self.group_thresholds[UNPRIVILEGED],
            },
            "tau": self.tau,
            "epsilon": self.trained_epsilon,
            "converged": self.converged,
            "standardization": {
                "mean": self.feature_mean.tolist(),
                "scale": self.feature_scale.tolist(),
            },
            "multiplier": self.multiplier,
            "train_accuracy": self.train_accuracy,
            "train_dp": self.train_dp,
            "info": dict(self.info),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            bias=float(d["bias"]),
            group_thresholds={
                PRIVILEGED: float(d["group_thresholds"]["privileged"]),
                UNPRIVILEGED: float(d["group_thresholds"]["unprivileged"]),
            },
            tau=float(d["tau"]),
            trained_epsilon=float(d["epsilon"]),
            converged=bool(d["converged"]),
            feature_mean=np.asarray(d["standardization"]["mean"], dtype=float),
            feature_scale=np.asarray(d["standardization"]["scale"], dtype=float),
            multiplier=float(d.get("multiplier", 0.0)),
            train_accuracy=float(d.get("train_accuracy", math.nan)),
            train_dp=float(d.get("train_dp", math.nan)),
            info=dict(d.get("info", {})),
        )


def sigmoid(z):
    z = np.clip(z, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def standardization(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and scale; only numeric columns are z-scored."""
    d = ds.n_features
    mean = np.zeros(d)
    scale = np.ones(d)
    mask = ds.numeric_mask
    if mask.any() and ds.n_instances:
        cols = ds.features[:, mask]
        mu = cols.mean(axis=0)
        sd = cols.std(axis=0)
        sd[sd == 0] = 1.0
        mean[mask] = mu
        scale[mask] = sd
    return mean, scale


def _soft_dp(p: np.ndarray, unpriv: np.ndarray, priv: np.ndarray):
    m_u = p[unpriv].mean()
    m_p = p[priv].mean()
    return m_u, m_p


def objective(theta, X, y, groups, tau: float = 0.0, multiplier: float = 0.0, l2: float = 0.0,
              with_value: bool = True):
    """Penalized log-loss and its gradient.

    ``theta`` is ``[weights..., bias]``; ``X`` is already standardized. With
    ``with_value=False`` the returned value is ``nan`` (saves a pass).

    Returns:
        ``(value, gradient)``
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    p = sigmoid(z)
    n = len(y)
    value = math.nan
    if with_value:
        value = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    r = (p - y) / n
    if multiplier > 0:
        unpriv = groups == UNPRIVILEGED
        priv = ~unpriv
        m_u, m_p = _soft_dp(p, unpriv, priv)
        lo, hi, m_lo, m_hi = (unpriv, priv, m_u, m_p) if m_u <= m_p else (priv, unpriv, m_p, m_u)
        soft = m_lo / m_hi if m_hi > 0 else 1.0
        gap = tau - soft
        if gap > 0:
            value += multiplier * gap
            # d(m_lo/m_hi) folded into one residual vector so X is read once
            s = p * (1.0 - p)
            v = s * (m_hi * lo / lo.sum() - m_lo * hi / hi.sum()) / m_hi**2
            r = r - multiplier * v
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return value, grad


def _descend(theta, X, y, groups, cfg: TrainConfig, tau: float, multiplier: float):
    start, _ = objective(theta, X, y, groups, tau, multiplier, cfg.l2_penalty)
    for t in range(1, cfg.max_iters + 1):
        _, grad = objective(theta, X, y, groups, tau, multiplier, cfg.l2_penalty, with_value=False)
        if not np.all(np.isfinite(grad)):
            raise NonConvergenceError(f"non-finite gradient at iteration {t}")
        theta = theta - (cfg.learning_rate / math.sqrt(t)) * grad
    final, grad = objective(theta, X, y, groups, tau, multiplier, cfg.l2_penalty)
    if not math.isfinite(final):
        raise NonConvergenceError("loss diverged")
    return theta, start, final, float(np.linalg.norm(grad))


def _standardized(ds: Dataset, mean, scale):
    return (ds.features - mean) / scale


def _initial_theta(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 0.01, d + 1)


def _make_model(theta, mean, scale, thresholds, tau, cfg, converged, multiplier=0.0, **info):
    return Model(
        weights=theta[:-1].copy(),
        bias=float(theta[-1]),
        group_thresholds=dict(thresholds),
        tau=float(tau),
        trained_epsilon=cfg.epsilon,
        converged=bool(converged),
        feature_mean=mean,
        feature_scale=scale,
        multiplier=float(multiplier),
        info=info,
    )


def _with_train_scores(m: Model, train: Dataset) -> Model:
    pred = predict(m, train.features, train.protected).outcomes
    return replace(
        m,
        train_accuracy=float(np.mean(pred == train.labels)),
        train_dp=dp_ratio(pred, train.protected),
    )


def train_unconstrained(train: Dataset, cfg: TrainConfig = TrainConfig()) -> Model:
    """Plain L2-regularized logistic regression, thresholds 0.5 for both groups."""
    train.require_both()
    mean, scale = standardization(train)
    X = _standardized(train, mean, scale)
    y = train.labels.astype(float)
    theta0 = _initial_theta(train.n_features, cfg.seed)
    theta, start, final, gnorm = _descend(theta0, X, y, train.protected, cfg, 0.0, 0.0)
    if not final < start:
        raise NonConvergenceError(f"loss did not decrease ({start:.6g} -> {final:.6g})")
    m = _make_model(
        theta, mean, scale, {PRIVILEGED: 0.5, UNPRIVILEGED: 0.5}, 0.0, cfg, True,
        loss=final, grad_norm=gnorm,
    )
    return _with_train_scores(m, train)


def threshold_grid(step: float = 0.01) -> np.ndarray:
    k = int(round(1.0 / step))
    return np.array([round(i * step, 10) for i in range(1, k)])


def _group_curves(proba, labels, mask, grid):
    p = proba[mask]
    y = labels[mask]
    pos_sorted = np.sort(p[y == FAVORABLE])
    neg_sorted = np.sort(p[y != FAVORABLE])
    all_sorted = np.sort(p)
    # counts of p >= t and p < t, matching the tie rule used by predict
    n_pos_pred = len(all_sorted) - np.searchsorted(all_sorted, grid, side="left")
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, grid, side="left")
    tn = np.searchsorted(neg_sorted, grid, side="left")
    return n_pos_pred / len(p), tp + tn


def _ratio_matrix(ru: np.ndarray, rp: np.ndarray) -> np.ndarray:
    lo = np.minimum.outer(ru, rp)
    hi = np.maximum.outer(ru, rp)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 1.0)
    return out


def search_thresholds(proba, groups, labels, tau: float, epsilon: float, step: float = 0.01):
    """Most accurate threshold pair on the grid with ``dp >= tau - epsilon``.

    Ties prefer the pair closest to (0.5, 0.5). Returns
    ``(t_unprivileged, t_privileged, accuracy, dp)`` or ``None`` when no grid
    point is feasible.
    """
    grid = threshold_grid(step)
    proba = np.asarray(proba, dtype=float)
    groups = np.asarray(groups)
    labels = np.asarray(labels)
    ru, cu = _group_curves(proba, labels, groups == UNPRIVILEGED, grid)
    rp, cp = _group_curves(proba, labels, groups == PRIVILEGED, grid)
    acc = (cu[:, None] + cp[None, :]) / len(proba)
    dp = _ratio_matrix(ru, rp)
    feasible = dp >= tau - epsilon - 1e-12
    if not feasible.any():
        return None
    dist = np.abs(grid - 0.5)[:, None] + np.abs(grid - 0.5)[None, :]
    # lexicographic: max accuracy, then min distance to the symmetric cut
    score = np.where(feasible, acc, -np.inf)
    best = score.max()
    ties = np.flatnonzero((score == best).ravel())
    i, j = np.unravel_index(ties[np.argmin(dist.ravel()[ties])], acc.shape)
    return float(grid[i]), float(grid[j]), float(acc[i, j]), float(dp[i, j])


def multipliers(cap: float) -> list[float]:
    seq = [0.0]
    lam = 1.0
    while lam <= cap:
        seq.append(lam)
        lam *= 2.0
    return seq


def train_constrained(
    train: Dataset,
    tau: float,
    cfg: TrainConfig = TrainConfig(),
    base: Model | None = None,
    best_effort: bool = False,
) -> Model:
    """Most accurate model whose training predictions reach ``dp >= tau - epsilon``.

    ``base`` may carry a precomputed :func:`train_unconstrained` result for the
    same data and config; it is reused as the zero-multiplier scorer.

    Raises:
        InfeasibleError: no candidate satisfies the constraint (unless
            ``best_effort``, in which case the closest model is returned with
            ``converged=False``).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    train.require_both()
    if base is None:
        base = train_unconstrained(train, cfg)
    mean, scale = base.feature_mean, base.feature_scale
    X = _standardized(train, mean, scale)
    y = train.labels.astype(float)
    g = train.protected
    unpriv = g == UNPRIVILEGED
    priv = ~unpriv
    bound = tau - cfg.epsilon

    candidates: list[Model] = []
    closest: Model | None = None
    theta = np.append(base.weights, base.bias)
    for lam in multipliers(cfg.multiplier_cap):
        if lam > 0:
            theta, _, _, _ = _descend(theta, X, y, g, cfg, tau, lam)
        proba = sigmoid(X @ theta[:-1] + theta[-1])
        plain = (proba >= 0.5).astype(np.int8)
        plain_dp = dp_ratio(plain, g)
        if plain_dp >= bound - 1e-12:
            thresholds = {PRIVILEGED: 0.5, UNPRIVILEGED: 0.5}
            feasible = True
        else:
            found = search_thresholds(proba, g, train.labels, tau, cfg.epsilon, cfg.threshold_step)
            feasible = found is not None
            if feasible:
                thresholds = {UNPRIVILEGED: found[0], PRIVILEGED: found[1]}
            else:
                thresholds = {PRIVILEGED: 0.5, UNPRIVILEGED: 0.5}
        m = _with_train_scores(
            _make_model(theta, mean, scale, thresholds, tau, cfg, feasible, lam), train
        )
        if feasible:
            candidates.append(m)
        elif closest is None or m.train_dp > closest.train_dp:
            closest = m
        m_u, m_p = _soft_dp(proba, unpriv, priv)
        soft = 1.0 if max(m_u, m_p) == 0 else min(m_u, m_p) / max(m_u, m_p)
        if soft >= tau:
            # the penalty is inactive from here on; larger multipliers add nothing
            break

    if candidates:
        best = max(candidates, key=lambda m: (m.train_accuracy, -m.multiplier))
        logger.debug("tau=%.2f: picked multiplier %g (train acc %.4f, dp %.4f)",
                     tau, best.multiplier, best.train_accuracy, best.train_dp)
        return best
    msg = f"no candidate reached dp >= {bound:.3f} for tau={tau}"
    if best_effort:
        logger.warning("%s; returning closest model", msg)
        return replace(closest, converged=False)
    raise InfeasibleError(msg, best=closest)


def _check_width(m: Model, features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise DimensionError(
            f"feature matrix has shape {X.shape}, model expects {m.n_features} columns"
        )
    return X


def predict_proba(m: Model, features) -> np.ndarray:
    X = _check_width(m, features)
    return sigmoid(((X - m.feature_mean) / m.feature_scale) @ m.weights + m.bias)


def predict(m: Model, features, groups) -> OutcomeVector:
    """Favorable iff the score reaches the threshold of the instance's group."""
    proba = predict_proba(m, features)
    groups = np.asarray(groups)
    if len(groups) != len(proba):
        raise DimensionError("groups and features are not aligned")
    cut = np.where(groups == PRIVILEGED, m.group_thresholds[PRIVILEGED], m.group_thresholds[UNPRIVILEGED])
    return OutcomeVector((proba >= cut).astype(np.int8), PREDICTED)
