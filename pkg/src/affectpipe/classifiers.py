"""Seven binary classifiers over 58-dim participant features.

All are hand-built on numpy behind one fit/predict contract: features are
standardized with statistics captured at fit time, fitting is deterministic
given the spec seed, and predict_proba returns the probability of the
positive (ASD) label.  Only the model families are pinned down; every
hyperparameter default here is our own choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from . import training as tr

KINDS = (
    "logistic", "lasso", "lda", "qda", "svm_rbf", "gbt", "mlp2",
)


class DegenerateTrainingError(ValueError):
    """Training set contains a single class; no decision boundary exists."""


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "logistic"
    l2: float = 1e-3
    l1: float = 1e-2
    iterations: int = 500
    step: float = 0.1
    svm_c: float = 1.0
    svm_gamma: float | None = None
    rounds: int = 100
    depth: int = 3
    shrinkage: float = 0.1
    hidden: tuple = (32, 16)
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; choose from {KINDS}")
        for name in ("l2", "l1", "step", "svm_c", "shrinkage"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.svm_gamma is not None and self.svm_gamma <= 0:
            raise ValueError("svm_gamma must be positive")
        for name in ("iterations", "rounds", "depth", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def standardize_fit(X: np.ndarray):
    """Column z-scores; zero-variance columns are centered with unit divisor."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("standardization needs a matrix with at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    stats = Standardizer(mean=mean, std=std)
    return stats, stats.apply(X)


@dataclass(frozen=True)
class FittedModel:
    kind: str
    stats: Standardizer
    payload: dict = field(repr=False)

    @property
    def n_features(self) -> int:
        return self.stats.mean.size


def _check_training_set(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError(f"feature matrix {X.shape} and labels {y.shape} do not align")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be binary 0/1")
    if np.unique(y).size < 2:
        raise DegenerateTrainingError("training set has a single label")
    return X, y


def _sigmoid(z):
    return nm.sigmoid(np.asarray(z, dtype=float))


# --- linear family ---------------------------------------------------------

def _fit_logistic(X, y, spec, lasso: bool):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(spec.iterations):
        p = _sigmoid(X @ w + b)
        err = p - y
        gw = X.T @ err / n
        gb = float(err.mean())
        if lasso:
            w = w - spec.step * gw
            b -= spec.step * gb
            cut = spec.step * spec.l1
            w = np.sign(w) * np.maximum(np.abs(w) - cut, 0.0)
        else:
            w = w - spec.step * (gw + spec.l2 * w)
            b -= spec.step * gb
    return {"w": w, "b": b}


# --- Gaussian discriminants ------------------------------------------------

RIDGE = 1e-6


def _fit_lda(X, y):
    d = X.shape[1]
    mu = [X[y == c].mean(axis=0) for c in (0, 1)]
    pooled = np.zeros((d, d))
    for c in (0, 1):
        centered = X[y == c] - mu[c]
        pooled += centered.T @ centered
    pooled /= max(X.shape[0] - 2, 1)
    pooled += RIDGE * np.eye(d)
    w = np.linalg.solve(pooled, mu[1] - mu[0])
    prior = [float((y == c).mean()) for c in (0, 1)]
    b = -0.5 * float((mu[1] + mu[0]) @ w) + math.log(prior[1] / prior[0])
    return {"w": w, "b": b}


def _fit_qda(X, y):
    d = X.shape[1]
    payload = {"priors": [], "means": [], "inv_covs": [], "logdets": []}
    for c in (0, 1):
        rows = X[y == c]
        mu = rows.mean(axis=0)
        centered = rows - mu
        cov = centered.T @ centered / max(rows.shape[0] - 1, 1) + RIDGE * np.eye(d)
        sign, logdet = np.linalg.slogdet(cov)
        payload["priors"].append(float((y == c).mean()))
        payload["means"].append(mu)
        payload["inv_covs"].append(np.linalg.inv(cov))
        payload["logdets"].append(float(logdet))
    return payload


def _qda_decision(payload, X):
    scores = []
    for c in (0, 1):
        diff = X - payload["means"][c]
        maha = np.einsum("nd,de,ne->n", diff, payload["inv_covs"][c], diff)
        scores.append(-0.5 * payload["logdets"][c] - 0.5 * maha + math.log(payload["priors"][c]))
    return scores[1] - scores[0]


# --- RBF SVM by sequential minimal optimization ----------------------------

def _rbf_kernel(A, B, gamma):
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _fit_svm(X, y, spec):
    n = X.shape[0]
    gamma = spec.svm_gamma if spec.svm_gamma is not None else 1.0 / X.shape[1]
    sy = 2.0 * y - 1.0
    K = _rbf_kernel(X, X, gamma)
    alpha = np.zeros(n)
    b = 0.0
    rng = np.random.default_rng(spec.seed)
    tol, c = 1e-3, spec.svm_c
    passes, max_passes, sweeps = 0, 3, 0
    while passes < max_passes and sweeps < 200:
        sweeps += 1
        changed = 0
        for i in range(n):
            f_i = float((alpha * sy) @ K[:, i] + b)
            e_i = f_i - sy[i]
            if not ((sy[i] * e_i < -tol and alpha[i] < c) or (sy[i] * e_i > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            f_j = float((alpha * sy) @ K[:, j] + b)
            e_j = f_j - sy[j]
            a_i_old, a_j_old = alpha[i], alpha[j]
            if sy[i] != sy[j]:
                low, high = max(0.0, a_j_old - a_i_old), min(c, c + a_j_old - a_i_old)
            else:
                low, high = max(0.0, a_i_old + a_j_old - c), min(c, a_i_old + a_j_old)
            if low == high:
                continue
            eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
            if eta >= 0:
                continue
            a_j = np.clip(a_j_old - sy[j] * (e_i - e_j) / eta, low, high)
            if abs(a_j - a_j_old) < 1e-5:
                continue
            a_i = a_i_old + sy[i] * sy[j] * (a_j_old - a_j)
            alpha[i], alpha[j] = a_i, a_j
            b1 = b - e_i - sy[i] * (a_i - a_i_old) * K[i, i] - sy[j] * (a_j - a_j_old) * K[i, j]
            b2 = b - e_j - sy[i] * (a_i - a_i_old) * K[i, j] - sy[j] * (a_j - a_j_old) * K[j, j]
            if 0 < a_i < c:
                b = b1
            elif 0 < a_j < c:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            changed += 1
        passes = passes + 1 if changed == 0 else 0
    keep = alpha > 1e-12
    return {
        "support": X[keep], "coef": (alpha * sy)[keep], "b": b, "gamma": gamma,
    }


# --- gradient boosted trees -------------------------------------------------

MAX_LEAF_VALUE = 4.0


def _best_split(X, grad, rows):
    """Greedy SSE-minimizing split; returns (feature, threshold) or None."""
    base = grad[rows]
    count = rows.size
    total = float(base.sum())
    sq_total = float(base @ base)
    sse_parent = sq_total - total * total / count
    best = None
    best_gain = 1e-12
    for j in range(X.shape[1]):
        order = np.argsort(X[rows, j], kind="stable")
        vals = X[rows[order], j]
        g = base[order]
        left_n = np.arange(1, count)
        left_sum = np.cumsum(g)[:-1]
        left_sq = np.cumsum(g * g)[:-1]
        splittable = vals[1:] != vals[:-1]
        if not splittable.any():
            continue
        left_sse = left_sq - left_sum**2 / left_n
        right_sum = total - left_sum
        right_sse = (sq_total - left_sq) - right_sum**2 / (count - left_n)
        gains = np.where(splittable, sse_parent - (left_sse + right_sse), -np.inf)
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            best = (j, (vals[k] + vals[k + 1]) / 2.0)
    return best


def _build_tree(X, grad, hess, rows, depth):
    if depth == 0 or rows.size < 2:
        return _leaf(grad, hess, rows)
    split = _best_split(X, grad, rows)
    if split is None:
        return _leaf(grad, hess, rows)
    j, thr = split
    left = rows[X[rows, j] <= thr]
    right = rows[X[rows, j] > thr]
    if left.size == 0 or right.size == 0:
        return _leaf(grad, hess, rows)
    return {
        "feature": j, "threshold": thr,
        "left": _build_tree(X, grad, hess, left, depth - 1),
        "right": _build_tree(X, grad, hess, right, depth - 1),
    }


def _leaf(grad, hess, rows):
    value = grad[rows].sum() / (hess[rows].sum() + 1e-12)
    return {"value": float(np.clip(value, -MAX_LEAF_VALUE, MAX_LEAF_VALUE))}


def _tree_predict(tree, X):
    if "value" in tree:
        return np.full(X.shape[0], tree["value"])
    go_left = X[:, tree["feature"]] <= tree["threshold"]
    out = np.empty(X.shape[0])
    out[go_left] = _tree_predict(tree["left"], X[go_left])
    out[~go_left] = _tree_predict(tree["right"], X[~go_left])
    return out


def _fit_gbt(X, y, spec):
    n = X.shape[0]
    pos = float(y.mean())
    f0 = math.log(pos / (1.0 - pos))
    score = np.full(n, f0)
    trees = []
    losses = []
    rows = np.arange(n)
    for _ in range(spec.rounds):
        p = _sigmoid(score)
        losses.append(float(np.mean(
            np.maximum(score, 0.0) - score * y + np.log1p(np.exp(-np.abs(score)))
        )))
        grad = y - p
        hess = p * (1.0 - p)
        tree = _build_tree(X, grad, hess, rows, spec.depth)
        trees.append(tree)
        score = score + spec.shrinkage * _tree_predict(tree, X)
    return {"f0": f0, "trees": trees, "shrinkage": spec.shrinkage, "train_losses": losses}


# --- two-hidden-layer perceptron --------------------------------------------

def _mlp_shapes(d, hidden):
    h1, h2 = hidden
    return {
        "l1.w": (h1, d), "l1.b": (h1,),
        "l2.w": (h2, h1), "l2.b": (h2,),
        "out.w": (1, h2), "out.b": (1,),
    }


def _fit_mlp(X, y, spec):
    rng = np.random.default_rng(spec.seed)
    params = {}
    for key, shape in sorted(_mlp_shapes(X.shape[1], spec.hidden).items()):
        if key.endswith(".w"):
            params[key] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), size=shape)
        else:
            params[key] = np.zeros(shape)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    config = tr.TrainConfig(lr0=0.1, momentum=0.9, lr_decay=0.01,
                            epochs=spec.epochs, weight_decay=1e-4, seed=spec.seed)
    n = X.shape[0]
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=float)
    cls_w = tr.inverse_frequency(counts)
    sample_w = cls_w[y]
    for epoch in range(config.epochs):
        z1 = nm.linear(X, params["l1.w"], params["l1.b"])
        a1 = nm.relu(z1)
        z2 = nm.linear(a1, params["l2.w"], params["l2.b"])
        a2 = nm.relu(z2)
        z = nm.linear(a2, params["out.w"], params["out.b"])[:, 0]
        p = _sigmoid(z)
        gz = (sample_w * (p - y) / n)[:, None]
        ga2, gw_out, gb_out = nm.linear_backward(gz, a2, params["out.w"])
        gz2 = nm.relu_backward(ga2, z2)
        ga1, gw2, gb2 = nm.linear_backward(gz2, a1, params["l2.w"])
        gz1 = nm.relu_backward(ga1, z1)
        _, gw1, gb1 = nm.linear_backward(gz1, X, params["l1.w"])
        grads = {
            "l1.w": gw1, "l1.b": gb1, "l2.w": gw2, "l2.b": gb2,
            "out.w": gw_out, "out.b": gb_out,
        }
        for key in params:
            grads[key] = grads[key] + 2.0 * config.weight_decay * params[key]
        params, velocity = tr.sgd_step(params, velocity, grads, epoch, config)
    return {"params": params, "hidden": tuple(spec.hidden)}


def _mlp_decision(payload, X):
    params = payload["params"]
    a1 = nm.relu(nm.linear(X, params["l1.w"], params["l1.b"]))
    a2 = nm.relu(nm.linear(a1, params["l2.w"], params["l2.b"]))
    return nm.linear(a2, params["out.w"], params["out.b"])[:, 0]


# --- public contract ---------------------------------------------------------

def fit(spec: ClassifierSpec, X, y) -> FittedModel:
    """Standardize, then train the classifier named by the spec."""
    X, y = _check_training_set(X, y)
    stats, Xs = standardize_fit(X)
    if spec.kind == "logistic":
        payload = _fit_logistic(Xs, y, spec, lasso=False)
    elif spec.kind == "lasso":
        payload = _fit_logistic(Xs, y, spec, lasso=True)
    elif spec.kind == "lda":
        payload = _fit_lda(Xs, y)
    elif spec.kind == "qda":
        payload = _fit_qda(Xs, y)
    elif spec.kind == "svm_rbf":
        payload = _fit_svm(Xs, y, spec)
    elif spec.kind == "gbt":
        payload = _fit_gbt(Xs, y, spec)
    else:
        payload = _fit_mlp(Xs, y, spec)
    return FittedModel(kind=spec.kind, stats=stats, payload=payload)


def decision_values(model: FittedModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    Xs = model.stats.apply(X)
    kind, payload = model.kind, model.payload
    if kind in ("logistic", "lasso", "lda"):
        return Xs @ payload["w"] + payload["b"]
    if kind == "qda":
        return _qda_decision(payload, Xs)
    if kind == "svm_rbf":
        K = _rbf_kernel(Xs, payload["support"], payload["gamma"])
        return K @ payload["coef"] + payload["b"]
    if kind == "gbt":
        score = np.full(Xs.shape[0], payload["f0"])
        for tree in payload["trees"]:
            score = score + payload["shrinkage"] * _tree_predict(tree, Xs)
        return score
    return _mlp_decision(payload, Xs)


def predict_proba(model: FittedModel, x):
    """Probability of the positive label; scalar in, scalar out."""
    single = np.asarray(x).ndim == 1
    p = _sigmoid(decision_values(model, x))
    return float(p[0]) if single else p


def decide(p, threshold: float = 0.5):
    """Positive iff p strictly exceeds the threshold."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    out = p > threshold
    return bool(out) if out.ndim == 0 else out
