"""Stability predictors returning P(stable) in [0, 1].

``OraclePredictor`` is the exact checker, ``NoisyOraclePredictor`` adds
clamped Gaussian noise to it, and ``LogisticModel`` is a logistic classifier
over geometric features of the observed stack. The logistic loss follows the
usual convention of label 1 for *unstable*, so the learned logit ``f`` is the
log-odds of collapse and the model reports ``1 - sigmoid(f)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .geometry import footprint, is_planar
from .stability import Stack, check_stability

N_INTERFACES = 5
FEATURES_PER_INTERFACE = 4
FEATURE_NAMES = ("margin", "normalized_shortfall", "support_area", "degenerate")


class DegenerateDataset(ValueError):
    pass


class StabilityPredictor(Protocol):
    def predict(self, stack: Stack) -> float: ...


def oracle_predict(stack: Stack) -> float:
    return 1.0 if check_stability(stack).stable else 0.0


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def noisy_predict(stack: Stack, sigma_score: float, seed: int) -> float:
    if sigma_score < 0:
        raise ValueError("sigma_score must be non-negative")
    s = oracle_predict(stack)
    if sigma_score == 0:
        return s
    return _clamp01(s + float(np.random.default_rng(seed).normal(0.0, sigma_score)))


class OraclePredictor:
    name = "oracle"

    def predict(self, stack: Stack) -> float:
        return oracle_predict(stack)


class NoisyOraclePredictor:
    """Oracle score plus clamped Gaussian noise from a private seeded stream."""

    name = "noisy"

    def __init__(self, sigma_score: float, seed: int = 0):
        if sigma_score < 0:
            raise ValueError("sigma_score must be non-negative")
        self.sigma_score = sigma_score
        self._rng = np.random.default_rng(seed)

    def predict(self, stack: Stack) -> float:
        s = oracle_predict(stack)
        if self.sigma_score == 0:
            return s
        return _clamp01(s + float(self._rng.normal(0.0, self.sigma_score)))


class ConstantPredictor:
    name = "constant"

    def __init__(self, value: float):
        self.value = _clamp01(value)

    def predict(self, stack: Stack) -> float:
        return self.value


# --- features ----------------------------------------------------------------


def observation_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint32)[0])


def interface_features(stack: Stack, sigma_obs: float = 0.0, seed: int = 0) -> np.ndarray:
    """Per-contact features, bottom-up, shape ``(len(stack) - 1, 4)``.

    Per contact: signed margin of the load's CoM, the shortfall of that
    margin relative to the support size (zero when the CoM is inside), the
    support face area, and a flag for degenerate (curved) contacts. With
    ``sigma_obs > 0`` object positions are jittered before measuring, as an
    imperfect observer would see them.
    """
    objs = stack.objects
    n = len(objs)
    xs = [o.x for o in objs]
    ys = [o.y for o in objs]
    if sigma_obs > 0:
        noise = np.random.default_rng(seed).normal(0.0, sigma_obs, size=(n, 2))
        xs = [x + float(dx) for x, dx in zip(xs, noise[:, 0])]
        ys = [y + float(dy) for y, dy in zip(ys, noise[:, 1])]
    out = np.zeros((max(n - 1, 0), FEATURES_PER_INTERFACE))
    m_acc = sx = sy = 0.0
    for i in range(n - 2, -1, -1):
        up = objs[i + 1]
        m_acc += up.mass
        sx += up.mass * xs[i + 1]
        sy += up.mass * ys[i + 1]
        px, py = sx / m_acc, sy / m_acc
        a = footprint(objs[i].shape, objs[i].orientation, xs[i], ys[i])
        b = footprint(up.shape, up.orientation, xs[i + 1], ys[i + 1])
        out[i, 2] = a.area
        if is_planar(a) and is_planar(b):
            margin = min(a.sd(px, py), b.sd(px, py))
            out[i, 0] = margin
            out[i, 1] = min(margin / min(a.inradius, b.inradius), 0.0)
        else:
            out[i, 3] = 1.0
    return out


def pad_features(rows: np.ndarray) -> np.ndarray:
    if len(rows) > N_INTERFACES:
        raise ValueError(f"at most {N_INTERFACES} contacts fit in a feature vector")
    phi = np.zeros(N_INTERFACES * FEATURES_PER_INTERFACE)
    phi[: rows.size] = rows.ravel()
    return phi


def extract_features(stack: Stack, sigma_obs: float = 0.0, seed: int = 0) -> np.ndarray:
    """Fixed-length vector of :func:`interface_features`, zero padded to five contacts."""
    if len(stack) - 1 > N_INTERFACES:
        raise ValueError(f"stacks above {N_INTERFACES + 1} objects are not supported")
    return pad_features(interface_features(stack, sigma_obs, seed))


def feature_matrix(stacks: Sequence[Stack], sigma_obs: float = 0.0, seed: int = 0) -> np.ndarray:
    return np.array([extract_features(s, sigma_obs, observation_seed(seed, i)) for i, s in enumerate(stacks)])


# --- logistic regression -----------------------------------------------------------


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    """Summed binary cross-entropy with labels y=1 for unstable, plus 0.5*l2*|w|^2."""
    f = X @ w + b
    ll = y * _log_sigmoid(f) + (1.0 - y) * _log_sigmoid(-f)
    return float(-ll.sum() + 0.5 * l2 * (w @ w))


def logistic_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0):
    f = X @ w + b
    r = 1.0 / (1.0 + np.exp(-f)) - y
    return X.T @ r + l2 * w, float(r.sum())


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 0.5
    epochs: int = 300
    batch: int = 64
    l2: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class FeatureConfig:
    sigma_obs: float = 0.0
    seed: int = 0
    features: tuple[str, ...] = FEATURE_NAMES
    n_interfaces: int = N_INTERFACES


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    loss_trace: list[float] = field(default_factory=list)

    name = "logistic"

    def unstable_logit(self, phi: np.ndarray) -> np.ndarray:
        return phi @ self.weights + self.bias

    def predict_features(self, phi: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(self.unstable_logit(phi)))

    def predict(self, stack: Stack, seed: int | None = None) -> float:
        """P(stable); observation noise is applied only when ``seed`` is given.

        Towers taller than the feature window are scored window by window
        (five consecutive contacts, each with its true load) and the least
        stable window decides.
        """
        sigma = self.feature_config.sigma_obs if seed is not None else 0.0
        rows = interface_features(stack, sigma, seed or 0)
        if len(rows) <= N_INTERFACES:
            return float(self.predict_features(pad_features(rows)))
        windows = np.array([pad_features(rows[k:k + N_INTERFACES]) for k in range(len(rows) - N_INTERFACES + 1)])
        return float(self.predict_features(windows).min())

    def to_dict(self) -> dict:
        fc = asdict(self.feature_config)
        fc["features"] = list(fc["features"])
        return {
            "model": "logistic",
            "label_convention": "logit is log-odds of unstable; predict returns P(stable)",
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "feature_config": fc,
            "loss_trace": [float(v) for v in self.loss_trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        fc = dict(d["feature_config"])
        fc["features"] = tuple(fc["features"])
        return cls(np.array(d["weights"], dtype=float), float(d["bias"]), FeatureConfig(**fc),
                   [float(v) for v in d.get("loss_trace", [])])

    def save(self, path) -> None:
        from .dataset_io import canonical_dumps

        Path(path).write_text(canonical_dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "LogisticModel":
        import json

        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_logistic(X: np.ndarray, y_unstable: np.ndarray, hyper: TrainHyper = TrainHyper()):
    """Mini-batch gradient descent on the mean logistic loss.

    Features are standardised internally; the returned ``(w, b, trace)``
    act on raw features. ``trace`` holds the mean full-set loss before
    training and after each epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_unstable, dtype=float)
    m = len(y)
    if m == 0 or y.min() == y.max():
        raise DegenerateDataset("training needs both stable and unstable examples")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    rng = np.random.default_rng(hyper.seed)
    trace = [logistic_loss(w, b, Z, y) / m]
    batch = max(1, min(hyper.batch, m))
    for _ in range(hyper.epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch):
            idx = order[start:start + batch]
            gw, gb = logistic_grad(w, b, Z[idx], y[idx], hyper.l2 * len(idx) / m)
            w -= hyper.lr * gw / len(idx)
            b -= hyper.lr * gb / len(idx)
        trace.append(logistic_loss(w, b, Z, y) / m)
    w_raw = w / sd
    b_raw = b - float(w_raw @ mu)
    return w_raw, b_raw, trace


def train_logistic(samples: Sequence[tuple[Stack, bool]], hyper: TrainHyper = TrainHyper(),
                   sigma_obs: float = 0.0, seed: int = 0) -> LogisticModel:
    """Fit a logistic model on ``(stack, is_stable)`` pairs."""
    stacks = [s for s, _ in samples]
    y = np.array([0.0 if stable else 1.0 for _, stable in samples])
    X = feature_matrix(stacks, sigma_obs, seed) if stacks else np.zeros((0, N_INTERFACES * FEATURES_PER_INTERFACE))
    w, b, trace = fit_logistic(X, y, hyper)
    return LogisticModel(w, b, FeatureConfig(sigma_obs=sigma_obs, seed=seed), trace)


def accuracy(model: LogisticModel, stacks: Sequence[Stack], stable: Sequence[bool], seed: int | None = None) -> float:
    """Fraction of stacks classified correctly at the 0.5 threshold.

    Observations are jittered with the model's ``sigma_obs`` using ``seed``
    (defaults to an offset of the training seed so held-out noise differs).
    """
    cfg = model.feature_config
    seed = cfg.seed + 1 if seed is None else seed
    X = feature_matrix(stacks, cfg.sigma_obs, seed)
    p = model.predict_features(X)
    pred = p >= 0.5
    return float(np.mean(pred == np.asarray(stable, dtype=bool)))


def predictor_accuracy(predictor: StabilityPredictor, stacks: Sequence[Stack], stable: Sequence[bool]) -> float:
    pred = [predictor.predict(s) >= 0.5 for s in stacks]
    return float(np.mean(np.array(pred) == np.asarray(stable, dtype=bool)))


def sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


PREDICTOR_KINDS = ("oracle", "noisy", "logistic", "constant")


@dataclass(frozen=True)
class PredictorFactory:
    """Picklable recipe that builds a fresh predictor for a given seed."""

    kind: str = "oracle"
    sigma_score: float = 0.2
    model_path: str | None = None
    value: float = 0.0

    def __call__(self, seed: int = 0):
        if self.kind == "oracle":
            return OraclePredictor()
        if self.kind == "noisy":
            return NoisyOraclePredictor(self.sigma_score, seed)
        if self.kind == "logistic":
            if self.model_path is None:
                raise ValueError("the logistic predictor needs a model file")
            return LogisticModel.load(self.model_path)
        if self.kind == "constant":
            return ConstantPredictor(self.value)
        raise ValueError(f"unknown predictor {self.kind!r} (choose from {', '.join(PREDICTOR_KINDS)})")
