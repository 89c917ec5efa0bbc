"""Second-stage relevance model: projections, per-table max-pooling, scoring,
logistic loss with a diversity regularizer, analytic gradients and an MLE trainer."""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class RelevanceError(Exception):
    pass


@dataclass
class RelevanceConfig:
    feature_dim: int  # 4 * encoder dim
    proj_dim: int = 128
    lambda_div: float = 0.1
    learning_rate: float = 1e-3
    epoch_patience: int = 1
    max_epochs: int = 100

    def __post_init__(self):
        if self.feature_dim <= 0 or self.proj_dim <= 0:
            raise RelevanceError("dimensions must be positive")
        if self.lambda_div < 0:
            raise RelevanceError("lambda_div must be >= 0")

    def shapes(self) -> list[tuple[int, ...]]:
        f, p = self.feature_dim, self.proj_dim
        return [(p, f), (p,), (p, f), (p,), (2 * p,), (1,)]


@dataclass
class ModelParams:
    W_t: np.ndarray
    b_t: np.ndarray
    W_u: np.ndarray
    b_u: np.ndarray
    w_s: np.ndarray
    b_s: np.ndarray  # shape (1,)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.W_t, self.b_t, self.W_u, self.b_u, self.w_s, self.b_s)])

    @classmethod
    def from_flat(cls, flat: np.ndarray, config: RelevanceConfig) -> "ModelParams":
        arrays = []
        offset = 0
        for shape in config.shapes():
            size = int(np.prod(shape))
            arrays.append(flat[offset:offset + size].reshape(shape).copy())
            offset += size
        if offset != flat.size:
            raise RelevanceError(f"flat parameter size {flat.size} != expected {offset}")
        return cls(*arrays)

    @classmethod
    def zeros(cls, config: RelevanceConfig) -> "ModelParams":
        return cls(*[np.zeros(s) for s in config.shapes()])

    @classmethod
    def init(cls, config: RelevanceConfig, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        arrays = []
        for shape in config.shapes():
            fan_in = shape[-1] if len(shape) > 1 else config.feature_dim
            bound = 1.0 / np.sqrt(fan_in)
            arrays.append(rng.uniform(-bound, bound, size=shape))
        return cls(*arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(*[a.copy() for a in (self.W_t, self.b_t, self.W_u, self.b_u, self.w_s, self.b_s)])


@dataclass
class FeaturizedExample:
    """A question with per-table feature matrices; groups: (table_id, X, label)."""
    question_id: int
    groups: list[tuple[str, np.ndarray, int]]


def extract_features(q_vec: np.ndarray, p_vec: np.ndarray) -> np.ndarray:
    if q_vec.shape != p_vec.shape:
        raise RelevanceError(f"dimension mismatch: {q_vec.shape} vs {p_vec.shape}")
    return np.concatenate([q_vec, p_vec, q_vec * p_vec, np.abs(q_vec - p_vec)])


def featurize(example, q_vec: np.ndarray, vec_of) -> FeaturizedExample:
    """Turn a trainset.TrainingExample into feature matrices via a triple_id -> vector map."""
    groups = []
    for g in example.groups:
        X = np.stack([extract_features(q_vec, vec_of(tid)) for tid in g.triple_ids])
        groups.append((g.table_id, X, g.label))
    return FeaturizedExample(question_id=example.question_id, groups=groups)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ForwardResult:
    scores: list[np.ndarray]        # per group, per triple
    probabilities: list[np.ndarray]
    data_loss: float
    diversity: float
    total_loss: float
    cache: dict = field(default_factory=dict)


def forward(example: FeaturizedExample, params: ModelParams, lambda_div: float = 0.0) -> ForwardResult:
    if any(X.shape[0] == 0 for _, X, _ in example.groups):
        raise RelevanceError("every group must contain at least one triple")
    P = params.b_t.shape[0]
    H_t, H_u, pooled, argmax = [], [], [], []
    scores, probs = [], []
    n_total = sum(X.shape[0] for _, X, _ in example.groups)
    data_loss = 0.0
    div_terms = []
    for _, X, label in example.groups:
        a_t = X @ params.W_t.T + params.b_t
        h_t = np.tanh(a_t)
        pool = h_t.max(axis=0)
        amax = h_t.argmax(axis=0)
        a_u = X @ params.W_u.T + params.b_u
        h_u = np.tanh(a_u)
        s = h_u @ params.w_s[:P] + pool @ params.w_s[P:] + params.b_s[0]
        p = _sigmoid(s)
        # numerically stable BCE via logits
        data_loss += float(np.sum(np.maximum(s, 0) - s * label + np.log1p(np.exp(-np.abs(s)))))
        n = h_t.shape[0]
        if n >= 2:
            gram = h_t @ h_t.T
            div_terms.append(float((gram.sum() - np.trace(gram)) / (n * (n - 1))))
        H_t.append(h_t)
        H_u.append(h_u)
        pooled.append(pool)
        argmax.append(amax)
        scores.append(s)
        probs.append(p)
    data_loss /= n_total
    diversity = float(np.mean(div_terms)) if div_terms else 0.0
    total = data_loss + lambda_div * diversity
    cache = dict(H_t=H_t, H_u=H_u, pooled=pooled, argmax=argmax,
                 n_total=n_total, n_div=len(div_terms))
    return ForwardResult(scores=scores, probabilities=probs, data_loss=data_loss,
                         diversity=diversity, total_loss=total, cache=cache)


def backward(example: FeaturizedExample, params: ModelParams, lambda_div: float,
             fwd: ForwardResult) -> ModelParams:
    """Exact analytic gradients of the total loss; max-pool routes gradient to
    the argmax triple per dimension (first index on ties)."""
    P = params.b_t.shape[0]
    g = ModelParams(*[np.zeros_like(a) for a in (params.W_t, params.b_t, params.W_u,
                                                 params.b_u, params.w_s, params.b_s)])
    n_total = fwd.cache["n_total"]
    n_div = fwd.cache["n_div"]
    for gi, (_, X, label) in enumerate(example.groups):
        h_t = fwd.cache["H_t"][gi]
        h_u = fwd.cache["H_u"][gi]
        pool = fwd.cache["pooled"][gi]
        amax = fwd.cache["argmax"][gi]
        p = fwd.probabilities[gi]
        ds = (p - label) / n_total  # dL/ds per triple
        # scoring layer
        g.w_s[:P] += h_u.T @ ds
        g.w_s[P:] += pool * ds.sum()
        g.b_s[0] += ds.sum()
        # triple-space projection
        dh_u = np.outer(ds, params.w_s[:P])
        da_u = dh_u * (1.0 - h_u ** 2)
        g.W_u += da_u.T @ X
        g.b_u += da_u.sum(axis=0)
        # table-space projection: pooled path + diversity path
        dh_t = np.zeros_like(h_t)
        dpool = params.w_s[P:] * ds.sum()
        dh_t[amax, np.arange(P)] += dpool
        n = h_t.shape[0]
        if lambda_div > 0 and n >= 2 and n_div > 0:
            coeff = lambda_div / (n_div * n * (n - 1))
            row_sum = h_t.sum(axis=0)
            dh_t += 2.0 * coeff * (row_sum[None, :] - h_t)
        da_t = dh_t * (1.0 - h_t ** 2)
        g.W_t += da_t.T @ X
        g.b_t += da_t.sum(axis=0)
    return g


def rank_tables(scores_by_table: dict[str, np.ndarray]) -> list[str]:
    """Tables ordered by their best triple score, ties by table id."""
    return sorted(scores_by_table, key=lambda t: (-float(np.max(scores_by_table[t])), t))


def predict_ranking(example: FeaturizedExample, params: ModelParams) -> list[str]:
    fwd = forward(example, params)
    return rank_tables({tid: fwd.scores[i] for i, (tid, _, _) in enumerate(example.groups)})


def precision_at_1(examples: list[FeaturizedExample], params: ModelParams) -> float:
    if not examples:
        return 0.0
    hits = 0
    for e in examples:
        labels = {tid: label for tid, _, label in e.groups}
        ranking = predict_ranking(e, params)
        hits += labels[ranking[0]]
    return hits / len(examples)


@dataclass
class TrainHistory:
    epochs: int = 0
    questions_presented: int = 0
    eval_history: list[float] = field(default_factory=list)
    best_eval: float = -1.0


def sgd_epoch(examples: list[FeaturizedExample], params: ModelParams,
              config: RelevanceConfig, rng: random.Random) -> None:
    order = list(range(len(examples)))
    rng.shuffle(order)
    for i in order:
        fwd = forward(examples[i], params, config.lambda_div)
        grads = backward(examples[i], params, config.lambda_div, fwd)
        for attr in ("W_t", "b_t", "W_u", "b_u", "w_s", "b_s"):
            getattr(params, attr)[...] -= config.learning_rate * getattr(grads, attr)


def train_mle(train_examples: list[FeaturizedExample], config: RelevanceConfig,
              eval_fn, seed: int = 0) -> tuple[ModelParams, TrainHistory]:
    """From-scratch stochastic gradient training with early stopping.

    Stops when validation P@1 (via eval_fn) fails to improve for
    epoch_patience + 1 consecutive epochs; returns the best checkpoint.
    """
    if not train_examples:
        raise RelevanceError("no training examples")
    rng = random.Random(seed)
    params = ModelParams.init(config, seed=seed)
    best = params.copy()
    history = TrainHistory()
    stall = 0
    for _ in range(config.max_epochs):
        sgd_epoch(train_examples, params, config, rng)
        history.epochs += 1
        history.questions_presented += len(train_examples)
        score = float(eval_fn(params))
        history.eval_history.append(score)
        if score > history.best_eval:
            history.best_eval = score
            best = params.copy()
            stall = 0
        else:
            stall += 1
            if stall > config.epoch_patience:
                break
    return best, history


def simple_incremental_loop(datasets: list[tuple[list[FeaturizedExample], list[FeaturizedExample]]],
                            config: RelevanceConfig, dataset_patience: int = 1,
                            seed: int = 0) -> tuple[ModelParams, list[TrainHistory], float]:
    """Accumulate-and-retrain baseline: at step t the model is retrained from
    scratch on the concatenation of datasets 1..t. Stops after
    dataset_patience + 1 consecutive non-improving datasets."""
    if not datasets:
        raise RelevanceError("no datasets")
    best_params = None
    best_eval = -1.0
    histories = []
    stall = 0
    for t in range(len(datasets)):
        train_examples = [e for train, _ in datasets[:t + 1] for e in train]
        validation_examples = [e for _, val in datasets[:t + 1] for e in val]
        eval_fn = lambda params: precision_at_1(validation_examples, params)
        params, history = train_mle(train_examples, config, eval_fn, seed=seed + t)
        histories.append(history)
        if history.best_eval > best_eval:
            best_eval = history.best_eval
            best_params = params
            stall = 0
        else:
            stall += 1
            if stall > dataset_patience:
                break
    return best_params, histories, best_eval


def save_checkpoint(params: ModelParams, config: RelevanceConfig, path: str | Path,
                    meta: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    flat = params.flatten().astype("<f8")
    flat.tofile(path / "params.f64")
    manifest = {"kind": "mle", "feature_dim": config.feature_dim, "proj_dim": config.proj_dim,
                "count": int(flat.size)}
    manifest.update(meta or {})
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path, config: RelevanceConfig) -> ModelParams:
    path = Path(path)
    flat = np.fromfile(path / "params.f64", dtype="<f8")
    return ModelParams.from_flat(flat, config)
