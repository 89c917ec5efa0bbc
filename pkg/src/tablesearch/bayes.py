"""Mean-field variational treatment of the relevance model: ELBO training with
chained Gaussian priors, incremental dataset loop, and averaged test prediction."""

import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .relevance import (FeaturizedExample, ModelParams, RelevanceConfig,
                        backward, forward, precision_at_1, rank_tables)

LOG_2PI = math.log(2.0 * math.pi)


class BayesError(Exception):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    # inverse of log(1 + e^x); stable for small y
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


@dataclass
class VariationalParams:
    mu: np.ndarray
    rho: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    def copy(self) -> "VariationalParams":
        return VariationalParams(mu=self.mu.copy(), rho=self.rho.copy())


@dataclass
class GaussianPrior:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def standard(cls, size: int) -> "GaussianPrior":
        return cls(mean=np.zeros(size), std=np.ones(size))


@dataclass
class PosteriorSnapshot:
    params: VariationalParams
    datasets_consumed: list[int]
    eval_p1: float

    def to_prior(self) -> GaussianPrior:
        return GaussianPrior(mean=self.params.mu.copy(), std=self.params.sigma.copy())

    def mean_model(self, config: RelevanceConfig) -> ModelParams:
        return ModelParams.from_flat(self.params.mu, config)


@dataclass
class BayesConfig:
    n_test_samples: int = 6
    epoch_patience: int = 1
    dataset_patience: int = 1
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_test_samples < 0:
            raise BayesError("n_test_samples must be >= 0")


def param_count(config: RelevanceConfig) -> int:
    return sum(int(np.prod(s)) for s in config.shapes())


def init_variational(config: RelevanceConfig, seed: int = 0) -> VariationalParams:
    rng = np.random.default_rng(seed)
    n = param_count(config)
    return VariationalParams(mu=rng.uniform(-1.0, 1.0, n), rho=rng.uniform(-3.0, 0.0, n))


def sample_weights(v: VariationalParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized draw: theta = mu + softplus(rho) * eps. Returns (theta, eps)."""
    eps = rng.standard_normal(v.mu.size)
    return v.mu + v.sigma * eps, eps


def _log_normal(x, mean, std):
    return float(np.sum(-0.5 * LOG_2PI - np.log(std) - 0.5 * ((x - mean) / std) ** 2))


def elbo_loss(v: VariationalParams, prior: GaussianPrior, example: FeaturizedExample,
              config: RelevanceConfig, kl_weight: float,
              eps: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Single-sample ELBO loss and its total gradients w.r.t. (mu, rho).

    loss = kl_weight * (log q(theta|phi) - log p(theta)) - log P(D|theta),
    with theta = mu + softplus(rho) * eps for the supplied noise.
    """
    sigma = v.sigma
    theta = v.mu + sigma * eps
    model = ModelParams.from_flat(theta, config)
    fwd = forward(example, model, config.lambda_div)
    grads = backward(example, model, config.lambda_div, fwd)
    grad_theta = grads.flatten()

    log_q = float(np.sum(-0.5 * LOG_2PI - np.log(sigma) - 0.5 * eps ** 2))
    log_p = _log_normal(theta, prior.mean, prior.std)
    loss = kl_weight * (log_q - log_p) + fwd.total_loss

    sig_rho = 1.0 / (1.0 + np.exp(-v.rho))  # d sigma / d rho
    dlogp_dtheta = -(theta - prior.mean) / prior.std ** 2
    grad_mu = kl_weight * (-dlogp_dtheta) + grad_theta
    # total d log q / d rho reduces to -sig_rho / sigma under reparameterization
    grad_rho = kl_weight * (-sig_rho / sigma - dlogp_dtheta * eps * sig_rho) + grad_theta * eps * sig_rho
    return loss, grad_mu, grad_rho


def variational_from_prior(prior: GaussianPrior) -> VariationalParams:
    return VariationalParams(mu=prior.mean.copy(), rho=softplus_inv(prior.std))


@dataclass
class IncrementReport:
    dataset_index: int
    epochs: int
    questions_presented: int
    eval_p1: float
    seconds: float
    improved: bool = False


def train_increment(prior: GaussianPrior, train_examples: list[FeaturizedExample],
                    validation_examples: list[FeaturizedExample],
                    rel_config: RelevanceConfig, config: BayesConfig,
                    eval_fn=None, dataset_index: int = 0,
                    seed: int | None = None) -> tuple[PosteriorSnapshot, IncrementReport]:
    """ELBO training on one dataset starting from the chained prior.

    One question and one noise sample per step; epoch early stop with the
    configured patience, evaluating validation P@1 at the posterior mean.
    """
    if not train_examples:
        raise BayesError("empty dataset")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    shuffle_rng = random.Random(seed)
    v = variational_from_prior(prior)
    kl_weight = 1.0 / len(train_examples)
    if eval_fn is None:
        eval_fn = lambda model: precision_at_1(validation_examples, model)

    best = v.copy()
    best_eval = -1.0
    stall = 0
    epochs = 0
    presented = 0
    lr = rel_config.learning_rate
    start = time.perf_counter()
    for _ in range(config.max_epochs):
        order = list(range(len(train_examples)))
        shuffle_rng.shuffle(order)
        for i in order:
            eps = rng.standard_normal(v.mu.size)
            _, grad_mu, grad_rho = elbo_loss(v, prior, train_examples[i], rel_config,
                                             kl_weight, eps)
            v.mu -= lr * grad_mu
            v.rho -= lr * grad_rho
        epochs += 1
        presented += len(train_examples)
        score = float(eval_fn(ModelParams.from_flat(v.mu, rel_config)))
        if score > best_eval:
            best_eval = score
            best = v.copy()
            stall = 0
        else:
            stall += 1
            if stall > config.epoch_patience:
                break
    snapshot = PosteriorSnapshot(params=best, datasets_consumed=[dataset_index], eval_p1=best_eval)
    report = IncrementReport(dataset_index=dataset_index, epochs=epochs,
                             questions_presented=presented, eval_p1=best_eval,
                             seconds=time.perf_counter() - start)
    return snapshot, report


def incremental_loop(datasets: list[tuple[list[FeaturizedExample], list[FeaturizedExample]]],
                     rel_config: RelevanceConfig, config: BayesConfig,
                     eval_fn=None) -> tuple[PosteriorSnapshot, list[IncrementReport]]:
    """Chain increments over a dataset stream with dataset-level patience.

    An increment that strictly improves the best validation P@1 updates the
    prior chain; after dataset_patience + 1 consecutive non-improving
    datasets the loop stops and the best snapshot is returned.
    """
    if not datasets:
        raise BayesError("no datasets")
    prior = GaussianPrior.standard(param_count(rel_config))
    best_snapshot = None
    best_eval = -1.0
    consumed: list[int] = []
    reports = []
    stall = 0
    for t, (train_examples, validation_examples) in enumerate(datasets):
        snapshot, report = train_increment(prior, train_examples, validation_examples,
                                           rel_config, config, eval_fn=eval_fn,
                                           dataset_index=t, seed=config.seed + t)
        if snapshot.eval_p1 > best_eval:
            best_eval = snapshot.eval_p1
            consumed = consumed + [t]
            snapshot.datasets_consumed = list(consumed)
            best_snapshot = snapshot
            prior = snapshot.to_prior()
            stall = 0
            report.improved = True
        else:
            stall += 1
            if stall > config.dataset_patience:
                reports.append(report)
                break
        reports.append(report)
    if best_snapshot is None:
        raise BayesError("no increment produced a usable snapshot")
    return best_snapshot, reports


def predict_test(v: VariationalParams, example: FeaturizedExample,
                 rel_config: RelevanceConfig, config: BayesConfig,
                 seed: int = 0) -> tuple[list[str], dict[str, np.ndarray]]:
    """Averaged prediction over n_test_samples sampled models plus the posterior mean."""
    rng = np.random.default_rng(seed)
    thetas = [v.mu]
    for _ in range(config.n_test_samples):
        theta, _ = sample_weights(v, rng)
        thetas.append(theta)
    avg = None
    for theta in thetas:
        fwd = forward(example, ModelParams.from_flat(theta, rel_config))
        probs = [p for p in fwd.probabilities]
        if avg is None:
            avg = [p.copy() for p in probs]
        else:
            for a, p in zip(avg, probs):
                a += p
    avg = [a / len(thetas) for a in avg]
    by_table = {tid: avg[i] for i, (tid, _, _) in enumerate(example.groups)}
    return rank_tables(by_table), by_table


def save_posterior(snapshot: PosteriorSnapshot, rel_config: RelevanceConfig,
                   path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    snapshot.params.mu.astype("<f8").tofile(path / "mu.f64")
    snapshot.params.rho.astype("<f8").tofile(path / "rho.f64")
    manifest = {"kind": "bayes", "feature_dim": rel_config.feature_dim,
                "proj_dim": rel_config.proj_dim, "count": int(snapshot.params.mu.size),
                "datasets_consumed": snapshot.datasets_consumed, "eval_p1": snapshot.eval_p1}
    manifest.update(meta or {})
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_posterior(path: str | Path) -> PosteriorSnapshot:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    mu = np.fromfile(path / "mu.f64", dtype="<f8")
    rho = np.fromfile(path / "rho.f64", dtype="<f8")
    return PosteriorSnapshot(params=VariationalParams(mu=mu, rho=rho),
                             datasets_consumed=manifest.get("datasets_consumed", []),
                             eval_p1=manifest.get("eval_p1", 0.0))
