"""Optimization loop, hyperparameter search, and tuning-cost analysis.

``train`` runs Adam over a text classification task with per-epoch validation,
keeping the best-epoch parameters. ``grid_search`` sweeps a learning-rate grid
with a fixed seed; ``random_search`` samples the tuning distributions (log
learning rate uniform on [-8, -1] in natural log, dropout uniform on
[0, 0.5]). ``expected_validation_performance`` estimates the expected best
validation score after k random trials from n completed ones via the
order-statistic identity E[max of k] = sum_i s_(i) * ((i/n)^k - ((i-1)/n)^k).
"""

import copy
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .errors import ParameterError, TrainingDiverged
from .model import Model
from .tensor import Tape, cross_entropy
from .textdata import BatchIterator

LR_GRID = (0.001, 0.0005, 0.0002, 0.0001, 0.00005, 0.00002, 0.00001)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    dropout_p: float = 0.1
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParameterError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")


class Adam:
    """Adam with bias correction; lr=0 leaves parameters untouched."""

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)).astype(p.dtype)
            p.data = p.data - update

    def zero_grads(self):
        for p in self.params:
            p.grad = None


@dataclass
class TrialRecord:
    config: dict
    score: float
    seed: int
    wall_seconds: float


@dataclass
class TrainResult:
    model: Model
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = -np.inf
    wall_seconds: float = 0.0


@dataclass
class TextTask:
    """A loaded classification dataset plus its vocabulary."""

    train: list
    val: list
    vocab: object
    num_classes: int
    n_cap: int | None = None


def _accuracy(model, examples, vocab, batch_size, n_cap):
    it = BatchIterator(examples, vocab, batch_size=batch_size, n_cap=n_cap, seed=0)
    correct = total = 0
    for batch in it.eval_batches():
        logits = model.forward(batch.tokens, mask=batch.mask)
        pred = logits.data.argmax(axis=1)
        correct += int((pred == batch.labels).sum())
        total += len(batch.labels)
    return correct / max(total, 1)


def train(model_config, train_config, task, dtype=np.float64, log=None):
    """Train a fresh model; returns the best-epoch state and metric history.

    Raises TrainingDiverged (carrying the epoch index) on a non-finite loss.
    """
    start = time.perf_counter()
    from dataclasses import replace

    model_config = replace(model_config, dropout_p=train_config.dropout_p)
    model = Model.build(model_config, seed=train_config.seed, dtype=dtype)
    opt = Adam(model.parameters(), train_config.learning_rate,
               train_config.beta1, train_config.beta2, train_config.eps)
    rng = np.random.default_rng(train_config.seed)
    iterator = BatchIterator(task.train, task.vocab, batch_size=train_config.batch_size,
                             n_cap=task.n_cap, seed=train_config.seed)
    result = TrainResult(model=model)
    best_params = None
    for epoch in range(train_config.epochs):
        epoch_loss = 0.0
        num_batches = 0
        for batch in iterator.epoch(epoch):
            with Tape() as tape:
                logits = model.forward(batch.tokens, mask=batch.mask, training=True, rng=rng)
                loss = cross_entropy(logits, batch.labels)
                if not np.isfinite(loss.item()):
                    raise TrainingDiverged(epoch)
                tape.backward(loss)
            opt.step()
            opt.zero_grads()
            epoch_loss += loss.item()
            num_batches += 1
        val_acc = _accuracy(model, task.val, task.vocab, train_config.batch_size, task.n_cap)
        entry = {"epoch": epoch, "train_loss": epoch_loss / max(num_batches, 1), "val_accuracy": val_acc}
        result.history.append(entry)
        if log:
            log(entry)
        if val_acc > result.best_score:
            result.best_score = val_acc
            result.best_epoch = epoch
            best_params = [p.data.copy() for p in model.parameters()]
    if best_params is not None:
        for p, data in zip(model.parameters(), best_params):
            p.data = data
    result.wall_seconds = time.perf_counter() - start
    return result


def grid_search(model_config, grid, task, base=None, dtype=np.float64):
    """One trial per grid learning rate with a fixed seed; returns (best, records)."""
    if not grid:
        raise ParameterError("grid must be nonempty")
    base = base or TrainConfig(learning_rate=grid[0])
    records = []
    for lr in grid:
        from dataclasses import replace

        cfg = replace(base, learning_rate=lr)
        result = train(model_config, cfg, task, dtype=dtype)
        records.append(TrialRecord(
            config={"learning_rate": lr, "dropout_p": cfg.dropout_p},
            score=result.best_score,
            seed=cfg.seed,
            wall_seconds=result.wall_seconds,
        ))
    best = max(records, key=lambda r: r.score)
    return best, records


def sample_search_space(rng, log_lr_low=-8.0, log_lr_high=-1.0, dropout_high=0.5):
    """One random-search draw: natural-log-uniform learning rate, uniform dropout."""
    lr = float(np.exp(rng.uniform(log_lr_low, log_lr_high)))
    dropout_p = float(rng.uniform(0.0, dropout_high))
    return lr, dropout_p


def random_search(model_config, num_trials, seed, task, base=None, dtype=np.float64):
    """Random hyperparameter search; deterministic per seed."""
    if num_trials < 1:
        raise ParameterError("num_trials must be >= 1")
    rng = np.random.default_rng(seed)
    base = base or TrainConfig(learning_rate=1e-3)
    records = []
    for trial in range(num_trials):
        lr, dropout_p = sample_search_space(rng)
        from dataclasses import replace

        cfg = replace(base, learning_rate=lr, dropout_p=dropout_p, seed=seed + trial)
        result = train(model_config, cfg, task, dtype=dtype)
        records.append(TrialRecord(
            config={"learning_rate": lr, "dropout_p": dropout_p},
            score=result.best_score,
            seed=cfg.seed,
            wall_seconds=result.wall_seconds,
        ))
    return records


def expected_validation_performance(scores, k):
    """Expected best score after k random trials, from n observed scores."""
    if len(scores) == 0:
        raise ParameterError("scores must be nonempty")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = s.size
    i = np.arange(1, n + 1, dtype=np.float64)
    weights = (i / n) ** k - ((i - 1) / n) ** k
    return float((s * weights).sum())


def relative_improvement(score_a, score_b):
    """(a - b) / b; positive when a improves over the baseline b."""
    if score_b <= 0:
        raise ParameterError(f"baseline score must be positive, got {score_b}")
    return (score_a - score_b) / score_b


def write_trials(path, records):
    """Trial logs as JSON-lines: one record per line."""
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps({"config": r.config, "score": r.score, "seed": r.seed,
                                "wall_seconds": r.wall_seconds}, sort_keys=True) + "\n")
    return path


def read_trials(path):
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            records.append(TrialRecord(config=doc["config"], score=doc["score"],
                                       seed=doc["seed"], wall_seconds=doc["wall_seconds"]))
    return records


def snapshot_params(model):
    return [p.data.copy() for p in model.parameters()]


def restore_params(model, snapshot):
    for p, data in zip(model.parameters(), snapshot):
        p.data = data.copy()


def clone_model(model):
    return copy.deepcopy(model)
