"""Mini-batch training with early stopping, and k-fold cross-validation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import SePredDataset
from .gnn import GnnParams, GraphBatch, backward_batch, forward_batch, predict_scores
from .metrics import MetricsReport, aggregate_reports, evaluate_scores
from .molgraph import MolGraph
from .nn import Adam, NumericalFault, bce_loss

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    state_dim: int = 32
    iterations: int = 6
    aggregation: float = 1.0
    state_hidden: tuple[int, ...] = (150, 150)
    output_hidden: tuple[int, ...] = (100, 100)

    def build(self, num_classes: int, seed) -> GnnParams:
        return GnnParams.create(
            num_classes,
            state_dim=self.state_dim,
            iterations=self.iterations,
            aggregation=self.aggregation,
            state_hidden=self.state_hidden,
            output_hidden=self.output_hidden,
            seed=seed,
        )


@dataclass
class TrainConfig:
    """Optimisation and stopping settings.

    ``loss_threshold`` stops training once the epoch's training loss is at or
    below it (``None`` disables). ``patience`` counts epochs without
    validation improvement (``None`` disables).
    """

    batch_size: int = 32
    max_epochs: int = 8000
    patience: int | None = 2000
    loss_threshold: float | None = 0.15
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-7
    k_folds: int = 5
    seed: int = 0
    validation_fraction: float = 0.1
    threshold: float = 0.5
    log_every: int = 100
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.loss_threshold is not None and self.loss_threshold <= 0:
            raise ValueError("loss_threshold must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    stop_reason: str = "max_epochs"
    best_epoch: int | None = None
    best_val_loss: float | None = None

    @property
    def train_loss(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    @property
    def val_loss(self) -> list[float]:
        return [e["val_loss"] for e in self.epochs]


def mean_loss(params: GnnParams, graphs: Sequence[MolGraph], batch_size: int = 256) -> float:
    """Mean BCE over all (graph, class) entries."""
    total = 0.0
    for i in range(0, len(graphs), batch_size):
        batch = GraphBatch(graphs[i : i + batch_size], params.dtype)
        y, _ = forward_batch(params, batch)
        total += bce_loss(y, batch.targets)[0] * batch.num_graphs
    return total / len(graphs)


def fit(
    params: GnnParams,
    train: Sequence[MolGraph],
    config: TrainConfig,
    val: Sequence[MolGraph] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[GnnParams, History]:
    """Train ``params`` in place; return the parameters to keep and the history.

    With a validation set, the returned parameters are those of the epoch
    with the lowest validation loss.
    """
    if not train:
        raise ValueError("empty training set")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    arrays = params.arrays()
    history = History()
    best: GnnParams | None = None
    wait = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = GraphBatch([train[i] for i in order[start : start + config.batch_size]], params.dtype)
            y, cache = forward_batch(params, batch)
            loss, grad_y = bce_loss(y, batch.targets)
            grads = backward_batch(params, batch, cache, grad_y)
            adam.step(arrays, grads.arrays())
            total += loss * batch.num_graphs
        train_loss = total / len(train)
        if not np.isfinite(train_loss):
            raise NumericalFault(f"non-finite training loss at epoch {epoch}")

        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": None}
        if val:
            val_loss = mean_loss(params, val)
            record["val_loss"] = val_loss
            if history.best_val_loss is None or val_loss < history.best_val_loss:
                history.best_val_loss, history.best_epoch = val_loss, epoch
                best = params.copy()
                wait = 0
            else:
                wait += 1
        history.epochs.append(record)
        if config.log_every and epoch % config.log_every == 0:
            log.info("epoch %d train %.5f val %s", epoch, train_loss, record["val_loss"])

        if val and config.patience is not None and wait >= config.patience:
            history.stop_reason = "patience"
            break
        if config.loss_threshold is not None and train_loss <= config.loss_threshold:
            history.stop_reason = "loss_threshold"
            break

    return (best if best is not None else params), history


def split_validation(indices: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    shuffled = rng.permutation(indices)
    n_val = min(max(1, int(round(fraction * len(indices)))), len(indices) - 1)
    return np.sort(shuffled[n_val:]), np.sort(shuffled[:n_val])


def train_fold(
    dataset: SePredDataset,
    test_fold: int,
    config: TrainConfig,
    params_init: GnnParams | None = None,
) -> tuple[GnnParams, History]:
    """Train on every fold except ``test_fold``, holding out a validation slice."""
    train_idx = np.flatnonzero(dataset.folds != test_fold)
    if len(train_idx) < 2:
        raise ValueError("need at least two training drugs")
    rng = np.random.default_rng([config.seed, test_fold])
    fit_idx, val_idx = split_validation(train_idx, config.validation_fraction, rng)
    if params_init is None:
        params_init = config.model.build(dataset.num_classes, rng)
    return fit(
        params_init,
        [dataset.drugs[i] for i in fit_idx],
        config,
        val=[dataset.drugs[i] for i in val_idx],
        rng=rng,
    )


def evaluate(params: GnnParams, dataset: SePredDataset, indices, threshold: float = 0.5) -> MetricsReport:
    graphs = [dataset.drugs[i] for i in indices]
    scores = predict_scores(params, graphs)
    targets = np.stack([g.target for g in graphs])
    return evaluate_scores(scores, targets, dataset.targets().sum(axis=0), threshold)


@dataclass
class CrossValidation:
    reports: list[MetricsReport]
    histories: list[History]
    aggregate: dict


def cross_validate(dataset: SePredDataset, config: TrainConfig, workers: int = 1) -> CrossValidation:
    """Train and evaluate one model per fold; aggregate mean and sample std."""
    k = dataset.k
    if k < 2:
        raise ValueError("dataset needs at least two folds")

    def run(fold: int):
        params, history = train_fold(dataset, fold, config)
        report = evaluate(params, dataset, dataset.fold_indices(fold), config.threshold)
        log.info("fold %d: accuracy %.2f auc %.2f aupr %.2f", fold, report.binary_accuracy, report.auc, report.aupr)
        return report, history

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(f) for f in range(k)]
    reports = [r for r, _ in results]
    return CrossValidation(reports, [h for _, h in results], aggregate_reports(reports))
