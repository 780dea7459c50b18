"""Weighted training of sequence classifiers, plus baseline weighting schemes.

One mini-batch step computes per-sample losses once and feeds two optimizers
from that single backward pass: the model parameters move under the weighted
loss gradient (weights treated as constants) and the weight-field coefficients
move under the loss-plus-hinge gradient (losses treated as constants). Test
rows never enter a batch, so trained parameters and inferred test weights are
independent of test features and labels.

Schemes:
    none        uniform unit weights
    spectral    learnable weights c + E a (a starts at zero)
    only_graph  fixed weights c + E 1 (a pinned to ones, never updated)
    jtt         two stage: unweighted run, then a fresh run up-weighting the
                first run's training mistakes by a constant factor
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import CohortDataset
from .errors import NumericalError
from .factor_graph import SpectralBasis
from .predictor import RecurrentClassifier, bce_grad_prob, bce_loss
from .seeding import rng_for
from .weight_field import WeightField, grad_a, negativity_penalty

SCHEMES = ("none", "spectral", "only_graph", "jtt")


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "spectral"
    epochs: int = 100
    lr_model: float = 1e-4
    lr_a: float = 1e-5
    batch_size: int = 32
    k_neighbors: int = 50
    centering_c: float = 0.65
    m_basis: int | str = "auto"
    jtt_lambda: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_model <= 0.0 or self.lr_a < 0.0:
            raise ValueError("learning rates must be positive (lr_a may be 0)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.jtt_lambda < 1.0:
            raise ValueError("jtt_lambda must be >= 1")


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim))


def adam_step(state: AdamState, params, grads, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != state.m.shape or grads.shape != state.m.shape:
        raise ValueError("parameter/gradient shape does not match optimizer state")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainHistory:
    epoch_losses: list[float] = field(default_factory=list)
    initial_objective: float = float("nan")
    final_objective: float = float("nan")


@dataclass
class TrainResult:
    model: object
    weight_field: WeightField | None
    history: TrainHistory
    jtt_weights: np.ndarray | None = None


def default_model_factory(feature_width: int, rng: np.random.Generator):
    return RecurrentClassifier(feature_width, hidden=64, fc=32, rng=rng)


def _split_arrays(data: CohortDataset, split):
    train_rows, test_rows = split
    train_rows = np.asarray(train_rows, dtype=np.intp)
    test_rows = np.asarray(test_rows, dtype=np.intp)
    merged = np.sort(np.concatenate([train_rows, test_rows]))
    if not np.array_equal(merged, np.arange(data.n_samples)):
        raise ValueError("split must partition the sample indices")
    if train_rows.size == 0:
        raise ValueError("empty training split")
    return np.sort(train_rows), np.sort(test_rows)


def _objective(data, model, rows, weights) -> float:
    """Mean per-sample weighted loss plus hinge penalty over the given rows."""
    total = 0.0
    for w, i in zip(weights, rows):
        p, _ = model.forward(data.subjects[i].visits)
        total += w * bce_loss(p, data.subjects[i].label)
    return (total + negativity_penalty(weights)) / len(rows)


def _run_loop(data, cfg, train_rows, seed, model_factory, batch_weights, after_batch=None):
    """Shared mini-batch engine for every scheme.

    `batch_weights(rows)` supplies current per-sample weights for a batch;
    `after_batch(rows, losses)` updates weight-field coefficients, if any.
    Both epoch shuffling and model initialization draw from named substreams
    of `seed` only, never from data values.
    """
    model = model_factory(data.feature_width, rng_for(seed, "init"))
    opt = AdamState.zeros(model.n_params)
    shuffle = rng_for(seed, "shuffle")
    history = TrainHistory()
    history.initial_objective = _objective(data, model, train_rows, batch_weights(train_rows))

    for epoch in range(cfg.epochs):
        order = shuffle.permutation(train_rows)
        batch_objectives = []
        for start in range(0, order.size, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            b = rows.size
            w = batch_weights(rows)
            losses = np.empty(b)
            grad = np.zeros(model.n_params)
            for j, i in enumerate(rows):
                subject = data.subjects[i]
                p, cache = model.forward(subject.visits)
                losses[j] = bce_loss(p, subject.label)
                upstream = w[j] * bce_grad_prob(p, subject.label) / b
                grad += model.backward(cache, upstream)
            model.set_flat_params(adam_step(opt, model.flat_params(), grad, cfg.lr_model))
            if after_batch is not None:
                after_batch(rows, losses)
            batch_objectives.append((float(w @ losses) + negativity_penalty(w)) / b)
        epoch_loss = float(np.mean(batch_objectives))
        if not np.isfinite(epoch_loss):
            raise NumericalError(f"non-finite objective at epoch {epoch}")
        history.epoch_losses.append(epoch_loss)

    if not np.all(np.isfinite(model.flat_params())):
        raise NumericalError("non-finite model parameters after training")
    history.final_objective = _objective(data, model, train_rows, batch_weights(train_rows))
    return model, history


def train_spectral(data: CohortDataset, basis: SpectralBasis, cfg: TrainConfig, split,
                   model_factory=default_model_factory) -> TrainResult:
    """Joint training of the model and the weight-field coefficients.

    Coefficients start at zero, so epoch 0 begins from uniform weights equal
    to the centering constant; with lr_a = 0 the whole run reduces exactly to
    uniform weighting by c.
    """
    train_rows, test_rows = _split_arrays(data, split)
    if basis.n_samples != data.n_samples:
        raise ValueError("basis rows must cover every sample")
    fld = WeightField.zeros(cfg.centering_c, basis, train_rows, test_rows)
    opt_a = AdamState.zeros(basis.m_count)

    def after_batch(rows, losses):
        if cfg.lr_a == 0.0 or basis.m_count == 0:
            return
        g = grad_a(fld, losses, rows) / rows.size
        fld.coeffs_a = adam_step(opt_a, fld.coeffs_a, g, cfg.lr_a)

    model, history = _run_loop(data, cfg, train_rows, cfg.seed, model_factory,
                               lambda rows: fld.weights(rows), after_batch)
    return TrainResult(model, fld, history)


def train_baseline_none(data: CohortDataset, cfg: TrainConfig, split,
                        model_factory=default_model_factory) -> TrainResult:
    """Unweighted baseline: unit weights, otherwise the identical loop."""
    train_rows, _ = _split_arrays(data, split)
    model, history = _run_loop(data, cfg, train_rows, cfg.seed, model_factory,
                               lambda rows: np.ones(rows.size))
    return TrainResult(model, None, history)


def train_only_graph(data: CohortDataset, basis: SpectralBasis, cfg: TrainConfig, split,
                     model_factory=default_model_factory) -> TrainResult:
    """Graph-only weighting: a pinned to ones, weights fixed for the whole run."""
    train_rows, test_rows = _split_arrays(data, split)
    if basis.n_samples != data.n_samples:
        raise ValueError("basis rows must cover every sample")
    fld = WeightField(cfg.centering_c, np.ones(basis.m_count), basis, train_rows, test_rows)
    model, history = _run_loop(data, cfg, train_rows, cfg.seed, model_factory,
                               lambda rows: fld.weights(rows))
    return TrainResult(model, fld, history)


def train_jtt(data: CohortDataset, cfg: TrainConfig, split,
              model_factory=default_model_factory) -> TrainResult:
    """Two-stage up-weighting of first-stage training mistakes.

    Stage one trains unweighted. Stage two restarts from a fresh
    initialization (seed + 1) with per-sample weights of 1 for samples the
    first model classified correctly at threshold 0.5 and jtt_lambda for the
    ones it missed. Both stages run the full epoch budget.
    """
    train_rows, _ = _split_arrays(data, split)
    stage1 = train_baseline_none(data, cfg, split, model_factory)

    weight_by_row = np.ones(data.n_samples)
    for i in train_rows:
        p, _ = stage1.model.forward(data.subjects[i].visits)
        correct = (p >= 0.5) == bool(data.subjects[i].label)
        weight_by_row[i] = 1.0 if correct else cfg.jtt_lambda

    model, history = _run_loop(data, cfg, train_rows, cfg.seed + 1, model_factory,
                               lambda rows: weight_by_row[rows])
    return TrainResult(model, None, history, jtt_weights=weight_by_row[train_rows])
