"""Differentially private SGD with budget-checked termination.

The loop follows a strict charge-before-compute rule: an epoch (under
reshuffling) or an iteration (under sampling) is admitted to the ledger
before any of its gradients are computed, and training stops as soon as the
next charge would overrun the budget.  Noise scales come from a
:class:`~dpbudget.schedules.NoiseSchedule`, including the feedback-driven
validation schedule.

Randomness is a single seeded numpy PCG64 generator consumed in a fixed
order (batching first, then noise, per step), so a (config, seed) pair
reproduces its report bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from . import nn
from .accounting import EpsDelta, PrivacyLedger, rs_eps, rs_order_cap, zcdp_to_dp
from .data import Dataset, rf_batches, rs_batch
from .errors import ConfigError, DomainError, PreconditionError
from .schedules import NoiseSchedule, ValidationController, sigma_at


def clip_gradient(g: np.ndarray, clip_norm: float) -> np.ndarray:
    """Rescale ``g`` to L2 norm at most ``clip_norm``: g / max(1, |g|/C)."""
    if clip_norm <= 0.0:
        raise DomainError(f"clip_norm must be positive, got {clip_norm}")
    norm = float(np.linalg.norm(g))
    return g / max(1.0, norm / clip_norm)


def clip_rows(per_example: np.ndarray, clip_norm: float) -> np.ndarray:
    """Row-wise clipping of an (n_examples, n_params) gradient matrix."""
    if clip_norm <= 0.0:
        raise DomainError(f"clip_norm must be positive, got {clip_norm}")
    norms = np.linalg.norm(per_example, axis=1)
    scale = np.minimum(1.0, clip_norm / np.maximum(norms, np.finfo(np.float64).tiny))
    return per_example * scale[:, None]


def noisy_mean_gradient(
    per_example: np.ndarray,
    clip_norm: float,
    sigma: float,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """(sum of clipped per-example gradients + N(0, (sigma C)^2 I)) / B."""
    if per_example.ndim != 2 or len(per_example) == 0:
        raise DomainError("per_example must be a nonempty (n, params) matrix")
    if batch_size < 1:
        raise DomainError(f"batch_size must be positive, got {batch_size}")
    total = clip_rows(per_example, clip_norm).sum(axis=0)
    if sigma > 0.0:
        total = total + rng.normal(0.0, sigma * clip_norm, size=total.shape)
    return total / batch_size


@dataclass(frozen=True)
class TrainConfig:
    schedule: NoiseSchedule
    clip_norm: float
    max_epochs: int
    seed: int
    batching: str = "rf"
    batch_size: Optional[int] = None      # rf; defaults to the full dataset
    q: Optional[float] = None             # rs sampling ratio
    iters_per_epoch: Optional[int] = None  # rs; defaults to round(1/q)
    rho_total: Optional[float] = None     # rf budget
    eps_total: Optional[float] = None     # rs budget at reporting delta
    delta: float = 1e-5
    lr: float = 0.05
    lr_end: Optional[float] = None
    lr_ramp_epochs: int = 0
    per_layer_clip: bool = False

    def __post_init__(self) -> None:
        if self.batching not in ("rf", "rs"):
            raise ConfigError(f"batching must be 'rf' or 'rs', got {self.batching!r}")
        if self.clip_norm <= 0.0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be nonnegative, got {self.max_epochs}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.batching == "rf" and self.rho_total is None:
            raise ConfigError("rf training requires a rho_total budget")
        if self.batching == "rs":
            if self.q is None or not (0.0 < self.q < 1.0):
                raise ConfigError("rs training requires q in (0, 1)")
            if self.eps_total is None:
                raise ConfigError("rs training requires an eps_total budget")

    def lr_at(self, epoch: int) -> float:
        if self.lr_end is None or self.lr_ramp_epochs <= 0:
            return self.lr
        if epoch >= self.lr_ramp_epochs:
            return self.lr_end
        frac = epoch / self.lr_ramp_epochs
        return self.lr + (self.lr_end - self.lr) * frac


class EpochRecord(NamedTuple):
    epoch: int
    sigma: float
    train_acc: float
    test_acc: Optional[float]
    val_acc: Optional[float]
    cum_rho: float
    cum_eps: float


@dataclass
class TrainReport:
    epochs_run: int
    records: List[EpochRecord]
    stop_reason: str  # "budget_exhausted" or "max_epochs"
    final_privacy: EpsDelta
    total_rho: float
    seed: int
    ledger: PrivacyLedger = field(repr=False, default=None)


def _layer_slices(model: nn.MlpModel) -> List[slice]:
    slices = []
    offset = 0
    for w, b in zip(model.weights, model.biases):
        size = w.size + b.size
        slices.append(slice(offset, offset + size))
        offset += size
    return slices


def _clipped_sum(flat: np.ndarray, config: TrainConfig, slices: List[slice]) -> np.ndarray:
    if not config.per_layer_clip:
        return clip_rows(flat, config.clip_norm).sum(axis=0)
    out = np.empty(flat.shape[1])
    for s in slices:
        out[s] = clip_rows(flat[:, s], config.clip_norm).sum(axis=0)
    return out


def _noisy_update(
    model: nn.MlpModel,
    batch: Dataset,
    indices: np.ndarray,
    sigma: float,
    lr: float,
    config: TrainConfig,
    slices: List[slice],
    rng: np.random.Generator,
) -> None:
    grads = nn.per_example_gradients(model, batch.features[indices], batch.labels[indices])
    flat = nn.flatten_per_example(grads)
    total = _clipped_sum(flat, config, slices)
    if sigma > 0.0:
        total = total + rng.normal(0.0, sigma * config.clip_norm, size=total.shape)
    nn.sgd_step(model, nn.unflatten_gradient(model, total / len(indices)), lr)


def train(
    config: TrainConfig,
    train_data: Dataset,
    model: nn.MlpModel,
    test_data: Optional[Dataset] = None,
    validation_data: Optional[Dataset] = None,
) -> TrainReport:
    """Run budget-checked DP-SGD; the model is updated in place."""
    rng = np.random.default_rng(config.seed)
    slices = _layer_slices(model)
    n = len(train_data)
    n_layers = len(model.weights)

    controller: Optional[ValidationController] = None
    if config.schedule.kind == "validation":
        if validation_data is None:
            raise ConfigError("the validation schedule requires validation data")
        controller = ValidationController(config.schedule)

    ledger = PrivacyLedger(config.batching)
    records: List[EpochRecord] = []
    stop_reason = "max_epochs"

    def snapshot(epoch: int, sigma: float) -> None:
        eps = ledger.to_dp(config.delta).eps if ledger.steps else 0.0
        records.append(
            EpochRecord(
                epoch=epoch,
                sigma=sigma,
                train_acc=nn.accuracy(model, train_data.features, train_data.labels),
                test_acc=nn.accuracy(model, test_data.features, test_data.labels) if test_data is not None else None,
                val_acc=nn.accuracy(model, validation_data.features, validation_data.labels) if validation_data is not None else None,
                cum_rho=ledger.total_rho,
                cum_eps=eps,
            )
        )

    for epoch in range(config.max_epochs):
        if controller is not None:
            sigma = controller.sigma
        else:
            sigma = sigma_at(config.schedule, epoch)

        if config.batching == "rf":
            # Per-layer clipping releases one mechanism per layer on the same
            # batch, so an epoch costs n_layers times the single-release rho.
            epoch_cost = (n_layers if config.per_layer_clip else 1) / (2.0 * sigma * sigma)
            if not ledger.within_budget(config.rho_total, extra_cost=epoch_cost):
                stop_reason = "budget_exhausted"
                break
            for _ in range(n_layers if config.per_layer_clip else 1):
                ledger.charge_rf_epoch(sigma, epoch=epoch)
            batch_size = config.batch_size or n
            for indices in rf_batches(n, batch_size, rng):
                _noisy_update(model, train_data, indices, sigma, config.lr_at(epoch), config, slices, rng)
        else:
            iters = config.iters_per_epoch or max(1, round(1.0 / config.q))
            stopped = False
            for it in range(iters):
                if config.q > 1.0 / (16.0 * sigma):
                    raise PreconditionError(
                        f"rs step at epoch {epoch} violates q <= 1/(16 sigma): q={config.q}, sigma={sigma}"
                    )
                # Admit the charge only if the resulting spend stays in budget.
                candidate_rho = ledger.rho_hat + config.q * config.q / (sigma * sigma)
                candidate_u = min(ledger.u_alpha_min, rs_order_cap(config.q, sigma))
                if rs_eps(candidate_rho, candidate_u, config.delta) > config.eps_total:
                    stop_reason = "budget_exhausted"
                    stopped = True
                    break
                ledger.charge_rs_iteration(config.q, sigma, epoch=epoch, iteration=it)
                indices = rs_batch(n, config.q, rng)
                if len(indices) == 0:
                    continue
                _noisy_update(model, train_data, indices, sigma, config.lr_at(epoch), config, slices, rng)
            if stopped:
                break

        snapshot(epoch, sigma)
        if controller is not None:
            val_acc = records[-1].val_acc
            controller.observe(val_acc)

    if config.batching == "rf":
        final = zcdp_to_dp(ledger.rho_sum, config.delta)
    else:
        final = ledger.to_dp(config.delta) if ledger.steps else EpsDelta(0.0, config.delta)

    return TrainReport(
        epochs_run=len(records),
        records=records,
        stop_reason=stop_reason,
        final_privacy=final,
        total_rho=ledger.total_rho,
        seed=config.seed,
        ledger=ledger,
    )
