"""Privacy-loss bookkeeping in terms of zero-concentrated differential privacy.

Costs are tracked as zCDP parameters ``rho`` and converted to classical
``(eps, delta)`` guarantees on demand.  Two batching regimes are supported:

* random reshuffling ("rf"): disjoint batches inside an epoch, so one epoch
  costs ``1/(2 sigma^2)`` regardless of the number of iterations, and epochs
  compose linearly on ``rho``;
* random sampling with replacement ("rs"): per-iteration charges
  ``q^2/sigma^2`` together with a cap ``u_alpha`` on the usable Renyi order,
  converted to ``(eps, delta)`` with a two-branch bound.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

from .errors import DomainError, PreconditionError, UsageError

#: Absolute slack used when comparing cumulative costs against a budget, so
#: that schedules engineered to consume a budget exactly (e.g. 100 epochs at
#: sigma=8 against 0.78125) are admitted despite float rounding.
BUDGET_TOL = 1e-12


class EpsDelta(NamedTuple):
    eps: float
    delta: float


class ClassicGaussianDP(NamedTuple):
    """Result of the classical Gaussian-mechanism bound.

    ``valid`` is False when the resulting eps falls outside (0, 1), the only
    range for which the classical tail bound is stated.
    """

    eps: float
    delta: float
    valid: bool


class LedgerStep(NamedTuple):
    epoch: Optional[int]
    iteration: Optional[int]
    q: Optional[float]
    sigma: float
    cost: float


@dataclass(frozen=True)
class GaussianMech:
    """One Gaussian release: noise N(0, (sigma * sensitivity)^2 I)."""

    sigma: float
    sensitivity: float = 1.0

    def __post_init__(self) -> None:
        _check_sigma(self.sigma)
        if self.sensitivity <= 0.0:
            raise DomainError(f"sensitivity must be positive, got {self.sensitivity}")

    @property
    def rho(self) -> float:
        return gaussian_rho(self.sigma)


@dataclass(frozen=True)
class SubsampledMech:
    """A Gaussian release applied to a Bernoulli(q) subsample."""

    q: float
    sigma: float

    def __post_init__(self) -> None:
        _check_sigma(self.sigma)
        if not (0.0 < self.q < 1.0):
            raise DomainError(f"sampling ratio q must lie in (0, 1), got {self.q}")

    @property
    def rho_hat(self) -> float:
        return self.q * self.q / (self.sigma * self.sigma)

    @property
    def order_cap(self) -> float:
        return rs_order_cap(self.q, self.sigma)

    def check_ratio(self) -> None:
        check_rs_ratio(self.q, self.sigma)


def _check_delta(delta: float) -> None:
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")


def _check_sigma(sigma: float) -> None:
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise DomainError(f"sigma must be a positive finite real, got {sigma}")


def gaussian_rho(sigma: float) -> float:
    """zCDP cost of one Gaussian mechanism with noise multiplier ``sigma``.

    Adding noise with standard deviation ``sigma`` times the query's L2
    sensitivity per coordinate satisfies ``1/(2 sigma^2)``-zCDP.
    """
    _check_sigma(sigma)
    return 1.0 / (2.0 * sigma * sigma)


def zcdp_to_dp(rho: float, delta: float) -> EpsDelta:
    """Convert ``rho``-zCDP to ``(eps, delta)``-DP.

    Uses ``eps = rho + 2 sqrt(rho log(1/delta))``.
    """
    if rho < 0.0 or not math.isfinite(rho):
        raise DomainError(f"rho must be a nonnegative finite real, got {rho}")
    _check_delta(delta)
    return EpsDelta(rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta)), delta)


def budget_rho_for_dp(eps: float, delta: float) -> float:
    """Largest ``rho`` whose zCDP-to-DP conversion yields exactly ``eps``.

    Exact inversion of :func:`zcdp_to_dp`:
    ``rho = (sqrt(L + eps) - sqrt(L))^2`` with ``L = log(1/delta)``.  This is
    the exact counterpart of the common approximation
    ``rho ~ eps^2 / (4 log(1/delta))``.
    """
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    _check_delta(delta)
    big_l = math.log(1.0 / delta)
    return (math.sqrt(big_l + eps) - math.sqrt(big_l)) ** 2


def classic_gaussian_dp(sigma: float, delta: float) -> ClassicGaussianDP:
    """Smallest eps for which the classical Gaussian bound holds at ``sigma``.

    Solves ``sigma^2 = 2 log(1.25/delta) / eps^2`` for eps.  The underlying
    tail bound is only stated for eps in (0, 1); outside that range the value
    is still returned but flagged invalid.
    """
    _check_sigma(sigma)
    _check_delta(delta)
    eps = math.sqrt(2.0 * math.log(1.25 / delta)) / sigma
    return ClassicGaussianDP(eps, delta, 0.0 < eps < 1.0)


def basic_composition(costs: Sequence[EpsDelta]) -> EpsDelta:
    """Linear composition: eps and delta both add up."""
    if len(costs) == 0:
        raise UsageError("basic_composition requires a nonempty cost list")
    return EpsDelta(sum(c.eps for c in costs), sum(c.delta for c in costs))


def amplify_by_sampling(eps: float, delta: float, q: float) -> EpsDelta:
    """Privacy amplification of an (eps, delta)-DP mechanism run on a
    Bernoulli(q) subsample: ``(log(1 + q (e^eps - 1)), q delta)``."""
    if not (0.0 < q <= 1.0):
        raise DomainError(f"sampling ratio q must lie in (0, 1], got {q}")
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    return EpsDelta(math.log1p(q * math.expm1(eps)), q * delta)


def strong_composition(eps: float, delta: float, k: int, delta_prime: float) -> EpsDelta:
    """k-fold strong composition of identical (eps, delta)-DP mechanisms.

    Returns ``(eps sqrt(2 k log(1/delta')) + k eps (e^eps - 1),
    k delta + delta')``.
    """
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    _check_delta(delta_prime)
    total_eps = eps * math.sqrt(2.0 * k * math.log(1.0 / delta_prime)) + k * eps * math.expm1(eps)
    return EpsDelta(total_eps, k * delta + delta_prime)


def amplified_strong_composition(
    eps0: float, delta0: float, q: float, k: int, delta_prime: float
) -> EpsDelta:
    """Strong-composition baseline for k subsampled-Gaussian iterations.

    Each step's (eps0, delta0) guarantee is first amplified by Bernoulli(q)
    sampling, then the k amplified steps are composed with the strong
    composition theorem using slack ``delta_prime``.  The resulting delta is
    ``k q delta0 + delta_prime``; no attempt is made to re-split delta0 so the
    total lands on a prescribed value.
    """
    per_step = amplify_by_sampling(eps0, delta0, q)
    return strong_composition(per_step.eps, per_step.delta, k, delta_prime)


def rs_order_cap(q: float, sigma: float) -> float:
    """Largest usable Renyi order for the subsampled Gaussian mechanism,
    ``sigma^2 log(1/(q sigma)) + 1``."""
    _check_sigma(sigma)
    if not (0.0 < q < 1.0):
        raise DomainError(f"sampling ratio q must lie in (0, 1), got {q}")
    if q * sigma >= 1.0:
        raise DomainError(f"q * sigma must be below 1, got {q * sigma}")
    return sigma * sigma * math.log(1.0 / (q * sigma)) + 1.0


def check_rs_ratio(q: float, sigma: float) -> None:
    """Validate the sampling-ratio bound ``q <= 1/(16 sigma)`` required by the
    moment bound underlying rs accounting."""
    _check_sigma(sigma)
    if not (0.0 < q < 1.0):
        raise DomainError(f"sampling ratio q must lie in (0, 1), got {q}")
    if q > 1.0 / (16.0 * sigma):
        raise PreconditionError(
            f"rs accounting requires q <= 1/(16 sigma); got q={q}, 1/(16 sigma)={1.0 / (16.0 * sigma):.6g}"
        )


def rs_eps(rho_hat: float, u_alpha: float, delta: float) -> float:
    """Two-branch (eps, delta) conversion for order-capped Renyi bounds.

    With divergence bounded by ``alpha * rho_hat`` for orders
    ``1 < alpha <= u_alpha``:

    * if ``delta >= exp(-rho_hat (u_alpha - 1)^2)`` the optimal order is
      interior and ``eps = rho_hat + 2 sqrt(rho_hat log(1/delta))``;
    * otherwise the cap binds and ``eps = rho_hat u_alpha
      - log(delta) / (u_alpha - 1)``.
    """
    if rho_hat < 0.0:
        raise DomainError(f"rho_hat must be nonnegative, got {rho_hat}")
    if u_alpha <= 1.0:
        raise DomainError(f"u_alpha must exceed 1, got {u_alpha}")
    _check_delta(delta)
    # Compare in log space: the threshold exp(-rho_hat (u-1)^2) underflows
    # long before the branch decision stops mattering.
    if math.log(delta) >= -rho_hat * (u_alpha - 1.0) ** 2:
        return rho_hat + 2.0 * math.sqrt(rho_hat * math.log(1.0 / delta))
    return rho_hat * u_alpha - math.log(delta) / (u_alpha - 1.0)


@dataclass
class PrivacyLedger:
    """Append-only record of privacy charges under one batching regime.

    In "rf" mode the ledger accumulates ``rho_sum`` per epoch; in "rs" mode it
    accumulates ``rho_hat`` per iteration together with the smallest usable
    order cap seen so far.  ``steps`` holds enough to replay the ledger, and
    :meth:`replay` must reproduce the running totals bit for bit.
    """

    mode: str
    rho_sum: float = 0.0
    rho_hat: float = 0.0
    u_alpha_min: float = math.inf
    steps: List[LedgerStep] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.mode not in ("rf", "rs"):
            raise UsageError(f"ledger mode must be 'rf' or 'rs', got {self.mode!r}")

    def charge_rf_epoch(self, sigma: float, epoch: Optional[int] = None) -> "PrivacyLedger":
        """Charge one epoch of reshuffled training at noise scale ``sigma``.

        Batches inside the epoch are disjoint, so the whole epoch costs
        ``1/(2 sigma^2)`` no matter how many iterations it contains.
        """
        if self.mode != "rf":
            raise UsageError("charge_rf_epoch requires an rf-mode ledger")
        cost = gaussian_rho(sigma)
        self.rho_sum += cost
        self.steps.append(LedgerStep(epoch, None, None, sigma, cost))
        return self

    def charge_rs_iteration(
        self,
        q: float,
        sigma: float,
        epoch: Optional[int] = None,
        iteration: Optional[int] = None,
    ) -> "PrivacyLedger":
        """Charge one sampled iteration: ``rho_hat += q^2/sigma^2`` and lower
        the order cap to ``min(u_alpha_min, sigma^2 log(1/(q sigma)) + 1)``."""
        if self.mode != "rs":
            raise UsageError("charge_rs_iteration requires an rs-mode ledger")
        check_rs_ratio(q, sigma)
        cost = q * q / (sigma * sigma)
        self.rho_hat += cost
        self.u_alpha_min = min(self.u_alpha_min, rs_order_cap(q, sigma))
        self.steps.append(LedgerStep(epoch, iteration, q, sigma, cost))
        return self

    @property
    def total_rho(self) -> float:
        return self.rho_sum if self.mode == "rf" else self.rho_hat

    def within_budget(self, rho_total: float, extra_cost: float = 0.0) -> bool:
        """Whether the ledger plus an optional tentative charge fits a budget."""
        return self.total_rho + extra_cost <= rho_total + BUDGET_TOL

    def to_dp(self, delta: float) -> EpsDelta:
        """Convert the cumulative cost to an (eps, delta) guarantee."""
        if self.mode == "rf":
            return zcdp_to_dp(self.rho_sum, delta)
        if not self.steps:
            raise UsageError("cannot convert an empty rs ledger")
        return EpsDelta(rs_eps(self.rho_hat, self.u_alpha_min, delta), delta)

    def replay(self) -> "PrivacyLedger":
        """Rebuild a fresh ledger from the recorded steps."""
        fresh = PrivacyLedger(self.mode)
        for step in self.steps:
            if self.mode == "rf":
                fresh.charge_rf_epoch(step.sigma, epoch=step.epoch)
            else:
                fresh.charge_rs_iteration(step.q, step.sigma, epoch=step.epoch, iteration=step.iteration)
        return fresh
