"""Noise-scale schedules and privacy-budget arithmetic over training time.

A schedule maps the epoch index t (0-based: t=0 is the first epoch) to the
noise multiplier ``sigma_t``.  Five families are provided:

* ``uniform``:    sigma_t = sigma0
* ``time``:       sigma_t = sigma0 / (1 + k t)
* ``exp``:        sigma_t = sigma0 * exp(-k t)
* ``step``:       sigma_t = sigma0 * k^floor(t / period)
* ``poly``:       sigma_t = (sigma0 - sigma_end) (1 - t/period)^k + sigma_end
                  for t < period, then constant at sigma_end
* ``validation``: feedback-driven; sigma shrinks by factor k whenever the
                  moving-average validation accuracy stops improving (handled
                  by :class:`ValidationController`, not by ``sigma_at``).

``time`` and ``exp`` optionally apply the decay per period
(``t -> floor(t / period)``) instead of per epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import ConfigError, InfeasibleTargetError, UsageError
from .accounting import BUDGET_TOL, gaussian_rho

DECAY_KINDS = ("time", "exp", "step", "poly")
KINDS = ("uniform",) + DECAY_KINDS + ("validation",)


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    sigma0: float
    k: Optional[float] = None
    period: Optional[int] = None
    sigma_end: Optional[float] = None
    delta_thresh: Optional[float] = None
    m: Optional[int] = None
    per_period: bool = False  # time/exp only: decay on floor(t/period)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not (self.sigma0 > 0.0 and math.isfinite(self.sigma0)):
            raise ConfigError(f"sigma0 must be positive, got {self.sigma0}")
        if self.kind in ("time", "exp"):
            if self.k is None or self.k <= 0.0:
                raise ConfigError(f"{self.kind} decay requires k > 0, got {self.k}")
            if self.per_period and (self.period is None or self.period < 1):
                raise ConfigError("per-period decay requires a positive period")
        if self.kind == "step":
            if self.k is None or not (0.0 < self.k < 1.0):
                raise ConfigError(f"step decay requires 0 < k < 1, got {self.k}")
            if self.period is None or self.period < 1:
                raise ConfigError("step decay requires a positive period")
        if self.kind == "poly":
            if self.k is None or self.k <= 0.0:
                raise ConfigError(f"poly decay requires k > 0, got {self.k}")
            if self.period is None or self.period < 1:
                raise ConfigError("poly decay requires a positive period")
            if self.sigma_end is None or not (0.0 < self.sigma_end < self.sigma0):
                raise ConfigError("poly decay requires 0 < sigma_end < sigma0")
        if self.kind == "validation":
            if self.k is None or not (0.0 < self.k < 1.0):
                raise ConfigError(f"validation decay requires 0 < k < 1, got {self.k}")
            if self.period is None or self.period < 1:
                raise ConfigError("validation decay requires a positive checking period")
            if self.m is None or self.m < 1 or self.m > self.period:
                raise ConfigError("validation decay requires 1 <= m <= period")
            if self.delta_thresh is None:
                raise ConfigError("validation decay requires an improvement threshold")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "sigma0": self.sigma0}
        for key in ("k", "period", "sigma_end", "delta_thresh", "m"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.per_period:
            out["per_period"] = True
        return out

    @staticmethod
    def from_dict(d: dict) -> "NoiseSchedule":
        allowed = {"kind", "sigma0", "k", "period", "sigma_end", "delta_thresh", "m", "per_period"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
        if "kind" not in d or "sigma0" not in d:
            raise ConfigError("schedule config requires 'kind' and 'sigma0'")
        kwargs = dict(d)
        if "period" in kwargs:
            kwargs["period"] = int(kwargs["period"])
        if "m" in kwargs:
            kwargs["m"] = int(kwargs["m"])
        return NoiseSchedule(**kwargs)


def uniform(sigma0: float) -> NoiseSchedule:
    return NoiseSchedule("uniform", sigma0)


def time_decay(sigma0: float, k: float, per_period: bool = False, period: Optional[int] = None) -> NoiseSchedule:
    return NoiseSchedule("time", sigma0, k=k, per_period=per_period, period=period)


def exp_decay(sigma0: float, k: float, per_period: bool = False, period: Optional[int] = None) -> NoiseSchedule:
    return NoiseSchedule("exp", sigma0, k=k, per_period=per_period, period=period)


def step_decay(sigma0: float, k: float, period: int) -> NoiseSchedule:
    return NoiseSchedule("step", sigma0, k=k, period=period)


def poly_decay(sigma0: float, sigma_end: float, k: float, period: int) -> NoiseSchedule:
    return NoiseSchedule("poly", sigma0, k=k, period=period, sigma_end=sigma_end)


def validation_decay(sigma0: float, k: float, period: int, delta_thresh: float, m: int) -> NoiseSchedule:
    return NoiseSchedule("validation", sigma0, k=k, period=period, delta_thresh=delta_thresh, m=m)


def sigma_at(schedule: NoiseSchedule, t: int) -> float:
    """Noise scale of epoch ``t`` for a deterministic schedule."""
    if t < 0:
        raise ConfigError(f"epoch index must be nonnegative, got {t}")
    if schedule.kind == "validation":
        raise UsageError("validation schedules are stateful; use ValidationController")
    if schedule.kind == "uniform":
        return schedule.sigma0
    if schedule.kind in ("time", "exp"):
        u = t // schedule.period if schedule.per_period else t
        if schedule.kind == "time":
            return schedule.sigma0 / (1.0 + schedule.k * u)
        return schedule.sigma0 * math.exp(-schedule.k * u)
    if schedule.kind == "step":
        return schedule.sigma0 * schedule.k ** (t // schedule.period)
    # poly: constant after the decay horizon
    if t >= schedule.period:
        return schedule.sigma_end
    return (schedule.sigma0 - schedule.sigma_end) * (1.0 - t / schedule.period) ** schedule.k + schedule.sigma_end


@dataclass
class ValidationController:
    """Feedback controller for the validation-based schedule.

    ``observe`` is called once per validation epoch with that epoch's
    accuracy.  Every ``period`` validation epochs (and once at least ``m``
    accuracies exist) the controller compares the m-window moving average
    against the value at the previous check; an improvement of at most
    ``delta_thresh`` triggers one decay of sigma by the factor k.  Sigma is
    recomputed as ``sigma0 * k^n_triggers`` so repeated decays cannot drift.
    """

    schedule: NoiseSchedule
    history: List[float] = field(default_factory=list)
    last_checked_avg: float = 0.0
    n_triggers: int = 0

    def __post_init__(self) -> None:
        if self.schedule.kind != "validation":
            raise UsageError("ValidationController requires a validation schedule")

    @property
    def sigma(self) -> float:
        return self.schedule.sigma0 * self.schedule.k ** self.n_triggers

    def observe(self, accuracy: float) -> float:
        """Record one validation accuracy; returns the sigma to use next."""
        self.history.append(float(accuracy))
        n = len(self.history)
        if n % self.schedule.period == 0 and n >= self.schedule.m:
            window = self.history[-self.schedule.m:]
            avg = sum(window) / len(window)
            if avg - self.last_checked_avg <= self.schedule.delta_thresh:
                self.n_triggers += 1
            self.last_checked_avg = avg
        return self.sigma


def epochs_until_exhaustion(schedule: NoiseSchedule, rho_total: float, max_epochs: int = 1_000_000) -> int:
    """Largest E such that the first E epochs fit within ``rho_total``.

    Charges accrue before each epoch (epoch t costs ``1/(2 sigma_t^2)``), so
    the returned count is exactly the number of epochs a budget-checked
    training run will execute.
    """
    if schedule.kind == "validation":
        raise UsageError("exhaustion horizon is undefined for data-dependent schedules")
    if rho_total < 0.0:
        raise ConfigError(f"rho_total must be nonnegative, got {rho_total}")
    total = 0.0
    epoch = 0
    while epoch < max_epochs:
        cost = gaussian_rho(sigma_at(schedule, epoch))
        if total + cost > rho_total + BUDGET_TOL:
            return epoch
        total += cost
        epoch += 1
    return epoch


def uniform_sigma_for_epochs(epochs: int, rho_total: float) -> float:
    """Constant noise scale spending ``rho_total`` in exactly ``epochs``
    epochs: ``sqrt(epochs / (2 rho_total))``."""
    if epochs < 1:
        raise ConfigError(f"epochs must be at least 1, got {epochs}")
    if rho_total <= 0.0:
        raise ConfigError(f"rho_total must be positive, got {rho_total}")
    return math.sqrt(epochs / (2.0 * rho_total))


def _schedule_for_k(kind: str, sigma0: float, k: float, period: Optional[int], sigma_end: Optional[float]) -> NoiseSchedule:
    if kind == "time":
        return time_decay(sigma0, k)
    if kind == "exp":
        return exp_decay(sigma0, k)
    if kind == "step":
        if period is None:
            raise ConfigError("step decay solving requires a period")
        return step_decay(sigma0, k, period)
    if kind == "poly":
        if period is None or sigma_end is None:
            raise ConfigError("poly decay solving requires period and sigma_end")
        return poly_decay(sigma0, sigma_end, k, period)
    raise ConfigError(f"cannot solve decay rate for kind {kind!r}")


def solve_decay_rate(
    kind: str,
    sigma0: float,
    rho_total: float,
    target_epochs: int,
    grid: float = 1e-4,
    period: Optional[int] = None,
    sigma_end: Optional[float] = None,
) -> float:
    """Smallest decay rate on the ``grid`` lattice that exhausts ``rho_total``
    in exactly ``target_epochs`` epochs.

    The training horizon is monotone in k (nonincreasing for time/exp/poly,
    nondecreasing for step), so the boundary is located by bisection over
    grid indices and then verified; a target skipped by the integer-valued
    horizon raises :class:`InfeasibleTargetError`.
    """
    if kind not in DECAY_KINDS:
        raise ConfigError(f"kind must be one of {DECAY_KINDS}, got {kind!r}")
    if target_epochs < 1:
        raise ConfigError(f"target_epochs must be at least 1, got {target_epochs}")

    def horizon(index: int) -> int:
        sched = _schedule_for_k(kind, sigma0, index * grid, period, sigma_end)
        return epochs_until_exhaustion(sched, rho_total)

    # Search ranges: step factors must stay below 1 by definition; time/exp
    # rates are searched up to 1.0 (already exhausting any practical budget
    # within a few epochs); poly powers reach the single digits, so cap at 16.
    if kind == "poly":
        hi_index = int(round(16.0 / grid))
    elif kind == "step":
        hi_index = int(round(1.0 / grid)) - 1
    else:
        hi_index = int(round(1.0 / grid))
    lo_index = 1

    increasing = kind == "step"  # slower decay (larger k) -> more epochs
    feasible_lo = horizon(lo_index)
    feasible_hi = horizon(hi_index)
    attainable = (
        min(feasible_hi, feasible_lo) <= target_epochs <= max(feasible_hi, feasible_lo)
    )
    if not attainable:
        raise InfeasibleTargetError(
            f"{kind} decay cannot reach {target_epochs} epochs on the grid: "
            f"horizon ranges over [{min(feasible_lo, feasible_hi)}, {max(feasible_lo, feasible_hi)}]"
        )

    lo, hi = lo_index, hi_index
    while lo < hi:
        mid = (lo + hi) // 2
        reached = horizon(mid)
        at_or_past = reached >= target_epochs if increasing else reached <= target_epochs
        if at_or_past:
            hi = mid
        else:
            lo = mid + 1
    k = lo * grid
    if horizon(lo) != target_epochs:
        raise InfeasibleTargetError(
            f"{kind} decay skips a horizon of exactly {target_epochs} epochs "
            f"on the {grid:g} grid (nearest attained: {horizon(lo)})"
        )
    return k
