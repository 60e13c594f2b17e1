"""Valuation resolution and financial / social incentive machinery.

Valuations map converged opinion levels into per-device willingness to
pay, clamped between the base price and its scenario ceiling. Financial
incentives pay for verified reductions below the preference-implied
energy in qualifying periods. Social incentives shift the preferences of
enrolled households by their flexibility in the direction of the
demand-response reference signal; the implied utility difference is
reported for accounting but never added to fitness (the shift itself is
what moves behavior).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import PriceModel, theta_signal


class IncentiveError(ValueError):
    """Invalid incentive configuration."""


@dataclass(frozen=True)
class ValuationModel:
    """alpha = clamp(factor * beta0 * opinion * device_weight, beta0, factor*beta0)."""

    factor: float
    device_weights: tuple

    def validate(self) -> None:
        if self.factor <= 1.0:
            raise IncentiveError(
                f"valuation factor {self.factor} must exceed 1; below the "
                "energy price every strategy is dominated by shutting off"
            )
        if any(w <= 0 for w in self.device_weights):
            raise IncentiveError("device weights must be positive")


@dataclass(frozen=True)
class FinancialIncentive:
    gamma: float  # currency per kWh of verified reduction
    qualifying_periods: tuple

    def validate(self) -> None:
        if self.gamma < 0:
            raise IncentiveError(f"gamma={self.gamma} must be non-negative")


@dataclass(frozen=True)
class SocialIncentive:
    eps_flex: float  # preference shift for enrolled households
    direction: int  # -1 reduce, +1 increase on qualifying periods
    qualifying_periods: tuple
    engagement: np.ndarray = field(default=None)  # per-household 0/1 draws

    def validate(self) -> None:
        if not 0.0 <= self.eps_flex <= 1.0:
            raise IncentiveError(f"eps_flex={self.eps_flex} outside [0, 1]")
        if self.direction not in (-1, 0, 1):
            raise IncentiveError(f"direction={self.direction} not in {{-1, 0, 1}}")


def resolve_valuations(
    sigma_val: np.ndarray,
    factor: float,
    price: PriceModel,
    device_weights,
) -> np.ndarray:
    """Per-household-device valuations from converged opinions.

    Returns (households, devices); every entry lies in
    [beta0, factor * beta0].
    """
    weights = np.asarray(device_weights, dtype=float)
    ValuationModel(factor=factor, device_weights=tuple(weights)).validate()
    sigma = np.asarray(sigma_val, dtype=float)
    if np.any(sigma < 0) or np.any(sigma > 1):
        raise IncentiveError("opinions must lie in [0, 1]")
    raw = factor * price.beta0 * sigma[:, None] * weights[None, :]
    return np.clip(raw, price.beta0, factor * price.beta0)


def qualify_periods(aggregate_profile: np.ndarray, rule) -> tuple:
    """Resolve which periods receive incentives.

    rule is either {"periods": [...]} (returned verbatim after range
    checks) or {"quantile": q} (periods whose aggregate is at or above
    that quantile of the profile).
    """
    profile = np.asarray(aggregate_profile, dtype=float)
    n = profile.size
    if "periods" in rule:
        periods = tuple(int(p) for p in rule["periods"])
        for p in periods:
            if not 0 <= p < n:
                raise IncentiveError(f"qualifying period {p} outside 0..{n - 1}")
        if len(set(periods)) != len(periods):
            raise IncentiveError("qualifying periods contain duplicates")
        return tuple(sorted(periods))
    if "quantile" in rule:
        q = float(rule["quantile"])
        if not 0.0 <= q <= 1.0:
            raise IncentiveError(f"quantile {q} outside [0, 1]")
        cut = np.quantile(profile, q)
        return tuple(int(p) for p in np.nonzero(profile >= cut)[0])
    raise IncentiveError(f"unknown qualifying rule {rule!r}")


def financial_bonus(q_pref_kwh: float, q_chosen_kwh: float, gamma: float) -> float:
    """Reward for consuming below the preference-implied energy; never negative."""
    if gamma < 0:
        raise IncentiveError(f"gamma={gamma} must be non-negative")
    return gamma * max(0.0, q_pref_kwh - q_chosen_kwh)


def draw_engagement(sigma_dr: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One enrollment draw per household: 1 with probability sigma_dr."""
    sigma = np.asarray(sigma_dr, dtype=float)
    if np.any(sigma < 0) or np.any(sigma > 1):
        raise IncentiveError("enrollment probabilities must lie in [0, 1]")
    return (rng.random(sigma.shape) < sigma).astype(np.int8)


def incentivize_preferences(
    theta: np.ndarray,
    engagement: np.ndarray,
    direction: int,
    eps_flex: float,
) -> np.ndarray:
    """Shifted preferences clamp(theta + C * r * eps_flex, 0, 1).

    theta is (households, devices); engagement broadcasts per household.
    direction 0 (non-qualifying period) leaves theta untouched.
    """
    theta = np.asarray(theta, dtype=float)
    c = np.asarray(engagement, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    return np.clip(theta + c * direction * eps_flex, 0.0, 1.0)


def social_incentive_value(
    alpha: np.ndarray,
    theta_natural: np.ndarray,
    theta_inc: np.ndarray,
    elasticity: np.ndarray,
    duty: np.ndarray,
) -> np.ndarray:
    """Per-entry utility difference between the shifted and natural
    preference at the same allocation; the cost terms cancel."""
    v_inc = theta_signal(duty, theta_inc, elasticity)
    v_nat = theta_signal(duty, theta_natural, elasticity)
    return np.asarray(alpha) * (v_inc - v_nat)
