"""Synthetic prediction oracles built by perturbing an integral optimum."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    EPS,
    AdAuctionInstance,
    BoundedAllocationInstance,
    FractionalAllocation,
    Instance,
    InvalidInputError,
    Prediction,
    budget_feasible_mapping,
)
from .rng import stream


@dataclass(frozen=True)
class OracleConfig:
    error_rate: float
    seed: int = 0
    mode: str = "bounded"
    # literal "|S_j minus {i*}| > 1" reading (items with a single alternative stay put)
    strict_alternatives: bool = False
    # perturb exactly round(error_rate * eligible) items instead of each with probability error_rate
    fixed_fraction: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.error_rate <= 1.0:
            raise InvalidInputError(f"error_rate must lie in [0, 1], got {self.error_rate}")
        if self.mode not in ("bounded", "auction"):
            raise InvalidInputError(f"unknown oracle mode {self.mode!r}")


def _pick(config: OracleConfig, n_items: int, eligible: Sequence[int]) -> tuple[set[int], list[float]]:
    """Items selected for perturbation plus one uniform draw per item for the replacement."""
    rng = stream(config.seed)
    u = rng.random(n_items)
    v = rng.random(n_items)
    if config.fixed_fraction:
        k = int(round(config.error_rate * len(eligible)))
        chosen = set(sorted(eligible, key=lambda j: (u[j], j))[:k])
    else:
        chosen = {j for j in eligible if u[j] < config.error_rate}
    return chosen, v.tolist()


def perturb_bounded(
    instance: BoundedAllocationInstance, base: Sequence[int], config: OracleConfig
) -> Prediction:
    """Replace the base buyer by a uniformly random other interested buyer.

    Items with a single interested buyer are never touched.
    """
    if len(base) != instance.n_items:
        raise InvalidInputError("base mapping length does not match the item count")
    need = 2 if config.strict_alternatives else 1
    eligible = []
    for j, item in enumerate(instance.items):
        if base[j] and base[j] not in item.interested:
            raise InvalidInputError(f"item {j}: base buyer {base[j]} is not interested")
        alts = [i for i in item.interested if i != base[j]]
        if len(item.interested) > 1 and len(alts) >= need:
            eligible.append(j)
    chosen, v = _pick(config, instance.n_items, eligible)
    pred = list(base)
    for j in sorted(chosen):
        alts = [i for i in instance.items[j].interested if i != base[j]]
        pred[j] = alts[min(int(v[j] * len(alts)), len(alts) - 1)]
    return Prediction(tuple(pred))


def perturb_auction(
    instance: AdAuctionInstance, base: Sequence[int], config: OracleConfig
) -> Prediction:
    """Redraw the buyer of selected items among their positive bidders.

    A redraw is committed only if the whole mapping stays within budget given
    the swaps already committed (items are visited in arrival order).
    """
    if len(base) != instance.n_items:
        raise InvalidInputError("base mapping length does not match the item count")
    bad = budget_feasible_mapping(instance, base)
    if bad:
        raise InvalidInputError(f"base mapping is not budget-feasible (buyers {bad[:5]})")
    load = [0.0] * (instance.n_buyers + 1)
    for j, i in enumerate(base):
        if i:
            load[i] += instance.items[j][i]
    eligible = [j for j, bids in enumerate(instance.items) if bids]
    chosen, v = _pick(config, instance.n_items, eligible)
    pred = list(base)
    for j in sorted(chosen):
        bids = instance.items[j]
        bidders = sorted(bids)
        new = bidders[min(int(v[j] * len(bidders)), len(bidders) - 1)]
        old = pred[j]
        if new == old:
            continue
        if load[new] + bids[new] <= instance.budgets[new - 1] * (1 + EPS):
            load[new] += bids[new]
            if old:
                load[old] -= bids[old]
            pred[j] = new
    return Prediction(tuple(pred))


def perturb(instance: Instance, base: Sequence[int], config: OracleConfig) -> Prediction:
    if isinstance(instance, BoundedAllocationInstance):
        return perturb_bounded(instance, base, config)
    return perturb_auction(instance, base, config)


@dataclass
class PredictionValue:
    value: float
    feasible: bool
    violations: list[int] = field(default_factory=list)

    def __float__(self) -> float:
        return self.value


def prediction_value(instance: Instance, prediction: Prediction) -> PredictionValue:
    """Revenue of selling every item wholly to its predicted buyer; 0 if that breaks a budget."""
    prediction.validate_for(instance)
    bad = budget_feasible_mapping(instance, prediction.pred)
    if bad:
        return PredictionValue(0.0, False, bad)
    total = sum(instance.prices(j)[i] for j, i in enumerate(prediction.pred) if i)
    return PredictionValue(float(total), True)


def changed_fraction(base: Sequence[int], prediction: Prediction) -> float:
    if not base:
        return 0.0
    return sum(1 for a, b in zip(base, prediction.pred) if a != b) / len(base)


def follow_prediction(instance: Instance, prediction: Prediction) -> FractionalAllocation:
    """Baseline: sell each item wholly to its predicted buyer whenever the budget still allows."""
    prediction.validate_for(instance)
    residual = [0.0, *instance.budgets]
    alloc = FractionalAllocation(instance.n_buyers, instance.n_items)
    for j, i in enumerate(prediction.pred):
        p = instance.prices(j).get(i) if i else None
        if p is not None and p <= residual[i] * (1 + EPS):
            residual[i] -= p
            alloc.add(i, j, 1.0)
        else:
            alloc.add(0, j, 1.0)
    return alloc


def oracle_metadata(config: OracleConfig, base_optimal: bool) -> dict[str, object]:
    return {
        "seed": config.seed,
        "error_rate": config.error_rate,
        "mode": config.mode,
        "base_optimal": base_optimal,
    }
