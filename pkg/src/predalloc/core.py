"""Shared domain types, feasibility checks and revenue metrics.

Buyers are numbered ``1..n``; index ``0`` is the fictitious buyer that absorbs
unsold fractions (infinite budget, bid 0). Items are numbered ``0..m-1`` in
arrival order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

EPS = 1e-9


class InvalidInputError(ValueError):
    """Raised when an instance, prediction or parameter violates its contract."""


@dataclass(frozen=True)
class BoundedItem:
    price: float
    interested: tuple[int, ...]


@dataclass(frozen=True)
class BoundedAllocationInstance:
    """Fixed-price items, each with the set of interested buyers."""

    budgets: tuple[float, ...]
    items: tuple[BoundedItem, ...]

    kind = "bounded"

    def __post_init__(self) -> None:
        n = len(self.budgets)
        for i, b in enumerate(self.budgets, start=1):
            if not (b > 0 and math.isfinite(b)):
                raise InvalidInputError(f"buyer {i}: budget must be positive and finite, got {b}")
        for j, item in enumerate(self.items):
            if not (item.price > 0 and math.isfinite(item.price)):
                raise InvalidInputError(f"item {j}: price must be positive, got {item.price}")
            if not item.interested:
                raise InvalidInputError(f"item {j}: interested set is empty")
            if len(set(item.interested)) != len(item.interested):
                raise InvalidInputError(f"item {j}: duplicate buyers in interested set")
            for i in item.interested:
                if not 1 <= i <= n:
                    raise InvalidInputError(f"item {j}: unknown buyer {i}")

    @classmethod
    def build(
        cls, budgets: Iterable[float], items: Iterable[tuple[float, Iterable[int]]]
    ) -> "BoundedAllocationInstance":
        return cls(
            tuple(float(b) for b in budgets),
            tuple(BoundedItem(float(p), tuple(sorted(int(i) for i in s))) for p, s in items),
        )

    @property
    def n_buyers(self) -> int:
        return len(self.budgets)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def d(self) -> int:
        """Largest interested-set size (0 for an empty stream)."""
        return max((len(it.interested) for it in self.items), default=0)

    def budget(self, i: int) -> float:
        return math.inf if i == 0 else self.budgets[i - 1]

    @cached_property
    def _price_maps(self) -> tuple[dict[int, float], ...]:
        return tuple({i: it.price for i in it.interested} for it in self.items)

    def prices(self, j: int) -> dict[int, float]:
        """Buyer -> price for item ``j`` (shared; do not mutate)."""
        return self._price_maps[j]


@dataclass(frozen=True)
class AdAuctionInstance:
    """Items carrying a sparse bid per buyer; absent buyers bid 0."""

    budgets: tuple[float, ...]
    items: tuple[Mapping[int, float], ...]
    declared_r_max: float | None = None

    kind = "auction"

    def __post_init__(self) -> None:
        n = len(self.budgets)
        for i, b in enumerate(self.budgets, start=1):
            if not (b > 0 and math.isfinite(b)):
                raise InvalidInputError(f"buyer {i}: budget must be positive and finite, got {b}")
        for j, bids in enumerate(self.items):
            for i, v in bids.items():
                if not 1 <= i <= n:
                    raise InvalidInputError(f"item {j}: unknown buyer {i}")
                if not (v >= 0 and math.isfinite(v)):
                    raise InvalidInputError(f"item {j}: bid of buyer {i} must be >= 0, got {v}")
        if self.declared_r_max is not None and not self.declared_r_max > 0:
            raise InvalidInputError("declared R_max must be positive")

    @classmethod
    def build(
        cls,
        budgets: Iterable[float],
        items: Iterable[Mapping[int, float]],
        declared_r_max: float | None = None,
    ) -> "AdAuctionInstance":
        # zero bids are dropped so every stored bid is a real offer
        cleaned = tuple(
            {int(i): float(v) for i, v in sorted(bids.items()) if v != 0} for bids in items
        )
        return cls(tuple(float(b) for b in budgets), cleaned, declared_r_max)

    @property
    def n_buyers(self) -> int:
        return len(self.budgets)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def r_max(self) -> float:
        """Realized max bid-to-budget ratio over the whole stream."""
        best = 0.0
        for bids in self.items:
            for i, v in bids.items():
                best = max(best, v / self.budgets[i - 1])
        return best

    def budget(self, i: int) -> float:
        return math.inf if i == 0 else self.budgets[i - 1]

    @cached_property
    def _price_maps(self) -> tuple[dict[int, float], ...]:
        return tuple(
            bids if all(v > 0 for v in bids.values()) else {i: v for i, v in bids.items() if v > 0}
            for bids in self.items
        )

    def prices(self, j: int) -> dict[int, float]:
        """Positive bids on item ``j`` (shared; do not mutate)."""
        return self._price_maps[j]


Instance = Union[BoundedAllocationInstance, AdAuctionInstance]


@dataclass(frozen=True)
class Prediction:
    """Predicted buyer per item; 0 means the item should stay unsold."""

    pred: tuple[int, ...]

    def __post_init__(self) -> None:
        for j, p in enumerate(self.pred):
            if p < 0:
                raise InvalidInputError(f"item {j}: negative predicted buyer {p}")

    @classmethod
    def none(cls, n_items: int) -> "Prediction":
        return cls((0,) * n_items)

    def __len__(self) -> int:
        return len(self.pred)

    def __getitem__(self, j: int) -> int:
        return self.pred[j]

    def validate_for(self, instance: Instance) -> None:
        if len(self.pred) != instance.n_items:
            raise InvalidInputError(
                f"prediction has {len(self.pred)} entries for {instance.n_items} items"
            )
        for j, p in enumerate(self.pred):
            if p > instance.n_buyers:
                raise InvalidInputError(f"item {j}: predicted buyer {p} does not exist")


@dataclass
class FractionalAllocation:
    """Sparse fractions ``x[(buyer, item)]``; buyer 0 collects unsold parts."""

    n_buyers: int
    n_items: int
    x: dict[tuple[int, int], float] = field(default_factory=dict)

    def add(self, i: int, j: int, amount: float) -> None:
        if amount == 0.0:
            return
        key = (i, j)
        self.x[key] = self.x.get(key, 0.0) + amount

    def get(self, i: int, j: int) -> float:
        return self.x.get((i, j), 0.0)

    def entries(self) -> list[tuple[int, int, float]]:
        return sorted((i, j, v) for (i, j), v in self.x.items())

    def scaled(self, alpha: float) -> "FractionalAllocation":
        return FractionalAllocation(
            self.n_buyers, self.n_items, {k: alpha * v for k, v in self.x.items()}
        )

    def to_dense(self) -> np.ndarray:
        """``(n+1, m)`` array; row 0 is the fictitious buyer."""
        out = np.zeros((self.n_buyers + 1, self.n_items))
        for (i, j), v in self.x.items():
            out[i, j] = v
        return out

    def item_totals(self, include_fictitious: bool = False) -> np.ndarray:
        tot = np.zeros(self.n_items)
        for (i, j), v in self.x.items():
            if i or include_fictitious:
                tot[j] += v
        return tot

    def spend(self, instance: Instance) -> np.ndarray:
        """Per-buyer spend ``s_i``; slot 0 is always 0."""
        s = np.zeros(self.n_buyers + 1)
        for (i, j), v in self.x.items():
            if i:
                s[i] += instance.prices(j).get(i, 0.0) * v
        return s

    @classmethod
    def from_mapping(cls, instance: Instance, mapping: Sequence[int]) -> "FractionalAllocation":
        alloc = cls(instance.n_buyers, instance.n_items)
        for j, i in enumerate(mapping):
            if i:
                alloc.add(i, j, 1.0)
        return alloc


@dataclass
class DualSolution:
    """Buyer duals ``y`` (slot 0 is the fictitious buyer, pinned to 0) and item duals ``z``."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)

    @classmethod
    def zeros(cls, n_buyers: int, n_items: int) -> "DualSolution":
        return cls(np.zeros(n_buyers + 1), np.zeros(n_items))


@dataclass
class FeasibilityReport:
    passed: bool
    buyer_violations: list[tuple[int, float, float]] = field(default_factory=list)
    item_violations: list[tuple[int, float]] = field(default_factory=list)
    constraint_violations: list[tuple[int, int, float]] = field(default_factory=list)
    worst_violation: float = 0.0
    max_overshoot: float = 0.0

    def __bool__(self) -> bool:
        return self.passed


def _check_dims(instance: Instance, allocation: FractionalAllocation) -> None:
    if allocation.n_buyers != instance.n_buyers or allocation.n_items != instance.n_items:
        raise InvalidInputError(
            f"allocation is {allocation.n_buyers}x{allocation.n_items}, "
            f"instance is {instance.n_buyers}x{instance.n_items}"
        )
    for (i, j), v in allocation.x.items():
        if not (0 <= i <= instance.n_buyers and 0 <= j < instance.n_items):
            raise InvalidInputError(f"allocation entry ({i}, {j}) out of range")


def revenue(instance: Instance, allocation: FractionalAllocation) -> float:
    _check_dims(instance, allocation)
    total = 0.0
    for (i, j), v in allocation.x.items():
        if i:
            total += instance.prices(j).get(i, 0.0) * v
    return total


def capped_revenue(instance: Instance, allocation: FractionalAllocation) -> float:
    """Revenue with every buyer's payment truncated at its budget."""
    s = allocation.spend(instance)
    return float(sum(min(s[i], instance.budget(i)) for i in range(1, instance.n_buyers + 1)))


def check_primal_feasibility(
    instance: Instance, allocation: FractionalAllocation, budget_slack: float = 1.0
) -> FeasibilityReport:
    if budget_slack < 1:
        raise InvalidInputError("budget_slack must be >= 1")
    _check_dims(instance, allocation)
    report = FeasibilityReport(passed=True)
    for (i, j), v in allocation.x.items():
        if v < -EPS:
            report.constraint_violations.append((i, j, v))
            report.worst_violation = max(report.worst_violation, -v)
        elif i and v > EPS and i not in instance.prices(j):
            # selling to an uninterested buyer / zero bidder is not allowed
            report.constraint_violations.append((i, j, v))
            report.worst_violation = max(report.worst_violation, v)
    s = allocation.spend(instance)
    for i in range(1, instance.n_buyers + 1):
        b = instance.budget(i)
        report.max_overshoot = max(report.max_overshoot, s[i] / b - 1.0)
        limit = budget_slack * b
        if s[i] > limit * (1 + EPS):
            report.buyer_violations.append((i, float(s[i]), limit))
            report.worst_violation = max(report.worst_violation, (s[i] - limit) / b)
    for j, tot in enumerate(allocation.item_totals()):
        if tot > 1 + EPS:
            report.item_violations.append((j, float(tot)))
            report.worst_violation = max(report.worst_violation, tot - 1)
    report.max_overshoot = max(report.max_overshoot, 0.0)
    report.passed = not (
        report.buyer_violations or report.item_violations or report.constraint_violations
    )
    return report


def check_dual_feasibility(instance: Instance, dual: DualSolution) -> FeasibilityReport:
    if len(dual.y) != instance.n_buyers + 1 or len(dual.z) != instance.n_items:
        raise InvalidInputError("dual dimensions do not match the instance")
    report = FeasibilityReport(passed=True)
    neg = [(i, -1, float(v)) for i, v in enumerate(dual.y) if v < -EPS]
    neg += [(-1, j, float(v)) for j, v in enumerate(dual.z) if v < -EPS]
    report.constraint_violations.extend(neg)
    for _, _, v in neg:
        report.worst_violation = max(report.worst_violation, -v)
    for j in range(instance.n_items):
        zj = dual.z[j]
        for i, b in instance.prices(j).items():
            lhs = b * dual.y[i] + zj
            if lhs < b - EPS * max(1.0, b):
                report.constraint_violations.append((i, j, float(b - lhs)))
                report.worst_violation = max(report.worst_violation, (b - lhs) / b)
    report.passed = not report.constraint_violations
    return report


def dual_value(instance: Instance, dual: DualSolution) -> float:
    return float(
        sum(instance.budget(i) * dual.y[i] for i in range(1, instance.n_buyers + 1))
        + dual.z.sum()
    )


def duality_gap(
    instance: Instance,
    allocation: FractionalAllocation,
    dual: DualSolution,
    budget_slack: float = 1.0,
) -> tuple[float, float]:
    """Return ``(primal value, dual value)`` after checking both sides."""
    primal_rep = check_primal_feasibility(instance, allocation, budget_slack)
    if not primal_rep:
        raise InvalidInputError(
            f"allocation infeasible at slack {budget_slack}: "
            f"buyers {primal_rep.buyer_violations[:3]}, items {primal_rep.item_violations[:3]}"
        )
    dual_rep = check_dual_feasibility(instance, dual)
    if not dual_rep:
        raise InvalidInputError(
            f"dual infeasible: {dual_rep.constraint_violations[:3]} "
            f"(worst {dual_rep.worst_violation:.3g})"
        )
    return revenue(instance, allocation), dual_value(instance, dual)


def budget_feasible_mapping(instance: Instance, mapping: Sequence[int]) -> list[int]:
    """Buyers whose budget is exceeded when each item goes wholly to ``mapping[j]``.

    Assigning an item to a buyer who did not bid on it (or is not interested)
    also makes the mapping infeasible; such buyers are listed too.
    """
    load = [0.0] * (instance.n_buyers + 1)
    bad: set[int] = set()
    for j, i in enumerate(mapping):
        if not i:
            continue
        p = instance.prices(j).get(i)
        if p is None:
            bad.add(i)
            continue
        load[i] += p
    for i in range(1, instance.n_buyers + 1):
        if load[i] > instance.budget(i) * (1 + EPS):
            bad.add(i)
    return sorted(bad)
