"""Seeded instance generators: the manual worst case, random bounded instances, lognormal auctions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import AdAuctionInstance, BoundedAllocationInstance, Instance, InvalidInputError
from .rng import stream

KINDS = ("manual1", "random_bounded", "lognormal_auction")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "random_bounded"
    buyers: int = 100
    items: int = 1000
    d_bound: int = 5
    budget_range: tuple[float, float] = (10.0, 100.0)
    price_range: tuple[float, float] = (0.1, 8.0)
    bidders_per_item: int = 6
    lognormal_mu: float = 0.5
    lognormal_sigma: float = 0.5
    budget_fraction: float = 0.1
    budget_mode: str = "per_buyer"  # or "global"
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if self.kind == "manual1":
            return
        if self.buyers < 1 or self.items < 0:
            raise InvalidInputError("need at least one buyer and a non-negative item count")
        for name in ("budget_range", "price_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidInputError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
        if self.kind == "random_bounded" and not 1 <= self.d_bound <= self.buyers:
            raise InvalidInputError(f"d_bound must lie in [1, buyers], got {self.d_bound}")
        if self.kind == "lognormal_auction":
            if not 1 <= self.bidders_per_item <= self.buyers:
                raise InvalidInputError("bidders_per_item must lie in [1, buyers]")
            if not self.budget_fraction > 0:
                raise InvalidInputError("budget_fraction must be positive")
            if self.budget_mode not in ("per_buyer", "global"):
                raise InvalidInputError(f"unknown budget_mode {self.budget_mode!r}")

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return replace(self, seed=seed)


# preset configurations
INSTANCE2 = GeneratorSpec("random_bounded", 100, 1000, 5, (10.0, 100.0), (0.1, 8.0))
INSTANCE3 = GeneratorSpec("random_bounded", 100, 10_000, 3, (10.0, 1000.0), (1.0, 10.0))
INSTANCE4 = GeneratorSpec("random_bounded", 80, 80, 40, (10.0, 100.0), (10.0, 100.0))
LOGNORMAL = GeneratorSpec("lognormal_auction", 100, 10_000, bidders_per_item=6)
MANUAL1 = GeneratorSpec("manual1", 5, 5, 5, (100.0, 100.0), (100.0, 100.0))

PRESETS: dict[str, GeneratorSpec] = {
    "instance1": MANUAL1,
    "instance2": INSTANCE2,
    "instance3": INSTANCE3,
    "instance4": INSTANCE4,
    "lognormal": LOGNORMAL,
}


def generate_instance1() -> BoundedAllocationInstance:
    """5 buyers and 5 items at price 100; buyer i wants item j iff i >= j."""
    return BoundedAllocationInstance.build(
        [100.0] * 5, [(100.0, range(j, 6)) for j in range(1, 6)]
    )


def generate_random_bounded(spec: GeneratorSpec) -> BoundedAllocationInstance:
    if spec.kind != "random_bounded":
        raise InvalidInputError(f"expected a random_bounded spec, got {spec.kind!r}")
    spec.validate()
    rng = stream(spec.seed)
    budgets = rng.uniform(*spec.budget_range, size=spec.buyers)
    prices = rng.uniform(*spec.price_range, size=spec.items)
    sizes = rng.integers(1, spec.d_bound + 1, size=spec.items)
    items = []
    for j in range(spec.items):
        members = rng.choice(spec.buyers, size=int(sizes[j]), replace=False) + 1
        items.append((float(prices[j]), members.tolist()))
    return BoundedAllocationInstance.build(budgets.tolist(), items)


def generate_lognormal_auction(spec: GeneratorSpec) -> AdAuctionInstance:
    """Each item gets bids from ``bidders_per_item`` distinct random buyers.

    ``lognormal_mu``/``lognormal_sigma`` parameterise the underlying normal.
    Budgets are ``budget_fraction`` of each buyer's own total bids
    (``per_buyer``) or of the grand total split evenly (``global``). The
    realized R_max is declared on the instance.
    """
    if spec.kind != "lognormal_auction":
        raise InvalidInputError(f"expected a lognormal_auction spec, got {spec.kind!r}")
    spec.validate()
    rng = stream(spec.seed)
    n, m, k = spec.buyers, spec.items, spec.bidders_per_item
    who = np.argsort(rng.random((m, n)), axis=1)[:, :k] + 1
    bids = rng.lognormal(spec.lognormal_mu, spec.lognormal_sigma, size=(m, k))
    totals = np.zeros(n + 1)
    np.add.at(totals, who.ravel(), bids.ravel())
    if spec.budget_mode == "per_buyer":
        budgets = spec.budget_fraction * totals[1:]
        # a buyer without any bid never matters; give it the average budget
        fallback = spec.budget_fraction * totals[1:].sum() / n if m else 1.0
        budgets[budgets <= 0] = fallback if fallback > 0 else 1.0
    else:
        total = totals.sum()
        budgets = np.full(n, spec.budget_fraction * total / n if total > 0 else 1.0)
    items = [
        {int(b): float(v) for b, v in sorted(zip(who[j], bids[j]))} for j in range(m)
    ]
    inst = AdAuctionInstance.build(budgets.tolist(), items)
    return AdAuctionInstance(inst.budgets, inst.items, inst.r_max if m else None)


def generate(spec: GeneratorSpec) -> Instance:
    spec.validate()
    if spec.kind == "manual1":
        return generate_instance1()
    if spec.kind == "random_bounded":
        return generate_random_bounded(spec)
    return generate_lognormal_auction(spec)
