"""Learning-augmented water-filling for Online Bounded Allocation.

Items are processed in three stages: a water-fill restricted to buyers below
the ``eta`` spend fraction, a hand-off of up to ``1 - eta`` of the item to the
predicted buyer, and a final water-fill of whatever is left. Water-filling is
simulated event by event (level boundaries, budget exhaustion, the ``eta``
cap, item exhaustion), so no time discretisation is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import (
    EPS,
    BoundedAllocationInstance,
    DualSolution,
    FractionalAllocation,
    InvalidInputError,
    Prediction,
)
from .trace import StepRecord, Trace

# relative slack for snapping spends onto breakpoints
_SNAP = 1e-12
_E_RATIO = (math.e - 1) / math.e


@dataclass(frozen=True)
class PotentialCoefficients:
    """Slopes of the piecewise-linear potential ``f_d``.

    ``a[l-1]`` is the increment of ``f_d`` over ``[(l-1)/d, l/d]`` and
    ``prefix[k] = f_d(k/d)``.
    """

    d: int
    a: np.ndarray
    prefix: np.ndarray
    cd: float

    @classmethod
    def for_degree(cls, d: int) -> "PotentialCoefficients":
        return _coefficients(int(d))

    def f(self, u: float) -> float:
        return potential_f(u, self)

    def slope(self, level: int) -> float:
        """Derivative of ``f_d`` for a buyer sitting on ``level`` (0-based)."""
        return self.d * self.a[min(level, self.d - 1)]


@lru_cache(maxsize=64)
def _coefficients(d: int) -> PotentialCoefficients:
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")
    if d == 1:
        # single level: f_1(u) = u and C(1) = 1
        return PotentialCoefficients(1, np.array([1.0]), np.array([0.0, 1.0]), 1.0)
    log_r = math.log1p(1.0 / (d - 1))
    growth_minus_1 = math.expm1((d - 1) * log_r)  # (1 + 1/(d-1))^(d-1) - 1
    a1 = 1.0 / (d * growth_minus_1 + 1.0)  # = 1 / (d q - (d - 1))
    k = np.arange(d + 1, dtype=float)
    prefix = a1 * (d - 1) * np.expm1(k * log_r)
    prefix[-1] = 1.0
    a = a1 * np.exp(np.arange(d, dtype=float) * log_r)
    return PotentialCoefficients(d, a, prefix, capacity_constant(d))


def capacity_constant(d: int) -> float:
    """``C(d) = 1 - (d-1) / (d (1 + 1/(d-1))^(d-1))``, with ``C(1) = 1``."""
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")
    if d == 1:
        return 1.0
    q = math.exp((d - 1) * math.log1p(1.0 / (d - 1)))
    return 1.0 - (d - 1) / (d * q)


def potential_f(u: float, coeffs: PotentialCoefficients) -> float:
    if not (-EPS <= u <= 1 + EPS):
        raise InvalidInputError(f"potential argument must lie in [0, 1], got {u}")
    d = coeffs.d
    if u >= 1.0:
        return 1.0
    if u <= 0.0:
        return 0.0
    seg = min(int(u * d), d - 1)  # 0-based interval [seg/d, (seg+1)/d)
    return float(coeffs.prefix[seg] + d * coeffs.a[seg] * (u - seg / d))


def consistency_bound(eta: float) -> float:
    _check_eta(eta)
    return 1.0 - eta


def robustness_bound(eta: float, d: int) -> float:
    """``1 / (1/C(d) + (1 - eta)(1 - f_d(eta)))``."""
    _check_eta(eta)
    co = PotentialCoefficients.for_degree(d)
    return 1.0 / (1.0 / co.cd + (1.0 - eta) * (1.0 - potential_f(eta, co)))


def robustness_bound_floor(eta: float, d: int) -> float:
    """Same bound with ``f_d`` taken at the breakpoint ``floor(eta d)/d`` below ``eta``."""
    _check_eta(eta)
    co = PotentialCoefficients.for_degree(d)
    fe = float(co.prefix[min(int(math.floor(eta * d + _SNAP)), d)])
    return 1.0 / (1.0 / co.cd + (1.0 - eta) * (1.0 - fe))


def asymptotic_potential(eta: float) -> float:
    """Large-``d`` limit of ``f_d(eta)``: ``1 + e (e^(eta-1) - 1) / (e - 1)``."""
    return 1.0 + math.e * math.expm1(eta - 1.0) / (math.e - 1.0)


def asymptotic_robustness(eta: float) -> float:
    """``(e-1)/e / (1 + (1 - eta)(1 - e^(eta-1)))``."""
    _check_eta(eta)
    return _E_RATIO / (1.0 + (1.0 - eta) * (1.0 - math.exp(eta - 1.0)))


def _check_eta(eta: float) -> None:
    if not (0.0 <= eta <= 1.0):
        raise InvalidInputError(f"eta must lie in [0, 1], got {eta}")


@dataclass
class LevelState:
    """Mutable per-buyer spend and level; index 0 is unused (fictitious buyer)."""

    budgets: list[float]
    spend: list[float]
    level: list[int]
    d: int

    @classmethod
    def initial(cls, budgets: Sequence[float], d: int) -> "LevelState":
        n = len(budgets)
        return cls([math.inf, *budgets], [0.0] * (n + 1), [0] * (n + 1), max(d, 1))

    @classmethod
    def from_spend(cls, budgets: Sequence[float], spend: Sequence[float], d: int) -> "LevelState":
        st = cls.initial(budgets, d)
        for i, s in enumerate(spend, start=1):
            st.spend[i] = float(s)
            frac = s / st.budgets[i]
            st.level[i] = min(st.d, max(0, int(math.floor(st.d * frac + _SNAP))))
            if s >= st.budgets[i] * (1 - EPS):
                st.level[i] = st.d
        return st

    def exhausted(self, i: int) -> bool:
        return self.level[i] >= self.d or self.spend[i] >= self.budgets[i] * (1 - EPS)

    def fraction(self, i: int) -> float:
        return self.spend[i] / self.budgets[i]


@dataclass
class WaterFillSegment:
    buyers: tuple[int, ...]
    fraction_each: float
    level: int

    @property
    def fraction(self) -> float:
        return self.fraction_each * len(self.buyers)


@dataclass
class WaterFillResult:
    segments: list[WaterFillSegment] = field(default_factory=list)
    allocated: float = 0.0
    remainder: float = 0.0

    def deltas(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for seg in self.segments:
            for i in seg.buyers:
                out[i] = out.get(i, 0.0) + seg.fraction_each
        return out


def water_fill_step(
    state: LevelState,
    price: float,
    eligible: Sequence[int],
    amount: float,
    cap: float | None = None,
) -> WaterFillResult:
    """Pour ``amount`` of an item priced ``price`` over ``eligible`` buyers.

    At every moment the non-exhausted eligible buyers on the lowest level
    receive the item at equal rates. A new segment starts whenever a receiver
    reaches its next level boundary, exhausts its budget, or (with ``cap``)
    reaches the spend fraction ``cap``; buyers at the cap drop out. ``state``
    is updated in place.
    """
    if amount < 0 or amount > 1 + EPS:
        raise InvalidInputError(f"amount must lie in [0, 1], got {amount}")
    res = WaterFillResult(remainder=amount)
    remaining = amount
    d = state.d
    spend, level, budgets = state.spend, state.level, state.budgets
    while remaining > _SNAP:
        active = [
            i
            for i in eligible
            if level[i] < d
            and (cap is None or spend[i] < cap * budgets[i] * (1 - _SNAP))
        ]
        if not active:
            break
        low = min(level[i] for i in active)
        group = tuple(i for i in active if level[i] == low)
        k = len(group)
        t = remaining / k
        targets = []
        for i in group:
            B = budgets[i]
            bound = B if low + 1 >= d else (low + 1) * B / d
            tgt = bound if cap is None else min(bound, cap * B)
            targets.append((bound, tgt))
            gap = (tgt - spend[i]) / price
            if gap < t:
                t = max(gap, 0.0)
        by_amount = t * k >= remaining * (1 - _SNAP)
        for i, (bound, tgt) in zip(group, targets):
            s = spend[i] + price * t
            if s >= tgt - _SNAP * budgets[i]:
                s = tgt
            if s >= bound:
                s = bound
                level[i] = low + 1
            spend[i] = s
        res.segments.append(WaterFillSegment(group, t, low))
        if by_amount:
            remaining = 0.0
        else:
            remaining -= t * k
    res.allocated = amount - remaining
    res.remainder = remaining
    return res


@dataclass
class Algorithm1Result:
    allocation: FractionalAllocation
    dual: DualSolution
    trace: Trace
    state: LevelState
    coeffs: PotentialCoefficients


def _emit(
    trace: Trace | None,
    alloc: FractionalAllocation,
    state: LevelState,
    coeffs: PotentialCoefficients,
    j: int,
    stage: str,
    price: float,
    res: WaterFillResult,
    seg_counter: list[int],
    spend_before: dict[int, float],
) -> None:
    """Write a water-fill result into the allocation and (optionally) the trace."""
    for seg in res.segments:
        for i in seg.buyers:
            alloc.add(i, j, seg.fraction_each)
        if trace is not None:
            for i in seg.buyers:
                B = state.budgets[i]
                s0 = spend_before[i]
                s1 = s0 + price * seg.fraction_each
                dy = coeffs.slope(seg.level) * (s1 - s0) / B
                trace.steps.append(
                    StepRecord(
                        item=j,
                        stage=stage,
                        buyer=i,
                        fraction=seg.fraction_each,
                        primal_delta=price * seg.fraction_each,
                        dual_delta=B * dy,
                        segment=seg_counter[0],
                        level=seg.level,
                    )
                )
                spend_before[i] = s1
            seg_counter[0] += 1


def run_algorithm1(
    instance: BoundedAllocationInstance,
    prediction: Prediction | None,
    eta: float,
    record_trace: bool = True,
) -> Algorithm1Result:
    """Run the three-stage algorithm over the item stream in arrival order."""
    _check_eta(eta)
    if prediction is None:
        prediction = Prediction.none(instance.n_items)
    prediction.validate_for(instance)
    d = max(instance.d, 1)
    coeffs = PotentialCoefficients.for_degree(d)
    state = LevelState.initial(instance.budgets, d)
    alloc = FractionalAllocation(instance.n_buyers, instance.n_items)
    trace = Trace("algo1", {"eta": eta, "d": d, "cd": coeffs.cd}) if record_trace else None
    seg_counter = [0]
    invalid = 0
    for j, item in enumerate(instance.items):
        S = item.interested
        b = item.price
        istar = prediction.pred[j]
        bad_pred = bool(istar) and istar not in S
        if bad_pred:
            invalid += 1
            istar = 0
        spend_before = {i: state.spend[i] for i in S}
        r1 = water_fill_step(state, b, S, 1.0, cap=eta)
        _emit(trace, alloc, state, coeffs, j, "1", b, r1, seg_counter, spend_before)
        remaining = r1.remainder
        sold2 = 0.0
        if istar and remaining > _SNAP and eta < 1.0:
            r2 = water_fill_step(state, b, (istar,), min(1.0 - eta, remaining))
            _emit(trace, alloc, state, coeffs, j, "2", b, r2, seg_counter, spend_before)
            sold2 = r2.allocated
            remaining -= sold2
        sold3 = 0.0
        if remaining > _SNAP:
            r3 = water_fill_step(state, b, S, remaining)
            _emit(trace, alloc, state, coeffs, j, "3", b, r3, seg_counter, spend_before)
            sold3 = r3.allocated
            remaining = r3.remainder
        if remaining > _SNAP:
            alloc.add(0, j, remaining)
        if trace is not None:
            trace.items.append(
                {
                    "item": j,
                    "price": b,
                    "predicted": prediction.pred[j],
                    "invalid_prediction": bad_pred,
                    "stage_fractions": [r1.allocated, sold2, sold3],
                    "unsold": remaining if remaining > _SNAP else 0.0,
                }
            )
    dual = certificate(instance, state, coeffs)
    if trace is not None:
        trace.params["invalid_predictions"] = invalid
        for rec in trace.items:
            j = rec["item"]
            rec["z"] = float(dual.z[j])
            rec["min_final_level"] = min(state.level[i] for i in instance.items[j].interested)
    return Algorithm1Result(alloc, dual, trace or Trace("algo1"), state, coeffs)


def run_waterfill(instance: BoundedAllocationInstance) -> Algorithm1Result:
    """Plain water-filling without predictions (the ``eta = 1`` reference)."""
    d = max(instance.d, 1)
    coeffs = PotentialCoefficients.for_degree(d)
    state = LevelState.initial(instance.budgets, d)
    alloc = FractionalAllocation(instance.n_buyers, instance.n_items)
    for j, item in enumerate(instance.items):
        res = water_fill_step(state, item.price, item.interested, 1.0)
        for seg in res.segments:
            for i in seg.buyers:
                alloc.add(i, j, seg.fraction_each)
        if res.remainder > _SNAP:
            alloc.add(0, j, res.remainder)
    return Algorithm1Result(alloc, certificate(instance, state, coeffs), Trace("waterfill"), state, coeffs)


def certificate(
    instance: BoundedAllocationInstance, state: LevelState, coeffs: PotentialCoefficients
) -> DualSolution:
    """``y_i = f_d(s_i / B_i)`` and ``z_j = (1 - f_d(min level over S_j / d)) b_j``."""
    n = instance.n_buyers
    y = np.zeros(n + 1)
    for i in range(1, n + 1):
        y[i] = potential_f(min(state.fraction(i), 1.0), coeffs)
    z = np.zeros(instance.n_items)
    for j, item in enumerate(instance.items):
        low = min(state.level[i] for i in item.interested)
        z[j] = (1.0 - coeffs.prefix[min(low, coeffs.d)]) * item.price
    return DualSolution(y, z)


@dataclass
class RateViolation:
    item: int
    segment: int
    stage: str
    dual: float
    primal: float
    limit: float
    same_level_as_final_min: bool


@dataclass
class RateAuditReport:
    passed: bool
    checked_segments: int = 0
    checked_items: int = 0
    violations: list[RateViolation] = field(default_factory=list)
    item_violations: list[tuple[int, float, float]] = field(default_factory=list)
    max_excess: float = 0.0

    def __bool__(self) -> bool:
        return self.passed


def dual_rate_audit(trace: Trace) -> RateAuditReport:
    """Compare dual growth against primal growth segment by segment.

    For a completely sold item the item dual ``z_j`` is spread uniformly over
    the sold unit, so a segment selling ``delta`` of the item accrues
    ``z_j * delta``. Stage 1/3 segments must stay within ``1/C(d)`` times their
    primal increment and Stage 2 segments within ``1/C(d) + 1 - f_d(eta)``.
    Items left partly unsold must have total dual growth at most
    ``b_j / C(d)``.
    """
    rep = RateAuditReport(passed=True)
    if not trace.items:
        return rep
    d = int(trace.params["d"])
    eta = float(trace.params["eta"])
    coeffs = PotentialCoefficients.for_degree(d)
    inv_c = 1.0 / coeffs.cd
    stage2_factor = inv_c + 1.0 - potential_f(eta, coeffs)
    by_item: dict[int, dict[int, list[StepRecord]]] = {}
    for s in trace.steps:
        by_item.setdefault(s.item, {}).setdefault(s.segment, []).append(s)
    for rec in trace.items:
        j = rec["item"]
        price = rec["price"]
        z = rec["z"]
        min_level = rec["min_final_level"]
        segments = by_item.get(j, {})
        rep.checked_items += 1
        if rec["unsold"] > 0:
            total = z + sum(s.dual_delta for seg in segments.values() for s in seg)
            if total > inv_c * price + EPS * max(1.0, price):
                rep.item_violations.append((j, total, inv_c * price))
            continue
        for seg_id, steps in segments.items():
            primal = sum(s.primal_delta for s in steps)
            delta = sum(s.fraction for s in steps)
            dual = sum(s.dual_delta for s in steps) + z * delta
            stage = steps[0].stage
            factor = stage2_factor if stage == "2" else inv_c
            limit = factor * primal
            rep.checked_segments += 1
            if dual > limit + EPS * max(1.0, limit):
                rep.violations.append(
                    RateViolation(j, seg_id, stage, dual, primal, limit, steps[0].level == min_level)
                )
                rep.max_excess = max(rep.max_excess, dual / primal - factor)
    rep.passed = not rep.violations and not rep.item_violations
    return rep
