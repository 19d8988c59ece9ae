"""Learning-augmented primal-dual algorithm for Online Ad-Auctions.

Each item goes either wholly to the buyer maximising ``b_ij (1 - y_i)``, or,
when the (feasible) predicted buyer bids strictly more, ``1 - eta`` of it to
the predicted buyer and ``eta`` to the argmax buyer. Only the argmax buyer's
dual is raised, multiplicatively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EPS,
    AdAuctionInstance,
    DualSolution,
    FractionalAllocation,
    InvalidInputError,
    Prediction,
    check_primal_feasibility,
)
from .trace import StepRecord, Trace


def _check_eta(eta: float) -> None:
    if not (0.0 < eta <= 1.0):
        raise InvalidInputError(f"eta must lie in (0, 1], got {eta}")


def auction_constant(eta: float, r_max: float) -> float:
    """``C = (1 + R_max)^(eta / R_max)``."""
    _check_eta(eta)
    if not r_max > 0:
        raise InvalidInputError(f"R_max must be positive, got {r_max}")
    return math.exp(eta * math.log1p(r_max) / r_max)


def robustness_bound_auction(eta: float, r_max: float) -> float:
    """``(1 - 1/C) / (1 + R_max)``."""
    return (1.0 - 1.0 / auction_constant(eta, r_max)) / (1.0 + r_max)


def consistency_bound_auction(eta: float) -> float:
    _check_eta(eta)
    return 1.0 - eta


@dataclass
class AuctionRunState:
    """Mutable run state. Buyer-indexed lists have slot 0 for the fictitious buyer."""

    budgets: list[float]
    eta: float
    r_max: float
    C: float
    y: list[float]
    spend: list[float]
    m_bids: list[float]  # sum of full bids over M(i)
    predicted_spend: list[float]  # sum of full bids over N(i)
    M: list[list[int]] = field(default_factory=list)
    N: list[list[int]] = field(default_factory=list)

    @classmethod
    def initial(cls, instance: AdAuctionInstance, eta: float, r_max: float) -> "AuctionRunState":
        n = instance.n_buyers
        return cls(
            budgets=[math.inf, *instance.budgets],
            eta=eta,
            r_max=r_max,
            C=auction_constant(eta, r_max),
            y=[0.0] * (n + 1),
            spend=[0.0] * (n + 1),
            m_bids=[0.0] * (n + 1),
            predicted_spend=[0.0] * (n + 1),
            M=[[] for _ in range(n + 1)],
            N=[[] for _ in range(n + 1)],
        )


def lemma4_margin(y: float, m_bids: float, budget: float, C: float, eta: float) -> float:
    """``y - (C^(m_bids / (eta B)) - 1) / (C - 1)``; non-negative when the invariant holds."""
    rhs = math.expm1(m_bids / (eta * budget) * math.log(C)) / (C - 1.0)
    return y - rhs


def lemma4_check(state: AuctionRunState, i: int, eta: float | None = None) -> tuple[bool, float]:
    """Evaluate the potential inequality for buyer ``i``; returns (holds, margin)."""
    if i == 0:
        return True, 0.0
    e = state.eta if eta is None else eta
    margin = lemma4_margin(state.y[i], state.m_bids[i], state.budgets[i], state.C, e)
    return margin >= -EPS * (1.0 + abs(state.y[i])), margin


@dataclass
class Algorithm2Result:
    allocation: FractionalAllocation
    dual: DualSolution
    trace: Trace
    state: AuctionRunState
    min_lemma4_margin: float
    lemma4_failures: list[tuple[int, int, float]]
    invalid_predictions: int


def run_algorithm2(
    instance: AdAuctionInstance,
    prediction: Prediction | None,
    eta: float,
    r_max: float | None = None,
    record_trace: bool = True,
) -> Algorithm2Result:
    """Process the items in order exactly as the pseudo-code prescribes.

    ``r_max`` defaults to the instance's declared value, else the realized
    one. A prediction is coerced to the fictitious buyer when the predicted
    buyer bids 0 on the item or when honouring it would push the buyer's
    prediction-branch commitments beyond its budget. The potential inequality is re-checked
    for the updated buyer after every item.
    """
    _check_eta(eta)
    if prediction is None:
        prediction = Prediction.none(instance.n_items)
    prediction.validate_for(instance)
    if r_max is None:
        r_max = instance.declared_r_max or instance.r_max
    if r_max <= 0:
        r_max = 1.0  # no positive bid anywhere, C never matters
    st = AuctionRunState.initial(instance, eta, r_max)
    C = st.C
    inv_cm1 = 1.0 / (C - 1.0)
    ratio = C / (C - 1.0)
    y, spend, budgets = st.y, st.spend, st.budgets
    alloc = FractionalAllocation(instance.n_buyers, instance.n_items)
    trace = (
        Trace("algo2", {"eta": eta, "r_max": r_max, "C": C}) if record_trace else None
    )
    z = np.zeros(instance.n_items)
    min_margin = 0.0
    failures: list[tuple[int, int, float]] = []
    invalid = 0
    for j, bids in enumerate(instance.items):
        istar = prediction.pred[j]
        b_star = bids.get(istar, 0.0) if istar else 0.0
        coerced = False
        if istar and (b_star <= 0.0 or st.predicted_spend[istar] + b_star > budgets[istar] * (1 + EPS)):
            istar, b_star, coerced = 0, 0.0, True
            invalid += 1
        # argmax of b (1 - y); ties go to the lowest index, non-positive -> fictitious
        i, w = 0, 0.0
        for k, b in bids.items():
            wk = b * (1.0 - y[k])
            if wk > w or (wk == w and wk > 0.0 and k < i):
                i, w = k, wk
        b_i = bids[i] if i else 0.0
        z[j] = w
        if b_i < b_star:
            branch = "prediction"
            alloc.add(i, j, eta)
            alloc.add(istar, j, 1.0 - eta)
            st.N[istar].append(j)
            st.predicted_spend[istar] += b_star
            spend[istar] += (1.0 - eta) * b_star
            spend[i] += eta * b_i
            primal = (1.0 - eta) * b_star + eta * b_i
        else:
            branch = "argmax" if i else "fictitious"
            alloc.add(i, j, 1.0)
            if i:
                spend[i] += b_i
            primal = b_i
        st.M[i].append(j)
        dual_inc = 0.0
        if i:
            st.m_bids[i] += b_i
            g = b_i / budgets[i]
            y_old = y[i]
            y[i] = y_old * (1.0 + g) + g * inv_cm1
            dual_inc = budgets[i] * (y[i] - y_old) + w
            ok, margin = lemma4_check(st, i)
            min_margin = min(min_margin, margin)
            if not ok:
                failures.append((j, i, margin))
        if trace is not None:
            share = eta if branch == "prediction" else 1.0
            tag = "argmax" if i else "fictitious"
            trace.steps.append(StepRecord(j, tag, i, share, share * b_i, dual_inc))
            if branch == "prediction":
                trace.steps.append(
                    StepRecord(j, "prediction", istar, 1.0 - eta, (1.0 - eta) * b_star, 0.0)
                )
            trace.items.append(
                {
                    "item": j,
                    "argmax": i,
                    "predicted": prediction.pred[j],
                    "used_prediction": istar,
                    "coerced": coerced,
                    "branch": branch,
                    "z": float(w),
                    "primal_delta": primal,
                    "dual_delta": dual_inc,
                    "expected_dual_delta": ratio * b_i,
                }
            )
    if trace is not None:
        trace.params["invalid_predictions"] = invalid
    dual = DualSolution(np.array(y), z)
    return Algorithm2Result(alloc, dual, trace or Trace("algo2"), st, min_margin, failures, invalid)


@dataclass
class QuasiFeasibilityReport:
    passed: bool
    max_overshoot: float
    r_max: float
    buyer_violations: list[tuple[int, float, float]]
    item_violations: list[tuple[int, float]]

    def __bool__(self) -> bool:
        return self.passed


def quasi_feasibility_audit(
    instance: AdAuctionInstance, allocation: FractionalAllocation, r_max: float | None = None
) -> QuasiFeasibilityReport:
    """Check spend <= B_i (1 + R_max) and per-item totals <= 1."""
    r = r_max if r_max is not None else (instance.declared_r_max or instance.r_max)
    rep = check_primal_feasibility(instance, allocation, budget_slack=1.0 + r)
    return QuasiFeasibilityReport(
        rep.passed, rep.max_overshoot, r, rep.buyer_violations, rep.item_violations
    )
