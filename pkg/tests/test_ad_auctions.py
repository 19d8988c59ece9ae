import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import auction_with_prediction
from predalloc.ad_auctions import (
    AuctionRunState,
    auction_constant,
    consistency_bound_auction,
    lemma4_check,
    quasi_feasibility_audit,
    robustness_bound_auction,
    run_algorithm2,
)
from predalloc.core import (
    AdAuctionInstance,
    FractionalAllocation,
    InvalidInputError,
    Prediction,
    check_dual_feasibility,
    check_primal_feasibility,
    revenue,
)
from predalloc.offline import fractional_opt
from predalloc.predictions import prediction_value


def test_auction_constant_examples():
    assert auction_constant(0.5, 0.1) == pytest.approx(1.61051, rel=1e-12)
    assert abs(auction_constant(1.0, 1e-9) - math.e) < 1e-6
    for r in (0.05, 0.3, 0.9):
        assert auction_constant(r, r) == pytest.approx(1 + r, rel=1e-14)


@pytest.mark.parametrize("eta, r", [(0.0, 0.1), (-0.1, 0.1), (1.1, 0.1), (0.5, 0.0)])
def test_auction_constant_rejects(eta, r):
    with pytest.raises(InvalidInputError):
        auction_constant(eta, r)


def test_robustness_examples():
    # (1 - 1/1.61051) / 1.1 by hand
    assert robustness_bound_auction(0.5, 0.1) == pytest.approx((1 - 1 / 1.61051) / 1.1, rel=1e-12)
    assert robustness_bound_auction(0.5, 0.1) == pytest.approx(0.344617, abs=1e-6)
    assert robustness_bound_auction(1.0, 1e-9) == pytest.approx(1 - 1 / math.e, abs=1e-6)
    grid = [robustness_bound_auction(e, 0.15) for e in np.linspace(0.01, 1, 100)]
    assert all(b > a for a, b in zip(grid, grid[1:]))
    assert consistency_bound_auction(0.25) == 0.75


def test_single_buyer_takes_items_until_saturated():
    inst = AdAuctionInstance.build([100.0], [{1: 10.0}] * 30)
    res = run_algorithm2(inst, None, 0.5)
    sold = [res.allocation.get(1, j) for j in range(30)]
    k = next(j for j, x in enumerate(sold) if x == 0)
    assert all(x == 1.0 for x in sold[:k])
    assert all(x == 0.0 for x in sold[k:])
    assert res.state.y[1] >= 1.0
    assert res.allocation.get(0, k) == 1.0


def test_lemma4_equality_at_the_corner():
    # b/B equals R_max on the first item, so the invariant is tight
    r = 0.2
    inst = AdAuctionInstance.build([50.0], [{1: 10.0}])
    res = run_algorithm2(inst, None, 0.6, r_max=r)
    C = auction_constant(0.6, r)
    assert res.state.y[1] == pytest.approx(r / (C - 1), rel=1e-12)
    ok, margin = lemma4_check(res.state, 1)
    assert ok and abs(margin) < 1e-12


def test_lemma4_empty_buyer():
    inst = AdAuctionInstance.build([5.0, 5.0], [{1: 1.0}])
    state = AuctionRunState.initial(inst, 0.5, 0.2)
    assert lemma4_check(state, 2) == (True, 0.0)


def test_prediction_branch_split():
    inst = AdAuctionInstance.build([100.0, 100.0], [{1: 5.0, 2: 8.0}, {1: 5.0, 2: 1.0}])
    res = run_algorithm2(inst, Prediction((0, 2)), 0.3)
    # item 1 goes to argmax buyer 2; item 2's argmax (buyer 1) bids more than the prediction
    assert res.allocation.get(2, 0) == 1.0
    assert res.allocation.get(1, 1) == 1.0
    inst = AdAuctionInstance.build([100.0, 100.0], [{1: 2.0, 2: 8.0}])
    res = run_algorithm2(inst, Prediction((1,)), 0.3)
    assert res.allocation.get(2, 0) == 1.0  # prediction loses to a larger argmax bid
    inst = AdAuctionInstance.build([100.0, 100.0], [{1: 8.0, 2: 2.0}])
    res = run_algorithm2(inst, Prediction((2,)), 0.3)
    assert res.allocation.get(1, 0) == 1.0
    assert res.trace.items[0]["branch"] == "argmax"


def test_prediction_branch_taken_when_predicted_bid_is_larger():
    inst = AdAuctionInstance.build([100.0, 10.0], [{1: 9.0, 2: 9.5}, {1: 8.0, 2: 9.0}])
    # y_2 grows after item 1, so item 2's argmax becomes buyer 1 while buyer 2 still bids more
    res = run_algorithm2(inst, Prediction((0, 2)), 0.4)
    assert res.trace.items[1]["argmax"] == 1
    assert res.trace.items[1]["branch"] == "prediction"
    assert res.allocation.get(1, 1) == pytest.approx(0.4)
    assert res.allocation.get(2, 1) == pytest.approx(0.6)
    primal = res.trace.items[1]["primal_delta"]
    assert primal >= 8.0
    assert res.state.N[2] == [1]


def test_infeasible_prediction_is_coerced():
    inst = AdAuctionInstance.build([10.0, 10.0], [{1: 1.0, 2: 6.0}, {1: 1.0, 2: 6.0}] * 2)
    res = run_algorithm2(inst, Prediction((2, 2, 2, 2)), 0.5)
    assert res.invalid_predictions >= 1
    assert res.state.predicted_spend[2] <= 10.0
    res = run_algorithm2(AdAuctionInstance.build([5.0, 5.0], [{1: 1.0}]), Prediction((2,)), 0.5)
    assert res.invalid_predictions == 1


def test_eta_zero_rejected():
    inst = AdAuctionInstance.build([5.0], [{1: 1.0}])
    with pytest.raises(InvalidInputError):
        run_algorithm2(inst, None, 0.0)


@given(auction_with_prediction(), st.floats(0.01, 1.0))
def test_matches_dense_reference(case, eta):
    inst, pred = case
    bids = np.zeros((inst.n_items, inst.n_buyers))
    for j, b in enumerate(inst.items):
        for i, v in b.items():
            bids[j, i - 1] = v
    res = run_algorithm2(inst, pred, eta)
    x, y = oracles.algorithm2_reference(inst.budgets, bids, pred.pred, eta, inst.r_max)
    assert np.allclose(res.allocation.to_dense().T, x, atol=1e-9)
    assert np.allclose(res.state.y, y, rtol=1e-9, atol=1e-12)


@given(auction_with_prediction(), st.floats(0.01, 1.0))
def test_algorithm2_invariants(case, eta):
    inst, pred = case
    res = run_algorithm2(inst, pred, eta)
    assert not res.lemma4_failures
    assert res.min_lemma4_margin >= -1e-9
    assert quasi_feasibility_audit(inst, res.allocation).passed
    assert check_dual_feasibility(inst, res.dual).passed
    ratio = res.state.C / (res.state.C - 1)
    for rec in res.trace.items:
        if rec["argmax"]:
            assert rec["dual_delta"] == pytest.approx(rec["expected_dual_delta"], rel=1e-9)
            assert rec["dual_delta"] == pytest.approx(ratio * inst.items[rec["item"]][rec["argmax"]])
            assert rec["primal_delta"] >= inst.items[rec["item"]][rec["argmax"]] - 1e-9
    alg = revenue(inst, res.allocation)
    pv = prediction_value(inst, pred)
    if pv.feasible:
        assert alg >= (1 - eta) * pv.value - 1e-6
    opt = fractional_opt(inst).value
    assert alg >= robustness_bound_auction(eta, inst.r_max) * opt - 1e-6 * max(opt, 1)
    assert min(res.state.y) >= 0


def test_lemma4_holds_after_every_item_from_trace():
    rng = np.random.default_rng(5)
    budgets = [20.0, 30.0, 25.0]
    items = [{i: float(rng.uniform(0.5, 3)) for i in (1, 2, 3) if rng.random() < 0.7} or {1: 1.0} for _ in range(60)]
    inst = AdAuctionInstance.build(budgets, items)
    C = auction_constant(0.4, inst.r_max)
    res = run_algorithm2(inst, None, 0.4)
    y = np.zeros(4)
    m = np.zeros(4)
    for rec in res.trace.items:
        i = rec["argmax"]
        if not i:
            continue
        b = inst.items[rec["item"]][i]
        g = b / budgets[i - 1]
        y[i] = y[i] * (1 + g) + g / (C - 1)
        m[i] += b
        rhs = (C ** (m[i] / (0.4 * budgets[i - 1])) - 1) / (C - 1)
        assert y[i] >= rhs - 1e-9 * (1 + y[i])


def test_quasi_feasibility_zero_allocation():
    inst = AdAuctionInstance.build([5.0], [{1: 1.0}])
    rep = quasi_feasibility_audit(inst, FractionalAllocation(1, 1))
    assert rep.passed and rep.max_overshoot == 0


def test_quasi_feasibility_adversarial_tiny():
    inst = AdAuctionInstance.build([10.0, 10.0], [{1: 9.0, 2: 9.0}, {1: 9.5, 2: 9.5}, {1: 9.0}])
    res = run_algorithm2(inst, None, 1.0)
    assert quasi_feasibility_audit(inst, res.allocation).passed
    strict = check_primal_feasibility(inst, res.allocation)
    assert not strict.passed
    assert 0 < strict.max_overshoot <= inst.r_max
