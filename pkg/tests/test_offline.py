import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import auction_instances, bounded_instances
from predalloc.core import (
    AdAuctionInstance,
    BoundedAllocationInstance,
    check_dual_feasibility,
    check_primal_feasibility,
    dual_value,
    revenue,
)
from predalloc.generators import GeneratorSpec, generate_random_bounded
from predalloc.offline import (
    fractional_opt,
    fractional_opt_auction,
    fractional_opt_bounded,
    integral_opt,
    lp_opt,
    simplex_max,
)


def test_instance1_fractional_and_integral(instance1):
    assert fractional_opt_bounded(instance1).value == pytest.approx(500)
    sol = integral_opt(instance1)
    assert sol.value == pytest.approx(500)
    assert sol.optimal and sol.integrality_gap == 0
    assert sol.mapping == [1, 2, 3, 4, 5]


def test_budget_capped_single_buyer():
    inst = BoundedAllocationInstance.build([50.0], [(40.0, [1]), (40.0, [1])])
    assert fractional_opt_bounded(inst).value == pytest.approx(50)
    assert integral_opt(inst).value == pytest.approx(40)


def test_auction_examples():
    assert fractional_opt_auction(AdAuctionInstance.build([100.0], [{1: 100.0}])).value == pytest.approx(100)
    inst = AdAuctionInstance.build([10.0, 10.0], [{1: 10.0}, {1: 10.0, 2: 6.0}])
    sol = fractional_opt_auction(inst)
    assert sol.value == pytest.approx(16)
    assert sol.allocation.get(1, 0) == pytest.approx(1)
    assert sol.allocation.get(2, 1) == pytest.approx(1)
    assert integral_opt(inst).value == pytest.approx(16)


def test_auction_strong_duality_5x8():
    rng = np.random.default_rng(3)
    items = [{i: float(rng.uniform(1, 10)) for i in range(1, 6) if rng.random() < 0.6} or {1: 2.0} for _ in range(8)]
    inst = AdAuctionInstance.build(list(rng.uniform(5, 20, 5)), items)
    for method in ("simplex", "highs"):
        sol = lp_opt(inst, method)
        assert check_dual_feasibility(inst, sol.certificate).passed
        assert dual_value(inst, sol.certificate) == pytest.approx(sol.value, rel=1e-6)
        assert revenue(inst, sol.allocation) == pytest.approx(sol.value, rel=1e-9)


def test_simplex_textbook_lp():
    # max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> 36 at (2, 6)
    res = simplex_max(np.array([3.0, 5.0]), np.array([[1, 0], [0, 2], [3, 2]]), np.array([4.0, 12, 18]))
    assert res.value == pytest.approx(36)
    assert res.x == pytest.approx([2, 6])
    assert res.duals @ np.array([4.0, 12, 18]) == pytest.approx(36)


def test_simplex_degenerate_lp_terminates():
    # classic cycling example under pure Dantzig pricing
    c = np.array([0.75, -150, 0.02, -6])
    A = np.array([[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]])
    res = simplex_max(c, A, np.array([0.0, 0, 1]))
    assert res.value == pytest.approx(0.05)


@pytest.mark.parametrize("seed", range(5))
def test_flow_matches_simplex_and_highs_10x20(seed):
    spec = GeneratorSpec("random_bounded", 10, 20, 4, (10, 100), (1, 40), seed=seed)
    inst = generate_random_bounded(spec)
    flow = fractional_opt_bounded(inst).value
    assert lp_opt(inst, "simplex").value == pytest.approx(flow, rel=1e-6)
    assert lp_opt(inst, "highs").value == pytest.approx(flow, rel=1e-6)


@given(bounded_instances())
def test_flow_solution_and_certificate(inst):
    sol = fractional_opt_bounded(inst)
    assert check_primal_feasibility(inst, sol.allocation).passed
    assert revenue(inst, sol.allocation) == pytest.approx(sol.value, rel=1e-9, abs=1e-9)
    assert check_dual_feasibility(inst, sol.certificate).passed
    assert dual_value(inst, sol.certificate) == pytest.approx(sol.value, rel=1e-9, abs=1e-9)


@given(bounded_instances(), st.randoms(use_true_random=False))
def test_flow_value_is_order_invariant(inst, rnd):
    items = [(it.price, list(it.interested)) for it in inst.items]
    rnd.shuffle(items)
    other = BoundedAllocationInstance.build(inst.budgets, items)
    assert fractional_opt_bounded(other).value == pytest.approx(fractional_opt_bounded(inst).value, rel=1e-9)


@settings(max_examples=25)
@given(bounded_instances(max_buyers=3, max_items=6))
def test_bnb_matches_brute_force_bounded(inst):
    prices = [inst.prices(j) for j in range(inst.n_items)]
    sol = integral_opt(inst, method="bnb")
    assert sol.optimal
    assert sol.value == pytest.approx(oracles.brute_force_integral(inst.budgets, prices), abs=1e-9)
    assert sol.value <= fractional_opt(inst).value + 1e-9
    assert sol.integrality_gap >= 0 or sol.value == 0


@settings(max_examples=25)
@given(auction_instances(max_buyers=3, max_items=6))
def test_bnb_and_milp_match_brute_force_auction(inst):
    prices = [dict(b) for b in inst.items]
    truth = oracles.brute_force_integral(inst.budgets, prices)
    assert integral_opt(inst, method="bnb").value == pytest.approx(truth, abs=1e-9)
    assert integral_opt(inst, method="milp").value == pytest.approx(truth, abs=1e-6)


def test_integral_mapping_is_budget_feasible():
    spec = GeneratorSpec("random_bounded", 15, 40, 4, (10, 100), (5, 60), seed=2)
    inst = generate_random_bounded(spec)
    sol = integral_opt(inst, time_budget=5)
    load = [0.0] * (inst.n_buyers + 1)
    for j, i in enumerate(sol.mapping):
        if i:
            assert i in inst.items[j].interested
            load[i] += inst.items[j].price
    assert all(load[i] <= inst.budgets[i - 1] + 1e-9 for i in range(1, inst.n_buyers + 1))
    assert sum(load) == pytest.approx(sol.value)
    assert sol.value <= fractional_opt(inst).value + 1e-9


def test_instance2_style_has_tiny_gap():
    from predalloc.generators import INSTANCE2, generate

    inst = generate(INSTANCE2.with_seed(1))
    sol = integral_opt(inst, time_budget=5)
    assert 0 <= sol.integrality_gap < 0.01
