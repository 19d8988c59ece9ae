from dataclasses import replace

import numpy as np
import pytest

from predalloc.core import InvalidInputError
from predalloc.fileio import format_instance
from predalloc.generators import (
    INSTANCE2,
    INSTANCE3,
    INSTANCE4,
    LOGNORMAL,
    PRESETS,
    GeneratorSpec,
    generate,
    generate_instance1,
    generate_lognormal_auction,
    generate_random_bounded,
)
from predalloc.offline import fractional_opt


def _price_budget_ratio(spec, seeds=20):
    ratios = []
    for s in range(seeds):
        inst = generate(spec.with_seed(s))
        ratios.append(np.mean([it.price for it in inst.items]) / np.mean(inst.budgets))
    return 100 * float(np.mean(ratios))


def test_instance1_structure():
    inst = generate_instance1()
    assert inst.items[0].interested == (1, 2, 3, 4, 5)
    assert inst.items[4].interested == (5,)
    assert fractional_opt(inst).value == pytest.approx(500)
    assert generate(PRESETS["instance1"]) == inst


def test_instance2_price_budget_ratio():
    assert abs(_price_budget_ratio(INSTANCE2) - 6.36) <= 2.0


def test_instance3_price_budget_ratio():
    assert abs(_price_budget_ratio(INSTANCE3, seeds=5) - 0.98) <= 0.5


@pytest.mark.parametrize("spec", [INSTANCE2, INSTANCE4])
def test_random_bounded_shape(spec):
    inst = generate_random_bounded(spec.with_seed(3))
    assert inst.n_buyers == spec.buyers and inst.n_items == spec.items
    assert inst.d <= spec.d_bound
    sizes = {len(it.interested) for it in inst.items}
    assert sizes <= set(range(1, spec.d_bound + 1))
    assert len(sizes) > spec.d_bound // 2
    lo, hi = spec.price_range
    assert all(lo <= it.price <= hi for it in inst.items)
    lo, hi = spec.budget_range
    assert all(lo <= b <= hi for b in inst.budgets)


def test_d_bound_one_gives_singletons():
    inst = generate(replace(INSTANCE2, d_bound=1, items=200))
    assert all(len(it.interested) == 1 for it in inst.items)


def test_lognormal_default_instance():
    inst = generate_lognormal_auction(LOGNORMAL)
    assert inst.n_buyers == 100 and inst.n_items == 10_000
    assert all(len(b) == 6 and min(b.values()) > 0 for b in inst.items)
    assert 0.02 <= inst.r_max <= 0.5
    assert inst.declared_r_max == inst.r_max
    totals = np.zeros(101)
    for b in inst.items:
        for i, v in b.items():
            totals[i] += v
    assert np.allclose(inst.budgets, 0.1 * totals[1:])


def test_lognormal_r_max_across_seeds():
    for s in range(3):
        assert 0.02 <= generate(LOGNORMAL.with_seed(s)).r_max <= 0.5


def test_budget_fraction_one_sells_everything_to_top_bidder():
    inst = generate(replace(LOGNORMAL, buyers=10, items=60, budget_fraction=1.0, seed=4))
    top = sum(max(b.values()) for b in inst.items)
    assert fractional_opt(inst).value == pytest.approx(top, rel=1e-9)


def test_global_budget_mode():
    inst = generate(replace(LOGNORMAL, buyers=10, items=100, budget_mode="global"))
    assert len(set(inst.budgets)) == 1


def test_same_seed_same_bytes():
    for spec in (INSTANCE4, replace(LOGNORMAL, items=500)):
        a = format_instance(generate(spec.with_seed(11)))
        b = format_instance(generate(spec.with_seed(11)))
        c = format_instance(generate(spec.with_seed(12)))
        assert a == b and a != c


@pytest.mark.parametrize(
    "spec",
    [
        GeneratorSpec(kind="nope"),
        GeneratorSpec(buyers=0),
        GeneratorSpec(d_bound=200),
        GeneratorSpec(price_range=(5.0, 1.0)),
        GeneratorSpec(budget_range=(0.0, 1.0)),
        replace(LOGNORMAL, bidders_per_item=500),
        replace(LOGNORMAL, budget_mode="weird"),
    ],
)
def test_invalid_specs(spec):
    with pytest.raises(InvalidInputError):
        generate(spec)


def test_wrong_kind_for_direct_generator():
    with pytest.raises(InvalidInputError):
        generate_random_bounded(LOGNORMAL)
    with pytest.raises(InvalidInputError):
        generate_lognormal_auction(INSTANCE2)
