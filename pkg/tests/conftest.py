import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from predalloc.core import AdAuctionInstance, BoundedAllocationInstance, Prediction  # noqa: E402
from predalloc.generators import generate_instance1  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def bounded_instances(draw, max_buyers=6, max_items=10, max_d=None):
    n = draw(st.integers(1, max_buyers))
    m = draw(st.integers(0, max_items))
    d_cap = min(n, max_d or n)
    budgets = draw(st.lists(st.floats(1.0, 100.0), min_size=n, max_size=n))
    items = []
    for _ in range(m):
        price = draw(st.floats(0.5, 60.0))
        k = draw(st.integers(1, d_cap))
        buyers = draw(st.lists(st.integers(1, n), min_size=k, max_size=k, unique=True))
        items.append((price, buyers))
    return BoundedAllocationInstance.build(budgets, items)


@st.composite
def bounded_with_prediction(draw, **kw):
    inst = draw(bounded_instances(**kw))
    pred = [draw(st.sampled_from((0, *it.interested))) for it in inst.items]
    return inst, Prediction(tuple(pred))


@st.composite
def auction_instances(draw, max_buyers=5, max_items=12):
    n = draw(st.integers(1, max_buyers))
    m = draw(st.integers(1, max_items))
    budgets = draw(st.lists(st.floats(5.0, 50.0), min_size=n, max_size=n))
    items = []
    for _ in range(m):
        bids = draw(st.dictionaries(st.integers(1, n), st.floats(0.1, 5.0), min_size=1, max_size=n))
        items.append(bids)
    return AdAuctionInstance.build(budgets, items)


@st.composite
def auction_with_prediction(draw, **kw):
    inst = draw(auction_instances(**kw))
    pred = [draw(st.sampled_from((0, *sorted(b)))) for b in inst.items]
    return inst, Prediction(tuple(pred))


@pytest.fixture
def instance1():
    return generate_instance1()


@pytest.fixture
def perfect1():
    return Prediction((1, 2, 3, 4, 5))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
