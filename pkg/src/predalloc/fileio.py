"""Line-oriented text formats for instances, predictions and allocations.

Instance file::

    # comments and blank lines are ignored
    kind bounded              # optional; inferred from the item lines otherwise
    buyers 3
    100
    80.5
    100
    items 2
    price 100; buyers 1 2 3   # bounded allocation item
    bids 1:2.5 3:0.75         # Ad-Auctions item (sparse, absent = bid 0)

An Ad-Auctions file may carry ``rmax <value>`` before ``items`` to declare
R_max up front. Item lines of both shapes cannot be mixed in one file.

Prediction file: one non-negative integer per line (line k is item k), with
``#`` comment lines allowed anywhere for metadata.

Allocation file: one ``item buyer fraction`` triple per line.
"""

from __future__ import annotations

import io
import sys
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from .core import (
    AdAuctionInstance,
    BoundedAllocationInstance,
    FractionalAllocation,
    Instance,
    InvalidInputError,
    Prediction,
)


def _lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _float(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise InvalidInputError(f"line {lineno}: bad {what} {tok!r}") from None


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise InvalidInputError(f"line {lineno}: bad {what} {tok!r}") from None


def parse_instance(text: str) -> Instance:
    kind: str | None = None
    rmax: float | None = None
    budgets: list[float] = []
    bounded_items: list[tuple[float, list[int]]] = []
    auction_items: list[dict[int, float]] = []
    n_buyers = n_items = None
    state = "header"
    for lineno, line in _lines(text):
        head, _, rest = line.partition(" ")
        if state == "header":
            if head == "kind":
                if rest.strip() not in ("bounded", "auction"):
                    raise InvalidInputError(f"line {lineno}: unknown kind {rest.strip()!r}")
                kind = rest.strip()
            elif head == "buyers":
                n_buyers = _int(rest.strip(), lineno, "buyer count")
                if n_buyers < 0:
                    raise InvalidInputError(f"line {lineno}: negative buyer count")
                state = "budgets"
            else:
                raise InvalidInputError(f"line {lineno}: expected 'buyers n', got {line!r}")
            continue
        if state == "budgets" and len(budgets) < (n_buyers or 0):
            budgets.append(_float(line, lineno, "budget"))
            continue
        if state == "budgets":
            if head == "rmax":
                rmax = _float(rest.strip(), lineno, "rmax")
                continue
            if head != "items":
                raise InvalidInputError(f"line {lineno}: expected 'items m', got {line!r}")
            n_items = _int(rest.strip(), lineno, "item count")
            state = "items"
            continue
        # item lines
        if head == "price":
            if auction_items or kind == "auction":
                raise InvalidInputError(f"line {lineno}: bounded item in an Ad-Auctions file")
            price_part, sep, buyers_part = rest.partition(";")
            buyers_part = buyers_part.strip()
            if not sep or not buyers_part.startswith("buyers"):
                raise InvalidInputError(f"line {lineno}: expected 'price b; buyers i1 i2 ...'")
            price = _float(price_part.strip(), lineno, "price")
            buyers = [_int(t, lineno, "buyer") for t in buyers_part.split()[1:]]
            bounded_items.append((price, buyers))
        elif head == "bids":
            if bounded_items or kind == "bounded":
                raise InvalidInputError(f"line {lineno}: Ad-Auctions item in a bounded file")
            bids: dict[int, float] = {}
            for tok in rest.split():
                b, sep, v = tok.partition(":")
                if not sep:
                    raise InvalidInputError(f"line {lineno}: expected buyer:bid, got {tok!r}")
                buyer = _int(b, lineno, "buyer")
                if buyer in bids:
                    raise InvalidInputError(f"line {lineno}: buyer {buyer} bids twice")
                bids[buyer] = _float(v, lineno, "bid")
            auction_items.append(bids)
        else:
            raise InvalidInputError(f"line {lineno}: unrecognised item line {line!r}")
    if n_buyers is None or n_items is None:
        raise InvalidInputError("missing 'buyers' or 'items' header")
    if len(budgets) != n_buyers:
        raise InvalidInputError(f"expected {n_buyers} budgets, found {len(budgets)}")
    found = len(bounded_items) + len(auction_items)
    if found != n_items:
        raise InvalidInputError(f"expected {n_items} items, found {found}")
    if kind is None:
        kind = "auction" if auction_items else "bounded"
    if kind == "bounded":
        if rmax is not None:
            raise InvalidInputError("rmax is only meaningful for Ad-Auctions instances")
        return BoundedAllocationInstance.build(budgets, bounded_items)
    return AdAuctionInstance.build(budgets, auction_items, rmax)


def format_instance(instance: Instance) -> str:
    out = io.StringIO()
    out.write(f"kind {instance.kind}\n")
    out.write(f"buyers {instance.n_buyers}\n")
    for b in instance.budgets:
        out.write(f"{b!r}\n")
    if isinstance(instance, AdAuctionInstance) and instance.declared_r_max is not None:
        out.write(f"rmax {instance.declared_r_max!r}\n")
    out.write(f"items {instance.n_items}\n")
    if isinstance(instance, BoundedAllocationInstance):
        for it in instance.items:
            out.write(f"price {it.price!r}; buyers {' '.join(map(str, it.interested))}\n")
    else:
        for bids in instance.items:
            out.write("bids " + " ".join(f"{i}:{v!r}" for i, v in sorted(bids.items())) + "\n")
    return out.getvalue()


def read_instance(path: str | Path) -> Instance:
    return parse_instance(Path(path).read_text())


def write_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(format_instance(instance))


def parse_prediction(text: str) -> Prediction:
    pred = []
    for lineno, line in _lines(text):
        v = _int(line, lineno, "predicted buyer")
        if v < 0:
            raise InvalidInputError(f"line {lineno}: negative predicted buyer {v}")
        pred.append(v)
    return Prediction(tuple(pred))


def format_prediction(prediction: Prediction, meta: Mapping[str, object] | None = None) -> str:
    out = io.StringIO()
    for k, v in (meta or {}).items():
        out.write(f"# {k}={v}\n")
    for p in prediction.pred:
        out.write(f"{p}\n")
    return out.getvalue()


def read_prediction(path: str | Path) -> Prediction:
    return parse_prediction(Path(path).read_text())


def write_prediction(
    prediction: Prediction, path: str | Path, meta: Mapping[str, object] | None = None
) -> None:
    Path(path).write_text(format_prediction(prediction, meta))


def parse_allocation(text: str, n_buyers: int, n_items: int) -> FractionalAllocation:
    alloc = FractionalAllocation(n_buyers, n_items)
    for lineno, line in _lines(text):
        parts = line.split()
        if len(parts) != 3:
            raise InvalidInputError(f"line {lineno}: expected 'item buyer fraction'")
        j = _int(parts[0], lineno, "item")
        i = _int(parts[1], lineno, "buyer")
        v = _float(parts[2], lineno, "fraction")
        if not (0 <= j < n_items and 0 <= i <= n_buyers):
            raise InvalidInputError(f"line {lineno}: entry ({j}, {i}) out of range")
        alloc.add(i, j, v)
    return alloc


def format_allocation(allocation: FractionalAllocation) -> str:
    rows = sorted((j, i, v) for (i, j), v in allocation.x.items() if v != 0.0)
    return "".join(f"{j} {i} {v!r}\n" for j, i, v in rows)


def write_allocation(allocation: FractionalAllocation, path: str | Path) -> None:
    Path(path).write_text(format_allocation(allocation))


def read_allocation(path: str | Path, n_buyers: int, n_items: int) -> FractionalAllocation:
    return parse_allocation(Path(path).read_text(), n_buyers, n_items)


def dump(text: str, target: str | Path | TextIO | None) -> None:
    """Write ``text`` to a path, an open stream, or stdout when ``target`` is None/'-'."""
    if target is None or target == "-":
        sys.stdout.write(text)
    elif hasattr(target, "write"):
        target.write(text)  # type: ignore[union-attr]
    else:
        Path(target).write_text(text)
