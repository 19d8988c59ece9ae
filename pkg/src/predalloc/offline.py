"""Offline optima: fractional OPT (max-flow / simplex) and integral OPT.

The fractional optimum is the denominator of every reported competitive
ratio; the integral optimum is the unperturbed prediction.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .core import (
    EPS,
    AdAuctionInstance,
    BoundedAllocationInstance,
    DualSolution,
    FractionalAllocation,
    Instance,
    InvalidInputError,
    budget_feasible_mapping,
)

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9


class SolverError(RuntimeError):
    """The LP/MIP backend failed to produce a usable answer."""


@dataclass
class OfflineSolution:
    value: float
    allocation: FractionalAllocation
    certificate: DualSolution | None = None
    mapping: list[int] | None = None
    optimal: bool = True
    method: str = ""
    integrality_gap: float | None = None


# ---------------------------------------------------------------------------
# max-flow (Dinic)


class _FlowNetwork:
    def __init__(self, n_nodes: int) -> None:
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, c: float) -> int:
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)
        return len(self.to) - 2

    def _bfs(self, s: int, t: int, tol: float) -> list[int] | None:
        level = [-1] * len(self.head)
        level[s] = 0
        q = deque([s])
        to, cap = self.to, self.cap
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = to[e]
                if level[v] < 0 and cap[e] > tol:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def max_flow(self, s: int, t: int, tol: float = 1e-12) -> float:
        total = 0.0
        to, cap, head = self.to, self.cap, self.head
        while True:
            level = self._bfs(s, t, tol)
            if level is None:
                return total
            it = [0] * len(head)
            # iterative blocking-flow DFS with current-arc pointers
            while True:
                stack = [s]
                path: list[int] = []
                while stack:
                    u = stack[-1]
                    if u == t:
                        break
                    advanced = False
                    while it[u] < len(head[u]):
                        e = head[u][it[u]]
                        v = to[e]
                        if cap[e] > tol and level[v] == level[u] + 1:
                            stack.append(v)
                            path.append(e)
                            advanced = True
                            break
                        it[u] += 1
                    if not advanced:
                        stack.pop()
                        if path:
                            path.pop()
                        if stack:
                            it[stack[-1]] += 1
                        level[u] = -1
                if not stack:
                    break
                push = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= push
                    cap[e ^ 1] += push
                total += push

    def reachable(self, s: int, tol: float = 1e-12) -> list[bool]:
        seen = [False] * len(self.head)
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if not seen[v] and self.cap[e] > tol:
                    seen[v] = True
                    q.append(v)
        return seen


def fractional_opt_bounded(instance: BoundedAllocationInstance) -> OfflineSolution:
    """Exact fractional optimum as a source -> items -> buyers -> sink max-flow."""
    n, m = instance.n_buyers, instance.n_items
    src, sink = 0, n + m + 1
    net = _FlowNetwork(n + m + 2)
    scale = max([*(it.price for it in instance.items), *instance.budgets, 1.0])
    edges: list[tuple[int, int, int]] = []
    for j, item in enumerate(instance.items):
        net.add_edge(src, 1 + j, item.price)
        for i in item.interested:
            edges.append((net.add_edge(1 + j, m + i, item.price), i, j))
    for i in range(1, n + 1):
        net.add_edge(m + i, sink, instance.budget(i))
    tol = 1e-13 * scale
    value = net.max_flow(src, sink, tol)
    alloc = FractionalAllocation(n, m)
    for e, i, j in edges:
        f = net.cap[e ^ 1]
        if f > tol:
            alloc.add(i, j, f / instance.items[j].price)
    # min cut: S = residual-reachable set
    side = net.reachable(src, tol)
    y = np.zeros(n + 1)
    z = np.zeros(m)
    for i in range(1, n + 1):
        if side[m + i]:
            y[i] = 1.0
    for j, item in enumerate(instance.items):
        if not side[1 + j] or any(not side[m + i] for i in item.interested):
            z[j] = item.price
    return OfflineSolution(value, alloc, DualSolution(y, z), method="maxflow")


# ---------------------------------------------------------------------------
# dense simplex


@dataclass
class SimplexResult:
    x: np.ndarray
    duals: np.ndarray
    value: float
    iterations: int


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_iter: int = 50_000) -> SimplexResult:
    """Maximise ``c @ x`` subject to ``A x <= b``, ``x >= 0`` with ``b >= 0``.

    Dense tableau with the slack basis as the starting point. Dantzig pricing
    is used until a degenerate pivot stalls progress, after which Bland's rule
    takes over to guarantee termination.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    rows, cols = A.shape
    if np.any(b < 0):
        raise InvalidInputError("simplex_max needs a non-negative right-hand side")
    T = np.zeros((rows + 1, cols + rows + 1))
    T[:rows, :cols] = A
    T[:rows, cols : cols + rows] = np.eye(rows)
    T[:rows, -1] = b
    T[-1, :cols] = -c
    basis = list(range(cols, cols + rows))
    bland = False
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        red = T[-1, :-1]
        if bland:
            cand = np.flatnonzero(red < -PIVOT_TOL)
            if cand.size == 0:
                break
            enter = int(cand[0])
        else:
            enter = int(np.argmin(red))
            if red[enter] >= -PIVOT_TOL:
                break
        col = T[:rows, enter]
        pos = col > PIVOT_TOL
        if not pos.any():
            raise SolverError("LP is unbounded")
        ratios = np.full(rows, np.inf)
        ratios[pos] = T[:rows, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))
        leave = int(min(ties, key=lambda r: basis[r]))
        if best <= PIVOT_TOL:
            stall += 1
            if stall > 50:
                bland = True
        else:
            stall = 0
        T[leave] /= T[leave, enter]
        for r in range(rows + 1):
            if r != leave and T[r, enter] != 0.0:
                T[r] -= T[r, enter] * T[leave]
        basis[leave] = enter
    else:
        raise SolverError(f"simplex did not converge in {max_iter} iterations")
    x = np.zeros(cols + rows)
    for r, var in enumerate(basis):
        x[var] = T[r, -1]
    duals = T[-1, cols : cols + rows].copy()
    return SimplexResult(x[:cols], duals, float(T[-1, -1]), it)


# ---------------------------------------------------------------------------
# generic LP over either instance kind


def _lp_arrays(
    budgets: Sequence[float], item_prices: Sequence[Mapping[int, float]]
) -> tuple[list[tuple[int, int]], np.ndarray, sparse.csr_matrix, np.ndarray]:
    n, m = len(budgets), len(item_prices)
    var: list[tuple[int, int]] = []
    price: list[float] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for j, prices in enumerate(item_prices):
        for i, p in sorted(prices.items()):
            k = len(var)
            var.append((i, j))
            price.append(p)
            rows += [i - 1, n + j]
            cols += [k, k]
            vals += [p, 1.0]
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n + m, len(var)))
    rhs = np.concatenate([np.asarray(budgets, dtype=float), np.ones(m)])
    return var, np.asarray(price), A, rhs


def _item_prices(instance: Instance) -> list[dict[int, float]]:
    return [instance.prices(j) for j in range(instance.n_items)]


def lp_opt(instance: Instance, method: str = "auto") -> OfflineSolution:
    """Fractional optimum of the packing LP with its optimal dual certificate.

    ``method`` is ``"simplex"`` (dense, self-contained), ``"highs"`` (sparse
    backend) or ``"auto"`` (simplex while the tableau stays small).
    """
    n, m = instance.n_buyers, instance.n_items
    var, c, A, rhs = _lp_arrays(instance.budgets, _item_prices(instance))
    if method == "auto":
        method = "simplex" if (n + m) * (len(var) + n + m) <= 400_000 else "highs"
    alloc = FractionalAllocation(n, m)
    if not var:
        return OfflineSolution(0.0, alloc, DualSolution.zeros(n, m), method=method)
    if method == "simplex":
        res = simplex_max(c, A.toarray(), rhs)
        x, duals, value = res.x, res.duals, res.value
    elif method == "highs":
        out = linprog(-c, A_ub=A, b_ub=rhs, bounds=(0, None), method="highs")
        if out.status != 0:
            raise SolverError(f"HiGHS failed: {out.message}")
        x, duals, value = out.x, -out.ineqlin.marginals, float(-out.fun)
    else:
        raise InvalidInputError(f"unknown LP method {method!r}")
    for k, (i, j) in enumerate(var):
        if x[k] > 1e-12:
            alloc.add(i, j, float(x[k]))
    y = np.concatenate([[0.0], np.maximum(duals[:n], 0.0)])
    z = np.maximum(duals[n:], 0.0)
    return OfflineSolution(value, alloc, DualSolution(y, z), method=method)


def fractional_opt_auction(instance: AdAuctionInstance, method: str = "auto") -> OfflineSolution:
    return lp_opt(instance, method)


def fractional_opt(instance: Instance) -> OfflineSolution:
    if isinstance(instance, BoundedAllocationInstance):
        return fractional_opt_bounded(instance)
    return fractional_opt_auction(instance)


# ---------------------------------------------------------------------------
# integral optimum


def _flow_bound(budgets: Sequence[float], item_prices: Sequence[Mapping[int, float]]) -> float:
    n, m = len(budgets), len(item_prices)
    net = _FlowNetwork(n + m + 2)
    sink = n + m + 1
    scale = 1.0
    for j, prices in enumerate(item_prices):
        if not prices:
            continue
        p = max(prices.values())
        scale = max(scale, p)
        net.add_edge(0, 1 + j, p)
        for i, pi in prices.items():
            net.add_edge(1 + j, 1 + m + i - 1, pi)
    for i, B in enumerate(budgets):
        if B > 0:
            net.add_edge(1 + m + i, sink, B)
    return net.max_flow(0, sink, 1e-13 * scale)


def _lp_bound(budgets: Sequence[float], item_prices: Sequence[Mapping[int, float]]) -> float:
    var, c, A, rhs = _lp_arrays(budgets, item_prices)
    if not var:
        return 0.0
    return simplex_max(c, A.toarray(), rhs).value


def _greedy_mapping(instance: Instance) -> list[int]:
    residual = [math.inf, *instance.budgets]
    mapping = [0] * instance.n_items
    for j in range(instance.n_items):
        best, best_key = 0, None
        for i, p in sorted(instance.prices(j).items()):
            if p <= residual[i] * (1 + EPS):
                key = (p, residual[i] - p)
                if best_key is None or key > best_key:
                    best, best_key = i, key
        if best:
            mapping[j] = best
            residual[best] -= instance.prices(j)[best]
    return mapping


def _mapping_value(instance: Instance, mapping: Sequence[int]) -> float:
    return float(sum(instance.prices(j)[i] for j, i in enumerate(mapping) if i))


def integral_opt_bnb(instance: Instance, time_budget: float = 10.0) -> OfflineSolution:
    """Best-bound branch-and-bound over item -> buyer assignments.

    Nodes fix items in arrival order; the bound is the fractional optimum of
    the unfixed items against the residual budgets, with edges whose price no
    longer fits removed. Ties in the bound are broken by depth then by the
    order of creation, so the search is deterministic.
    """
    prices = _item_prices(instance)
    bound_fn = _flow_bound if isinstance(instance, BoundedAllocationInstance) else _lp_bound
    m = instance.n_items
    best_map = _greedy_mapping(instance)
    best_val = _mapping_value(instance, best_map)
    deadline = time.monotonic() + time_budget

    def bound(depth: int, residual: tuple[float, ...]) -> float:
        rest = [
            {i: p for i, p in prices[k].items() if p <= residual[i - 1] * (1 + EPS)}
            for k in range(depth, m)
        ]
        return bound_fn(residual, rest)

    root_res = tuple(instance.budgets)
    # heap key: (-bound, -depth, creation order) so deeper nodes win bound ties
    counter = 0
    heap = [(-bound(0, root_res), 0, counter, 0.0, root_res, ())]
    optimal = True
    tol = 1e-9 * max(1.0, best_val)
    while heap:
        if time.monotonic() > deadline:
            optimal = False
            break
        neg_b, neg_depth, _, val, residual, assign = heapq.heappop(heap)
        depth = -neg_depth
        if -neg_b <= best_val + tol:
            break  # best-first: nothing left can improve
        if depth == m:
            continue
        children = [(0, val, residual)]
        for i, p in sorted(prices[depth].items()):
            if p <= residual[i - 1] * (1 + EPS):
                r = list(residual)
                r[i - 1] = max(r[i - 1] - p, 0.0)
                children.append((i, val + p, tuple(r)))
        for i, v, r in children:
            a = assign + (i,)
            if v > best_val + tol:
                best_val, best_map = v, list(a) + [0] * (m - depth - 1)
                tol = 1e-9 * max(1.0, best_val)
            if depth + 1 < m:
                b = v + bound(depth + 1, r)
                if b > best_val + tol:
                    counter += 1
                    heapq.heappush(heap, (-b, -(depth + 1), counter, v, r, a))
    alloc = FractionalAllocation.from_mapping(instance, best_map)
    return OfflineSolution(best_val, alloc, mapping=best_map, optimal=optimal, method="bnb")


def _milp_mapping(
    budgets: Sequence[float], item_prices: Sequence[Mapping[int, float]], time_budget: float
) -> tuple[list[int] | None, bool, float]:
    """Solve the 0/1 program with HiGHS; returns (mapping or None, proven, dual bound)."""
    m = len(item_prices)
    var, c, A, rhs = _lp_arrays(budgets, item_prices)
    if not var:
        return [0] * m, True, 0.0
    res = milp(
        -c,
        constraints=LinearConstraint(A, -np.inf, rhs),
        integrality=np.ones(len(var)),
        bounds=Bounds(0, 1),
        options={"time_limit": max(float(time_budget), 0.1), "mip_rel_gap": 1e-9, "presolve": True},
    )
    bound = -float(getattr(res, "mip_dual_bound", None) or -math.inf)
    if res.x is None:
        return None, False, bound
    mapping = [0] * m
    for k, (i, j) in enumerate(var):
        if res.x[k] > 0.5:
            mapping[j] = i
    return mapping, res.status == 0, bound


def _rounded_mapping(instance: Instance, time_budget: float) -> tuple[list[int], float]:
    """Fix the integral part of a vertex LP optimum, solve the fractional rest exactly.

    A basic optimum has at most n + m basic variables, so only a handful of
    items end up fractional; the leftover sub-problem is tiny. Unsold items
    are then offered greedily to whatever budget remains. Also returns the
    LP optimum.
    """
    prices = _item_prices(instance)
    var, c, A, rhs = _lp_arrays(instance.budgets, prices)
    mapping = [0] * instance.n_items
    if not var:
        return mapping, 0.0
    res = linprog(-c, A_ub=A, b_ub=rhs, bounds=(0, 1), method="highs-ds")
    if res.x is None:
        raise SolverError(f"LP relaxation failed: {res.message}")
    residual = [math.inf, *instance.budgets]
    open_items: set[int] = set(range(instance.n_items))
    for k, (i, j) in enumerate(var):
        if res.x[k] > 1 - 1e-9:
            mapping[j] = i
            residual[i] -= prices[j][i]
            open_items.discard(j)
    order = sorted(open_items)
    sub = [{i: p for i, p in prices[j].items() if p <= residual[i] * (1 + EPS)} for j in order]
    sub_budgets = [max(r, 0.0) for r in residual[1:]]
    sub_map, _, _ = _milp_mapping(sub_budgets, sub, time_budget)
    for j, i in zip(order, sub_map or [0] * len(order)):
        if i:
            mapping[j] = i
            residual[i] -= prices[j][i]
    for j in order:
        if not mapping[j]:
            fits = [(p, i) for i, p in prices[j].items() if p <= residual[i] * (1 + EPS)]
            if fits:
                p, i = max(fits)
                mapping[j] = i
                residual[i] -= p
    return mapping, -float(res.fun)


def integral_opt_milp(instance: Instance, time_budget: float = 10.0) -> OfflineSolution:
    """Integral optimum through the HiGHS MIP solver.

    An LP-rounding incumbent is computed first; the full MIP then gets the
    remaining time. Optimality counts as proven when HiGHS closes its gap or
    the incumbent meets the LP bound.
    """
    n, m = instance.n_buyers, instance.n_items
    start = time.monotonic()
    candidates = [_greedy_mapping(instance)]
    rounded, lp_value = _rounded_mapping(instance, time_budget / 4)
    if not _violates(instance, rounded):
        candidates.append(rounded)
    best = max(candidates, key=lambda mp: _mapping_value(instance, mp))
    proven = _mapping_value(instance, best) >= lp_value * (1 - 1e-9)
    if not proven:
        left = time_budget - (time.monotonic() - start)
        full, proven_full, bound = _milp_mapping(instance.budgets, _item_prices(instance), left)
        if full is not None and _violates(instance, full):
            log.warning("MIP incumbent violates a budget; ignoring it")
            full, proven_full = None, False
        if full is not None and _mapping_value(instance, full) >= _mapping_value(instance, best):
            best = full
        else:
            proven_full = False
        proven = proven_full or _mapping_value(instance, best) >= bound * (1 - 1e-9)
    value = _mapping_value(instance, best)
    alloc = FractionalAllocation.from_mapping(instance, best)
    return OfflineSolution(value, alloc, mapping=best, optimal=proven, method="milp")


def _violates(instance: Instance, mapping: Sequence[int]) -> bool:
    return bool(budget_feasible_mapping(instance, mapping))


def integral_opt(
    instance: Instance,
    time_budget: float = 10.0,
    method: str = "auto",
    fractional: OfflineSolution | None = None,
) -> OfflineSolution:
    """Best integral assignment (each item wholly to one buyer or unsold).

    ``method`` is ``"bnb"`` (own search), ``"milp"`` (HiGHS) or ``"auto"``
    (own search for tiny instances). The returned solution records whether
    optimality was proven and the integrality gap against the fractional
    optimum.
    """
    if method == "auto":
        method = "bnb" if instance.n_items <= 12 else "milp"
    if method == "bnb":
        sol = integral_opt_bnb(instance, time_budget)
    elif method == "milp":
        sol = integral_opt_milp(instance, time_budget)
    else:
        raise InvalidInputError(f"unknown integral method {method!r}")
    frac = fractional if fractional is not None else fractional_opt(instance)
    sol.integrality_gap = frac.value / sol.value - 1.0 if sol.value > 0 else math.inf
    if sol.integrality_gap < 0 and sol.integrality_gap > -1e-7:
        sol.integrality_gap = 0.0
    return sol
