"""Set cover over a boolean coverage matrix ``C[candidate, point]``.

Greedy picks the candidate covering the most uncovered points (lowest index on
ties); its size is within ``H(n) <= ln(n) + 1`` of the optimum.  The exact
solver is a depth-first branch and bound on bitmasks, meant for small point
sets (a few dozen points).

When every candidate covers a contiguous run of points (always the case for
scalar systems on a sorted grid), the left-to-right sweep that extends each
cover as far right as possible is optimal and runs in ``O(n log n)``.
"""
from __future__ import annotations

import math

import numpy as np


class InfeasibleCoverError(ValueError):
    """Some points are covered by no candidate (the spanning number is +inf)."""

    def __init__(self, uncovered, horizon=None):
        self.uncovered = [int(i) for i in uncovered]
        self.horizon = horizon
        where = "" if horizon is None else f" at horizon {horizon:g}"
        head = self.uncovered[:10]
        more = "" if len(self.uncovered) <= 10 else f" (+{len(self.uncovered) - 10} more)"
        super().__init__(f"{len(self.uncovered)} grid points uncovered{where}: {head}{more}")

    def with_horizon(self, horizon: float) -> "InfeasibleCoverError":
        return InfeasibleCoverError(self.uncovered, horizon)


def _check_feasible(C: np.ndarray):
    covered = C.any(axis=0)
    if not covered.all():
        raise InfeasibleCoverError(np.nonzero(~covered)[0])


def greedy_cover(C) -> list[int]:
    C = np.asarray(C, dtype=bool)
    _check_feasible(C)
    uncovered = np.ones(C.shape[1], dtype=bool)
    chosen = []
    gains = C.sum(axis=1)
    while uncovered.any():
        j = int(np.argmax(gains))  # argmax returns the lowest index on ties
        chosen.append(j)
        newly = C[j] & uncovered
        uncovered &= ~C[j]
        # only candidates sharing a newly covered point lose gain
        gains -= C[:, newly].sum(axis=1)
    return chosen


def _masks(C: np.ndarray) -> list[int]:
    weights = [1 << i for i in range(C.shape[1])]
    return [sum(w for w, b in zip(weights, row) if b) for row in C]


def _reduce(masks: list[int]) -> list[int]:
    """Indices of candidates that are neither duplicates nor strict subsets of another."""
    order = sorted(range(len(masks)), key=lambda i: (-bin(masks[i]).count("1"), i))
    kept: list[int] = []
    for i in order:
        m = masks[i]
        if m == 0:
            continue
        if any((m | masks[k]) == masks[k] for k in kept):
            continue
        kept.append(i)
    return sorted(kept)


def exact_cover(C, max_nodes: int = 5_000_000) -> list[int]:
    """Minimum-cardinality cover by branch and bound.

    Branches on the uncovered point with the fewest covering candidates; prunes
    with ``|chosen| + ceil(|uncovered| / largest remaining set)``.  The greedy
    cover seeds the incumbent and is kept when already optimal.
    """
    C = np.asarray(C, dtype=bool)
    _check_feasible(C)
    n_pts = C.shape[1]
    if n_pts == 0:
        return []
    masks = _masks(C)
    kept = _reduce(masks)
    full = (1 << n_pts) - 1
    covering = [[k for k in kept if masks[k] >> p & 1] for p in range(n_pts)]
    for p in range(n_pts):
        covering[p].sort(key=lambda k: (-bin(masks[k]).count("1"), k))
    max_size = max(bin(masks[k]).count("1") for k in kept)

    best = greedy_cover(C)
    best = list(best)
    nodes = 0

    def search(covered: int, chosen: list[int]):
        nonlocal best, nodes
        nodes += 1
        if nodes > max_nodes:
            raise RuntimeError("branch and bound node limit exceeded")
        if covered == full:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        remaining = n_pts - bin(covered).count("1")
        if len(chosen) + math.ceil(remaining / max_size) >= len(best):
            return
        # most constrained uncovered point
        pick, opts = -1, None
        for p in range(n_pts):
            if not covered >> p & 1:
                cand = covering[p]
                if opts is None or len(cand) < len(opts):
                    pick, opts = p, cand
                    if len(opts) == 1:
                        break
        for k in opts:
            chosen.append(k)
            search(covered | masks[k], chosen)
            chosen.pop()

    search(0, [])
    return sorted(best)


def is_interval_matrix(C) -> bool:
    """True when the covered points of every candidate form a contiguous run."""
    C = np.asarray(C, dtype=bool)
    if C.shape[1] == 0:
        return True
    any_ = C.any(axis=1)
    first = np.argmax(C, axis=1)
    last = C.shape[1] - 1 - np.argmax(C[:, ::-1], axis=1)
    return bool(np.all(~any_ | (C.sum(axis=1) == last - first + 1)))


def interval_cover(C) -> list[int]:
    """Minimum cover when each row of ``C`` is a contiguous run of points."""
    C = np.asarray(C, dtype=bool)
    if not is_interval_matrix(C):
        raise ValueError("rows are not contiguous runs")
    _check_feasible(C)
    n = C.shape[1]
    rows = np.nonzero(C.any(axis=1))[0]
    first = np.argmax(C[rows], axis=1)
    last = n - 1 - np.argmax(C[rows][:, ::-1], axis=1)
    order = np.lexsort((rows, first))
    chosen, p, i = [], 0, 0
    best_r, best_j = -1, -1
    while p < n:
        while i < order.size and first[order[i]] <= p:
            j = order[i]
            if last[j] > best_r or (last[j] == best_r and rows[j] < best_j):
                best_r, best_j = int(last[j]), int(rows[j])
            i += 1
        # feasibility guarantees some run reaching p
        chosen.append(best_j)
        p = best_r + 1
    return sorted(chosen)


def assignment(C, chosen) -> dict[int, int]:
    """Map each point to the first chosen candidate (in selection order) covering it."""
    C = np.asarray(C, dtype=bool)
    out: dict[int, int] = {}
    for j in chosen:
        for p in np.nonzero(C[j])[0]:
            out.setdefault(int(p), int(j))
    return out


def solve_cover(C, method: str = "auto", exact_limit: int = 24) -> tuple[list[int], str]:
    """Dispatch: branch and bound for at most ``exact_limit`` points, the
    interval sweep when all rows are contiguous, greedy otherwise."""
    C = np.asarray(C, dtype=bool)
    if method == "auto":
        if C.shape[1] <= exact_limit:
            method = "exact"
        elif is_interval_matrix(C):
            method = "interval"
        else:
            method = "greedy"
    if method == "exact":
        return exact_cover(C), "ExactSmall"
    if method == "interval":
        return interval_cover(C), "ExactInterval"
    if method == "greedy":
        return greedy_cover(C), "Greedy"
    raise ValueError(f"unknown cover method {method!r}")
