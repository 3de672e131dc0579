"""Optimal bipartite assignment with validity masks and a cost gate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

# Exact tie-breaking re-solves the problem per candidate; bound that work.
_TIE_BREAK_MAX_CELLS = 144


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]

    def total_cost(self, costs) -> float:
        costs = np.asarray(costs, dtype=float)
        return float(sum(costs[i, j] for i, j in self.pairs))


def _big_value(costs: np.ndarray, valid: np.ndarray) -> float:
    vals = costs[valid]
    if vals.size == 0:
        return 1.0
    span = float(vals.max() - vals.min())
    return float(vals.max()) + (span + 1.0) * (min(costs.shape) + 1)


def _solve(work: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return linear_sum_assignment(work)


def _lexicographic(work: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> dict[int, int]:
    """Among optimal assignments, give each row (in order) its lowest possible column."""
    best = work[rows, cols].sum()
    tol = 1e-12 * max(1.0, abs(best))
    chosen = dict(zip(rows.tolist(), cols.tolist()))
    n_rows, n_cols = work.shape
    fixed: dict[int, int] = {}
    for i in range(n_rows):
        if i not in chosen:
            continue
        for j in range(n_cols):
            if j == chosen[i]:
                break
            if j in fixed.values():
                continue
            # Force (i, j) together with the rows already fixed and re-solve the rest.
            free_rows = [r for r in range(n_rows) if r != i and r not in fixed]
            free_cols = [c for c in range(n_cols) if c != j and c not in fixed.values()]
            forced = work[i, j] + sum(work[r, c] for r, c in fixed.items())
            if free_rows and free_cols:
                sub = work[np.ix_(free_rows, free_cols)]
                rr, cc = _solve(sub)
                cand = forced + sub[rr, cc].sum()
                n_assigned = 1 + len(fixed) + len(rr)
            else:
                rr, cc = np.array([], dtype=int), np.array([], dtype=int)
                cand = forced
                n_assigned = 1 + len(fixed)
            if n_assigned == len(rows) and cand <= best + tol:
                chosen = dict(fixed)
                chosen[i] = j
                for a, b in zip(rr.tolist(), cc.tolist()):
                    chosen[free_rows[a]] = free_cols[b]
                break
        fixed[i] = chosen[i]
    return chosen


def solve_assignment(
    costs,
    gate: float,
    valid: Optional[np.ndarray] = None,
) -> Assignment:
    """Minimum-cost one-to-one assignment over valid entries, then gated.

    Invalid entries (``valid`` False or non-finite cost) are never paired;
    the solver first maximises the number of valid pairs and then minimises
    their total cost. Pairs whose cost exceeds ``gate`` are demoted to
    unmatched afterwards. Equal-cost optima resolve to the lowest column for
    the lowest row first.
    """
    if not np.isfinite(gate):
        raise ValueError("gate must be finite")
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        costs = costs.reshape(len(costs), -1) if costs.size else np.zeros((len(costs), 0))
    n_rows, n_cols = costs.shape
    mask = np.isfinite(costs)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    if n_rows == 0 or n_cols == 0 or not mask.any():
        return Assignment([], list(range(n_rows)), list(range(n_cols)))

    work = np.where(mask, costs, _big_value(costs, mask))
    rows, cols = _solve(work)
    if work.size <= _TIE_BREAK_MAX_CELLS:
        chosen = _lexicographic(work, rows, cols)
    else:
        chosen = dict(zip(rows.tolist(), cols.tolist()))

    pairs = []
    for i in sorted(chosen):
        j = chosen[i]
        if mask[i, j] and costs[i, j] <= gate:
            pairs.append((i, j))
    used_r = {i for i, _ in pairs}
    used_c = {j for _, j in pairs}
    return Assignment(
        pairs,
        [i for i in range(n_rows) if i not in used_r],
        [j for j in range(n_cols) if j not in used_c],
    )
