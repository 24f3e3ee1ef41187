"""Scalar tuning of the global base-stock multiplier ``x``."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .policies import BaseStockPolicy
from .simulator import simulate_full

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class TuneResult:
    best_x: float
    best_gain: float
    history: list = field(default_factory=list)  # (x, gain) in evaluation order

    def to_json(self) -> str:
        return json.dumps({"best_x": self.best_x, "best_gain": self.best_gain,
                           "history": [list(h) for h in self.history]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TuneResult":
        d = json.loads(text)
        return cls(d["best_x"], d["best_gain"], [tuple(h) for h in d["history"]])

    def history_to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "gain"])
            for x, g in self.history:
                w.writerow([repr(x), repr(g)])


def maximize_scalar(f, lo: float, hi: float, budget: int = 29, grid: int = 9) -> TuneResult:
    """Coarse grid over ``[lo, hi]`` then golden-section search in the best cell.

    ``budget`` counts every evaluation of ``f``; the grid takes
    ``min(grid, budget)`` of them and the rest refine.
    """
    if budget < 3:
        raise ValueError(f"budget must be at least 3 evaluations, got {budget}")
    if not hi > lo:
        raise ValueError("search range must have hi > lo")
    history = []

    def ev(x):
        g = float(f(x))
        history.append((float(x), g))
        return g

    n_grid = max(3, min(grid, budget))
    xs = np.linspace(lo, hi, n_grid)
    gains = [ev(x) for x in xs]
    b = int(np.argmax(gains))
    a, c = xs[max(b - 1, 0)], xs[min(b + 1, n_grid - 1)]

    left = budget - n_grid
    if left >= 2:
        x1 = c - INV_PHI * (c - a)
        x2 = a + INV_PHI * (c - a)
        f1, f2 = ev(x1), ev(x2)
        left -= 2
        while left > 0:
            if f1 >= f2:
                c, x2, f2 = x2, x1, f1
                x1 = c - INV_PHI * (c - a)
                f1 = ev(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + INV_PHI * (c - a)
                f2 = ev(x2)
            left -= 1

    best = max(range(len(history)), key=lambda j: (history[j][1], -j))
    return TuneResult(history[best][0], history[best][1], history)


def base_stock_gain(scenario, demand, request_star, x: float) -> float:
    policy = BaseStockPolicy.from_request_star(request_star, x, scenario)
    return simulate_full(scenario, demand, policy).total_gain()


def tune_x(scenario, demand, request_star, search_range=(0.0, 4.0), budget: int = 29,
           grid: int = 9) -> TuneResult:
    """Pick ``x`` maximizing total warehouse gain under the exact simulator."""
    lo, hi = search_range
    return maximize_scalar(lambda x: base_stock_gain(scenario, demand, request_star, x),
                           lo, hi, budget, grid)
