"""Ordering policies: the common interface, base-stock and the clairvoyant oracle."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ContractViolation
from .simulator import DayView, mean_daily_request


class OrderingPolicy:
    """Emits ``order[k] >= 0`` for every product ahead of each day."""

    kind = "abstract"

    def orders(self, view: DayView) -> np.ndarray:
        raise NotImplementedError

    def initial_pipeline(self, scenario):
        """Orders already in flight before the first day, ``[P, Dmax]`` or None."""
        return None

    def params(self) -> dict:
        return {}

    def to_json(self, seed=None) -> str:
        return json.dumps({"kind": self.kind, "params": self.params(), "seed": seed},
                          indent=2, sort_keys=True)


def base_stock_order(basestock, position):
    """Order up to ``basestock`` counting everything already ordered."""
    return np.maximum(0.0, np.asarray(basestock, dtype=float) - position)


def compute_base_stock_values(request_star: np.ndarray, x: float, delays) -> np.ndarray:
    """``mean daily request* * x * delay_k`` per product."""
    if x < 0:
        raise ContractViolation("x must be nonnegative")
    return mean_daily_request(request_star) * x * np.asarray(delays, dtype=float)


class BaseStockPolicy(OrderingPolicy):
    kind = "base_stock"

    def __init__(self, basestock, x: float | None = None):
        self.basestock = np.asarray(basestock, dtype=float)
        if np.any(self.basestock < 0):
            raise ContractViolation("base-stock targets must be nonnegative")
        self.x = x

    @classmethod
    def from_request_star(cls, request_star, x: float, scenario) -> "BaseStockPolicy":
        return cls(compute_base_stock_values(request_star, x, scenario.product_delay), x=x)

    def orders(self, view: DayView) -> np.ndarray:
        return base_stock_order(self.basestock, view.position)

    def params(self) -> dict:
        return {"x": self.x, "basestock": self.basestock.tolist()}


class OraclePolicy(OrderingPolicy):
    """Orders exactly the unconstrained requests ``delay_k`` days ahead.

    The pipeline is pre-seeded with the requests of the first ``delay_k - 1``
    days, so the warehouse never holds stock overnight.
    """

    kind = "oracle"

    def __init__(self, request_star: np.ndarray, delays):
        self.totals = request_star.sum(axis=2)  # [T, P]
        self.delays = np.asarray(delays, dtype=int)
        self.T, self.P = self.totals.shape

    def orders(self, view: DayView) -> np.ndarray:
        # decision ahead of day t arrives on day t + delay - 1
        arrive = view.t + self.delays - 1
        ok = arrive < self.T
        out = np.zeros(self.P)
        out[ok] = self.totals[arrive[ok], np.flatnonzero(ok)]
        return out

    def initial_pipeline(self, scenario):
        pipe = np.zeros((self.P, int(self.delays.max())))
        for k, d in enumerate(self.delays):
            n = min(d - 1, self.T)
            pipe[k, :n] = self.totals[:n, k]
        return pipe

    def params(self) -> dict:
        return {"delays": self.delays.tolist()}


class TablePolicy(OrderingPolicy):
    """Replays a fixed ``[T, P]`` order table."""

    kind = "table"

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def orders(self, view: DayView) -> np.ndarray:
        return self.table[view.t]


def load_policy_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing policy file: {path}")
    d = json.loads(path.read_text())
    if d.get("kind") != "base_stock":
        raise ValueError(f"{path}: only base_stock policies are stored as JSON, got {d.get('kind')}")
    return BaseStockPolicy(d["params"]["basestock"], x=d["params"].get("x"))
