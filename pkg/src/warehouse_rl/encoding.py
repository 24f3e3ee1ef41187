"""Observation and action encoding for the per-product ordering MDP.

An observation is ``[price, stockcost, delay, position, predictions...]``,
each divided by a fixed normalizer. It never carries the product index, so a
policy trained on one product set applies to any other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ContractViolation, ProductSpec, WarehouseProductState, inventory_position


@dataclass(frozen=True)
class Normalizer:
    price: float = 1.0
    stockcost: float = 1.0
    delay: float = 1.0
    kg: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(float(d["price"]), float(d["stockcost"]), float(d["delay"]), float(d["kg"]))

    def to_dict(self) -> dict:
        return {"price": self.price, "stockcost": self.stockcost, "delay": self.delay, "kg": self.kg}


def observation_size(predictdays: int) -> int:
    return 4 + predictdays


def build_observation(state: WarehouseProductState, spec: ProductSpec, predict_window,
                      norm: Normalizer = Normalizer()) -> np.ndarray:
    predict_window = np.asarray(predict_window, dtype=float)
    return build_observations(
        np.array([spec.price]), np.array([spec.stockcost]), np.array([spec.delay], dtype=float),
        np.array([inventory_position(state)]), predict_window[None, :], norm)[0]


def build_observations(price, stockcost, delay, position, predictions, norm: Normalizer) -> np.ndarray:
    """Batched observations; ``predictions`` is ``[N, predictdays]``."""
    head = np.stack([np.asarray(price, dtype=float) / norm.price,
                     np.asarray(stockcost, dtype=float) / norm.stockcost,
                     np.asarray(delay, dtype=float) / norm.delay,
                     np.asarray(position, dtype=float) / norm.kg], axis=1)
    return np.concatenate([head, np.asarray(predictions, dtype=float) / norm.kg], axis=1)


def decode_action(x, maxorder: float):
    """Binary action to an order quantity: ``x * maxorder``."""
    x = np.asarray(x)
    if np.any((x != 0) & (x != 1)):
        raise ContractViolation(f"action must be 0 or 1, got {x}")
    out = x * float(maxorder)
    return float(out) if out.ndim == 0 else out.astype(float)
