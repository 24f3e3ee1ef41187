"""Single-day transition kernel for product (warehouse) and retail agents.

Every function here is pure. The array-valued helpers broadcast, so the same
code drives the scalar dataclass API, the exact O(PR) simulator and the O(R)
training environment.

Day convention: a warehouse order is placed at the end of day ``t`` (after
that day's shipments) and arrives at the start of day ``t + delay``. The
pipeline of a :class:`WarehouseProductState` at a day boundary therefore holds
``delay`` entries, ``pipeline[0]`` arriving next morning.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# absolute tolerance for nonnegativity checks on real-valued quantities
TOL = 1e-12


class ContractViolation(ValueError):
    """An operation was called with inputs outside its contract."""


@dataclass(frozen=True)
class ProductSpec:
    price: float
    stockcost: float
    delay: int

    def __post_init__(self):
        if self.price < 0 or self.stockcost < 0:
            raise ContractViolation(f"negative price/stockcost in {self}")
        if int(self.delay) != self.delay or self.delay < 1:
            raise ContractViolation(f"delay must be an integer >= 1, got {self.delay}")


@dataclass(frozen=True)
class RetailerSpec:
    trucksize: float
    delay: int
    basestock: tuple[float, ...]  # indexed by product

    def __post_init__(self):
        if not self.trucksize > 0:
            raise ContractViolation(f"trucksize must be > 0, got {self.trucksize}")
        if int(self.delay) != self.delay or self.delay < 1:
            raise ContractViolation(f"delay must be an integer >= 1, got {self.delay}")
        if any(not b > 0 for b in self.basestock):
            raise ContractViolation("every basestock value must be > 0")


@dataclass(frozen=True)
class WarehouseProductState:
    stock: float
    pipeline: tuple[float, ...] = ()  # pending factory orders, next arrival first

    def __post_init__(self):
        if self.stock < -TOL or any(q < -TOL for q in self.pipeline):
            raise ContractViolation(f"negative quantity in {self}")


@dataclass(frozen=True)
class RetailerProductState:
    stock: float
    inbound: tuple[float, ...] = ()  # pending shipments, next arrival first

    def __post_init__(self):
        if self.stock < -TOL or any(q < -TOL for q in self.inbound):
            raise ContractViolation(f"negative quantity in {self}")


@dataclass(frozen=True)
class DayGain:
    profit: float
    inventory_cost: float
    gain: float

    def __post_init__(self):
        if self.gain != self.profit - self.inventory_cost:
            raise ContractViolation("gain must equal profit - inventory_cost")
        if self.profit < 0 or self.inventory_cost < 0:
            raise ContractViolation("profit and inventory cost are nonnegative")

    @classmethod
    def of(cls, profit: float, inventory_cost: float) -> "DayGain":
        return cls(float(profit), float(inventory_cost), float(profit - inventory_cost))


def _check_nonneg(name, x):
    if np.any(np.asarray(x) < -TOL):
        raise ContractViolation(f"{name} must be nonnegative")


def allocate_shipments(stock_plus, requests):
    """Ration ``stock_plus`` across retailers in proportion to their requests.

    ``requests`` has retailers on the last axis; ``stock_plus`` broadcasts
    against the remaining axes. When stock covers the total, every request
    is shipped exactly.
    """
    stock_plus = np.asarray(stock_plus, dtype=float)
    requests = np.asarray(requests, dtype=float)
    _check_nonneg("stock_plus", stock_plus)
    _check_nonneg("requests", requests)
    total = requests.sum(axis=-1)
    with np.errstate(over="ignore"):
        ratio = np.minimum(1.0, np.divide(stock_plus, total,
                                          out=np.ones_like(total), where=total > 0))
    return ratio[..., None] * requests


def warehouse_ship(stock_plus, requests, price, stockcost):
    """Ship against requests and book the day's gain.

    Returns ``(new_stock, shipments, profit, inventory_cost, gain)``. When
    stock is rationed the warehouse is emptied exactly, so ``new_stock`` is
    never negative through rounding.
    """
    stock_plus = np.asarray(stock_plus, dtype=float)
    ships = allocate_shipments(stock_plus, requests)
    shipped = ships.sum(axis=-1)
    total = np.asarray(requests, dtype=float).sum(axis=-1)
    new_stock = np.where(stock_plus >= total, stock_plus - total, 0.0)
    profit = price * shipped
    cost = stockcost * new_stock
    return new_stock, ships, profit, cost, profit - cost


def warehouse_day(state: WarehouseProductState, spec: ProductSpec, order_today: float,
                  requests: Sequence[float]):
    """Advance one product's warehouse by a day.

    Receives ``pipeline[0]``, ships against ``requests``, then appends
    ``order_today`` (placed at the end of the day) to the pipeline.
    """
    if order_today < 0:
        raise ContractViolation(f"order must be nonnegative, got {order_today}")
    if len(state.pipeline) != spec.delay:
        raise ContractViolation(
            f"pipeline length {len(state.pipeline)} != delay {spec.delay}")
    stock_plus = state.stock + state.pipeline[0]
    requests = np.asarray(requests, dtype=float).reshape(-1)
    new_stock, ships, profit, cost, _ = warehouse_ship(
        stock_plus, requests, spec.price, spec.stockcost)
    new_state = WarehouseProductState(
        float(new_stock), tuple(state.pipeline[1:]) + (float(order_today),))
    return new_state, ships, DayGain.of(float(profit), float(cost))


def retailer_sell(stock_plus, demand):
    """Sell as much of ``demand`` as stock allows; returns (sales, remaining)."""
    _check_nonneg("stock_plus", stock_plus)
    _check_nonneg("demand", demand)
    sales = np.minimum(demand, stock_plus)
    return sales, stock_plus - sales


def retailer_lack(basestock, stock, in_transit_total):
    """Shortfall of the retailer's inventory position below its target."""
    return np.maximum(0.0, basestock - stock - in_transit_total)


def retailer_requests(lacks, trucksize):
    """Truck-threshold ordering.

    ``lacks`` has products on axis 0. A retailer orders only when its summed
    lack reaches ``trucksize``, and then scales the lacks to fill the truck.
    """
    lacks = np.asarray(lacks, dtype=float)
    trucksize = np.asarray(trucksize, dtype=float)
    _check_nonneg("lacks", lacks)
    if np.any(trucksize <= 0):
        raise ContractViolation("trucksize must be > 0")
    total = lacks.sum(axis=0)
    go = total >= trucksize
    scale = np.divide(trucksize, total, out=np.zeros_like(total), where=go)
    return np.where(go, scale * lacks, 0.0)


def inventory_position(state: WarehouseProductState) -> float:
    """On-hand stock plus every ordered quantity not yet received."""
    return float(state.stock + sum(state.pipeline))


def retailer_day(state: RetailerProductState, basestock: float, demand: float):
    """Receive, sell and compute the lack for one (product, retailer) pair.

    Returns ``(state_after_sales, sales, lack)``; the day's shipment is not yet
    appended to ``inbound`` (see :func:`retailer_receive_shipment`).
    """
    stock_plus = state.stock + state.inbound[0]
    sales, remaining = retailer_sell(stock_plus, demand)
    rest = tuple(state.inbound[1:])
    lack = retailer_lack(basestock, remaining, sum(rest))
    return RetailerProductState(float(remaining), rest), float(sales), float(lack)


def retailer_receive_shipment(state: RetailerProductState, ship: float) -> RetailerProductState:
    return RetailerProductState(state.stock, state.inbound + (float(ship),))
