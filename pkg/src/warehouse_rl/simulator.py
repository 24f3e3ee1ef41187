"""Exact full-system simulation and the O(R) per-product training environment.

Within a day ``t`` the sequence is:

1. product agents place the order decided at the end of day ``t - 1``;
2. the warehouse receives factory arrivals;
3. each retailer receives shipments, sells, and requests (truck rule);
4. the warehouse ships, rationing proportionally when short;
5. gains and end-of-day stocks are recorded.

Step 1 sees the post-shipment state of day ``t - 1``, i.e. the same
information as an end-of-day decision.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .demand import build_predictions
from .encoding import Normalizer, build_observations
from .model import (ContractViolation, retailer_lack, retailer_requests, retailer_sell,
                    warehouse_ship)
from .scenario import DemandSeries, ScenarioConfig

TRACE_COLUMNS = ("day", "product", "order", "request_total", "ship_total", "stock",
                 "profit", "inventory_cost", "gain")


@dataclass
class DayView:
    """What the product agents see when ordering ahead of day ``t``."""

    t: int
    stock: np.ndarray        # [P] end-of-day stock of day t-1
    position: np.ndarray     # [P] stock plus undelivered orders
    pending: np.ndarray      # [P, Dmax] undelivered orders, pending[:, j] arrives on day t+j
    predictions: np.ndarray  # [P, predictdays] total demand for days t .. t+predictdays-1
    scenario: ScenarioConfig


@dataclass
class EpisodeTrace:
    order: np.ndarray           # [T, P]
    request_total: np.ndarray   # [T, P]
    ship_total: np.ndarray      # [T, P]
    stock: np.ndarray           # [T, P]
    arrival: np.ndarray         # [T, P]
    profit: np.ndarray          # [T, P]
    inventory_cost: np.ndarray  # [T, P]
    gain: np.ndarray            # [T, P]
    full: dict = field(default_factory=dict)  # [T, P, R] arrays when requested

    @property
    def T(self) -> int:
        return self.order.shape[0]

    def total_gain(self) -> float:
        return float(self.gain.sum())

    def summary(self) -> dict:
        """Per-day averages summed over products (the table layout)."""
        T = self.T
        profit = float(self.profit.sum()) / T
        cost = float(self.inventory_cost.sum()) / T
        return {"gain": profit - cost, "profit": profit, "inventory_cost": cost}

    def to_csv(self, path) -> None:
        T, P = self.order.shape
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TRACE_COLUMNS)
            for t in range(T):
                for k in range(P):
                    w.writerow([t, k] + [repr(float(a[t, k])) for a in (
                        self.order, self.request_total, self.ship_total, self.stock,
                        self.profit, self.inventory_cost, self.gain)])


def _run(scenario: ScenarioConfig, demand: DemandSeries, policy=None, infinite: bool = False,
         full: bool = False) -> EpisodeTrace:
    scenario.check_demand(demand)
    T, P, R = scenario.T, scenario.P, scenario.R
    price, stockcost = scenario.price, scenario.stockcost
    pdelay, rdelay = scenario.product_delay, scenario.retailer_delay
    trucksize, basestock = scenario.trucksize, scenario.basestock
    D = demand.values

    stock = np.zeros(P)
    pending = np.zeros((P, int(pdelay.max())))
    if policy is not None and not infinite:
        init = policy.initial_pipeline(scenario)
        if init is not None:
            pending[:, :init.shape[1]] = init
    r_stock = basestock.copy()
    inbound = np.zeros((int(rdelay.max()), P, R))
    rows = np.arange(P)
    cols = np.arange(R)
    preds = build_predictions(demand, T, scenario.predictdays, start=-1) if policy is not None else None

    out = {name: np.zeros((T, P)) for name in (
        "order", "request_total", "ship_total", "stock", "arrival", "profit", "inventory_cost", "gain")}
    fulls = {name: np.zeros((T, P, R)) for name in (
        "request", "ship", "retailer_stock", "sales", "retailer_arrival", "lack")} if full else {}

    for t in range(T):
        if policy is not None and not infinite:
            # column by column so the sum is sequential like the scalar definition
            undelivered = np.zeros(P)
            for j in range(pending.shape[1]):
                undelivered = undelivered + pending[:, j]
            position = stock + undelivered
            view = DayView(t, stock.copy(), position, pending.copy(), preds[t].T.copy(), scenario)
            orders = np.asarray(policy.orders(view), dtype=float)
            if orders.shape != (P,) or not np.all(np.isfinite(orders)) or np.any(orders < 0):
                raise ContractViolation(f"policy returned invalid orders on day {t}: {orders}")
            pending[rows, pdelay - 1] = orders
            out["order"][t] = orders

        arrival = pending[:, 0].copy()
        stock_plus = stock + arrival
        pending[:, :-1] = pending[:, 1:]
        pending[:, -1] = 0.0

        r_arrival = inbound[0]
        r_plus = r_stock + r_arrival
        sales, r_stock = retailer_sell(r_plus, D[t])
        in_transit = inbound[1:].sum(axis=0)
        lack = retailer_lack(basestock, r_stock, in_transit)
        requests = retailer_requests(lack, trucksize)

        if infinite:
            ships = requests
            new_stock = stock_plus
            profit = price * ships.sum(axis=1)
            cost = np.zeros(P)
        else:
            new_stock, ships, profit, cost, _ = warehouse_ship(stock_plus, requests, price, stockcost)

        if full:
            fulls["retailer_arrival"][t] = r_arrival
            fulls["request"][t] = requests
            fulls["ship"][t] = ships
            fulls["retailer_stock"][t] = r_stock
            fulls["sales"][t] = sales
            fulls["lack"][t] = lack
        inbound[:-1] = inbound[1:]
        inbound[-1] = 0.0
        inbound[rdelay - 1, :, cols] = ships.T

        stock = new_stock
        out["arrival"][t] = arrival
        out["request_total"][t] = requests.sum(axis=1)
        out["ship_total"][t] = ships.sum(axis=1)
        out["stock"][t] = stock
        out["profit"][t] = profit
        out["inventory_cost"][t] = cost
        out["gain"][t] = profit - cost

    return EpisodeTrace(full=fulls, **out)


def simulate_full(scenario: ScenarioConfig, demand: DemandSeries, policy, full: bool = False) -> EpisodeTrace:
    """Run ``T`` days of the exact system under ``policy`` (O(PR) per day)."""
    return _run(scenario, demand, policy, full=full)


def precompute_request_star(scenario: ScenarioConfig, demand: DemandSeries):
    """Requests under an inexhaustible warehouse, and the truck days they imply.

    Returns ``(request_star [T, P, R], schedule [T, R])``.
    """
    trace = _run(scenario, demand, infinite=True, full=True)
    request_star = trace.full["request"]
    return request_star, truck_schedule(request_star)


def truck_schedule(request_star: np.ndarray) -> np.ndarray:
    return request_star.sum(axis=1) > 0


def mean_daily_request(request_star: np.ndarray) -> np.ndarray:
    """Per-product ``sum_t sum_i request* / T``."""
    return request_star.sum(axis=(0, 2)) / request_star.shape[0]


def default_maxorder(request_star: np.ndarray) -> float:
    """Twice the mean (over products) daily unconstrained request."""
    return float(2.0 * mean_daily_request(request_star).mean())


def approx_requests(t: int, i: int, lack: float, schedule: np.ndarray) -> float:
    """Training-time request: the lack on precomputed truck days, else zero."""
    return float(lack) if schedule[t, i] else 0.0


class ApproxEnv:
    """Single-product environment with truck days frozen from request*.

    Only product ``k``'s warehouse and its ``R`` retailer slots are simulated,
    so a step costs O(R) regardless of the number of products.
    """

    def __init__(self, scenario: ScenarioConfig, demand: DemandSeries, schedule: np.ndarray,
                 normalizer: Normalizer | None = None, record: bool = False):
        scenario.check_demand(demand)
        if schedule.shape != (scenario.T, scenario.R):
            raise ContractViolation(f"schedule shape {schedule.shape} != (T, R)")
        self.scenario = scenario
        self.T = scenario.T
        self.predictdays = scenario.predictdays
        self.demand = demand.values
        self.totals = demand.values.sum(axis=2)  # [T_ext, P] for predictions
        self.schedule = np.ascontiguousarray(schedule, dtype=bool)
        self.norm = normalizer or Normalizer()
        self.record = record
        self._price, self._stockcost = scenario.price, scenario.stockcost
        self._pdelay = scenario.product_delay
        self._basestock = scenario.basestock
        self.trucksize = scenario.trucksize
        self.rdelay = scenario.retailer_delay
        self._cols = np.arange(scenario.R)
        self._dmax = int(self.rdelay.max())
        self.k = None
        self.t = None
        self.done = True

    def reset(self, k: int) -> np.ndarray:
        if not 0 <= k < self.scenario.P:
            raise ContractViolation(f"product index {k} out of range")
        self.k = k
        self.price = float(self._price[k])
        self.stockcost = float(self._stockcost[k])
        self.delay = int(self._pdelay[k])
        self.demand_k = np.ascontiguousarray(self.demand[:, k, :])
        self.pred_k = np.ascontiguousarray(self.totals[:, k])
        self.basestock_k = self._basestock[k].copy()
        self.stock = 0.0
        self.pending = [0.0] * (self.delay - 1)
        self.r_stock = self.basestock_k.copy()
        self.inbound = np.zeros((self._dmax, self.scenario.R))
        self._obs_head = np.array([self.price / self.norm.price, self.stockcost / self.norm.stockcost,
                                   self.delay / self.norm.delay])
        self.t = 0
        self.done = False
        self.history = []
        return self.observation()

    def position(self) -> float:
        return self.stock + sum(self.pending)

    def observation(self) -> np.ndarray:
        window = self.pred_k[self.t:self.t + self.predictdays]
        return np.concatenate([self._obs_head, [self.position() / self.norm.kg], window / self.norm.kg])

    def step(self, order: float):
        """Place ``order`` (kg) ahead of day ``t`` and simulate that day."""
        if self.done:
            raise ContractViolation("step() called on a finished episode; call reset()")
        if not order >= 0:
            raise ContractViolation(f"order must be nonnegative, got {order}")
        t = self.t
        self.pending.append(float(order))
        arrival = self.pending.pop(0)
        stock_plus = self.stock + arrival

        inbound = self.inbound
        r_plus = self.r_stock + inbound[0]
        sales, self.r_stock = retailer_sell(r_plus, self.demand_k[t])
        in_transit = inbound[1:].sum(axis=0)
        lack = retailer_lack(self.basestock_k, self.r_stock, in_transit)
        requests = np.where(self.schedule[t], lack, 0.0)

        new_stock, ships, profit, cost, gain = warehouse_ship(stock_plus, requests, self.price,
                                                              self.stockcost)
        inbound[:-1] = inbound[1:]
        inbound[-1] = 0.0
        inbound[self.rdelay - 1, self._cols] = ships
        self.stock = float(new_stock)
        reward = float(gain)
        if self.record:
            self.history.append({"order": float(order), "arrival": arrival, "stock_plus": stock_plus,
                                 "requests": requests, "ships": ships, "stock": self.stock,
                                 "profit": float(profit), "inventory_cost": float(cost),
                                 "reward": reward})
        self.t += 1
        self.done = self.t >= self.T
        return self.observation(), reward, self.done


def scenario_observations(view: DayView, norm: Normalizer) -> np.ndarray:
    sc = view.scenario
    return build_observations(sc.price, sc.stockcost, sc.product_delay, view.position,
                              view.predictions, norm)
