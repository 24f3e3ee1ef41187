"""Artificial demand, attribute sampling and order predictions."""
from __future__ import annotations

import logging

import numpy as np

from .model import ContractViolation, ProductSpec, RetailerSpec
from .scenario import DEFAULT_RANGES, DemandSeries, ScenarioConfig

log = logging.getLogger(__name__)

YEAR = 365.0


def seasonal_demand(t, offset, fluc, C):
    return (1.0 + np.cos(2.0 * np.pi * (t + offset) / YEAR) * fluc) * C


def gen_artificial_demand(P: int, R: int, T_ext: int, C: float, seed: int):
    """Yearly-cosine demand with per-product peak day and per-pair amplitude.

    Returns ``(DemandSeries, offsets[P], fluc[P, R])``.
    """
    if not C > 0:
        raise ContractViolation("C must be > 0")
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, YEAR, size=P)
    fluc = rng.uniform(0.0, 1.0, size=(P, R))
    t = np.arange(T_ext, dtype=float)[:, None, None]
    values = seasonal_demand(t, offsets[None, :, None], fluc[None, :, :], C)
    # cos rounding can dip a hair below zero when fluc == 1
    values = np.maximum(values, 0.0)
    return DemandSeries(values), offsets, fluc


def sample_attributes(P: int, R: int, demand: DemandSeries | None = None, seed: int = 0,
                      ranges: dict | None = None, bs_mult: float = 1.5, bs_slack: float = 1.0,
                      T: int | None = None, truck_cover: float = 1.0):
    """Draw product and retailer attributes uniformly within ``ranges``.

    Retailer targets are ``bs_mult * mean daily demand * (delay_i + bs_slack)``
    with the mean taken over the first ``T`` days (all days if ``T`` is None).
    ``truck_cover`` adds that fraction of a truckload, split across products
    by their demand share, so that the summed lack can actually reach the
    truck threshold.
    """
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    for name, (lo, hi) in ranges.items():
        if lo > hi:
            raise ContractViolation(f"range {name} has lo > hi")
    rng = np.random.default_rng(seed)
    price = rng.uniform(*ranges["price"], size=P)
    stockcost = rng.uniform(*ranges["stockcost"], size=P)
    pdelay = rng.integers(ranges["product_delay"][0], ranges["product_delay"][1] + 1, size=P)
    truck = rng.uniform(*ranges["trucksize"], size=R)
    rdelay = rng.integers(ranges["retailer_delay"][0], ranges["retailer_delay"][1] + 1, size=R)

    if demand is None:
        mean = np.ones((P, R))
    else:
        if (demand.P, demand.R) != (P, R):
            raise ContractViolation("demand shape does not match P, R")
        mean = demand.values[: (T or demand.T_ext)].mean(axis=0)
    # zero-demand pairs still need a strictly positive target
    base = bs_mult * mean * (rdelay[None, :] + bs_slack)
    if truck_cover:
        col = mean.sum(axis=0)
        share = np.divide(mean, col[None, :], out=np.full_like(mean, 1.0 / P), where=col[None, :] > 0)
        base = base + truck_cover * truck[None, :] * share
    base = np.maximum(base, 1e-6)

    products = [ProductSpec(float(price[k]), float(stockcost[k]), int(pdelay[k])) for k in range(P)]
    retailers = [RetailerSpec(float(truck[i]), int(rdelay[i]), tuple(float(b) for b in base[:, i]))
                 for i in range(R)]
    stuck = [i for i in range(R) if truck[i] > base[:, i].sum()]
    if stuck:
        log.warning("%d retailer(s) have trucksize above their total target and will never order",
                    len(stuck))
    return products, retailers


def build_predictions(demand: DemandSeries, T: int, predictdays: int, start: int = 0) -> np.ndarray:
    """``predict[t][j][k] = sum_i demand[t + 1 + j][k][i]`` for ``t`` in ``start .. start+T-1``.

    Row ``t`` is what the product agents know when deciding at the end of day ``t``.
    """
    last = start + T + predictdays
    if start + 1 < 0 or last > demand.T_ext:
        raise ContractViolation(
            f"predictions need demand days {start + 1}..{last - 1}, have {demand.T_ext}")
    totals = demand.values.sum(axis=2)  # [T_ext, P]
    idx = np.arange(start, start + T)[:, None] + 1 + np.arange(predictdays)[None, :]
    return totals[idx]  # [T, predictdays, P]


def default_demand_scale(P: int, ranges: dict | None = None) -> float:
    """``C`` such that a retailer's mean daily demand equals the smallest truck."""
    lo = {**DEFAULT_RANGES, **(ranges or {})}["trucksize"][0]
    return float(lo) / P


def make_artificial_scenario(P: int, R: int, T: int, predictdays: int = 14, C: float | None = None,
                             seed: int = 0, ranges: dict | None = None,
                             bs_mult: float = 1.5, bs_slack: float = 1.0, truck_cover: float = 1.0):
    """Demand plus sampled attributes for one artificial scenario."""
    if C is None:
        C = default_demand_scale(P, ranges)
    ss = np.random.SeedSequence(seed)
    demand_seed, attr_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    demand, offsets, fluc = gen_artificial_demand(P, R, T + predictdays, C, demand_seed)
    products, retailers = sample_attributes(P, R, demand, attr_seed, ranges, bs_mult, bs_slack, T=T,
                                             truck_cover=truck_cover)
    scenario = ScenarioConfig(
        T=T, predictdays=predictdays, products=products, retailers=retailers, seed=seed,
        ranges={**DEFAULT_RANGES, **(ranges or {})},
        meta={"kind": "artificial", "C": C, "bs_mult": bs_mult, "bs_slack": bs_slack,
              "truck_cover": truck_cover, "demand_seed": demand_seed, "attr_seed": attr_seed,
              "offsets": offsets.tolist()})
    return scenario, demand
