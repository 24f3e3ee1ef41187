"""Order-history ingestion and preprocessing into demand tensors.

Input rows follow the Instacart layout, one product per row::

    customer_id,product_id,days_since_first_order,day_of_week

Rows sharing (customer, day, weekday) form one order. A ``product_id`` cell
may also hold a brace set such as ``{p1,p2}``.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .demand import YEAR, sample_attributes
from .scenario import DEFAULT_RANGES, DemandSeries, ScenarioConfig

log = logging.getLogger(__name__)

COLUMNS = ("customer_id", "product_id", "days_since_first_order", "day_of_week")


class PreprocessError(RuntimeError):
    """Too few customers or products survived a filter stage."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


@dataclass(frozen=True)
class OrderRecord:
    customer_id: str
    product_ids: frozenset
    days_since_first_order: int
    day_of_week: int

    def __post_init__(self):
        if not self.product_ids:
            raise ValueError("an order needs at least one product")


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


def _parse_products(cell: str) -> list[str]:
    cell = cell.strip()
    if cell.startswith("{") and cell.endswith("}"):
        cell = cell[1:-1]
    return [p.strip() for p in cell.split(",") if p.strip()]


def ingest_orders(source, delimiter: str = ","):
    """Parse an order-history table.

    ``source`` is a path or an open text stream. Returns ``(records, errors)``;
    a missing column raises ``ValueError``, bad rows are collected with their
    line numbers.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"missing order history: {path}")
        text = path.read_text()
    else:
        text = source.read()
    if not text.strip():
        return [], []

    reader = csv.reader(io.StringIO(text), delimiter=delimiter, skipinitialspace=True)
    header = [h.strip() for h in next(reader)]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise ValueError(f"order history is missing column(s): {', '.join(missing)}")
    col = {c: header.index(c) for c in COLUMNS}

    orders: dict[tuple, set] = {}
    errors: list[RowError] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) > len(header):
            # an unquoted brace set gets split by the delimiter; glue it back
            row = _rejoin_braces(row, delimiter)
        if len(row) != len(header):
            errors.append(RowError(line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        cust = row[col["customer_id"]].strip()
        prods = _parse_products(row[col["product_id"]])
        try:
            days = int(row[col["days_since_first_order"]])
            dow = int(row[col["day_of_week"]])
        except ValueError:
            errors.append(RowError(line, "non-numeric day field"))
            continue
        if days < 0:
            errors.append(RowError(line, f"days_since_first_order={days} is negative"))
            continue
        if not 0 <= dow <= 6:
            errors.append(RowError(line, f"day_of_week={dow} outside 0..6"))
            continue
        if not cust or not prods:
            errors.append(RowError(line, "empty customer or product id"))
            continue
        orders.setdefault((cust, days, dow), set()).update(prods)

    records = [OrderRecord(c, frozenset(p), d, w) for (c, d, w), p in orders.items()]
    return records, errors


def _rejoin_braces(row, delimiter):
    out, buf = [], None
    for cell in row:
        if buf is not None:
            buf += delimiter + cell
            if cell.strip().endswith("}"):
                out.append(buf)
                buf = None
        elif cell.strip().startswith("{") and not cell.strip().endswith("}"):
            buf = cell
        else:
            out.append(cell)
    if buf is not None:
        out.append(buf)
    return out


@dataclass
class PreprocessParams:
    min_span: int = 350
    first_order_window: int = 15
    cut_head: int = 7
    T: int = 300
    predictdays: int = 14
    window: int = 70
    product_count: int = 200
    retailer_count: int = 200
    per_product_total: float = 30_000.0
    order_band: tuple[float, float] = (200, 20_000)
    seed: int = 0


@dataclass
class PreprocessResult:
    train: DemandSeries
    eval: DemandSeries
    meta: dict = field(default_factory=dict)


def seasonality_score(daily_totals: np.ndarray, window: int) -> float:
    """Coefficient of variation of all overlapping ``window``-day totals."""
    if len(daily_totals) < window:
        raise ValueError("series shorter than the seasonality window")
    c = np.concatenate([[0.0], np.cumsum(daily_totals)])
    sums = c[window:] - c[:-window]
    m = sums.mean()
    if m <= 0:
        return 0.0
    return float(sums.std() / m)


def scale_to_total(demand: np.ndarray, total: float) -> np.ndarray:
    """Rescale each product (axis 1) of ``[T, P, R]`` so its sum equals ``total``."""
    sums = demand.sum(axis=(0, 2))
    if np.any(sums <= 0):
        raise PreprocessError("scaling", "a product has zero demand after trimming")
    return demand * (total / sums)[None, :, None]


def preprocess(records, params: PreprocessParams | None = None) -> PreprocessResult:
    p = params or PreprocessParams()
    rng = np.random.default_rng(p.seed)

    # (a) long-lived customers whose first order lands early in the year
    by_cust: dict[str, list[OrderRecord]] = {}
    for r in records:
        by_cust.setdefault(r.customer_id, []).append(r)
    kept = {}
    for cust, orders in by_cust.items():
        days = [o.days_since_first_order for o in orders]
        span = max(days) - min(days)
        if span > p.min_span and YEAR - span <= p.first_order_window:
            kept[cust] = orders
    if len(kept) < p.retailer_count:
        raise PreprocessError(
            "customer filter", f"{len(kept)} customers survive, need {p.retailer_count}")

    # (b) shared calendar: first order falls on its weekday within week one
    calendar = {}
    for cust, orders in kept.items():
        first = min(orders, key=lambda o: o.days_since_first_order)
        base = first.days_since_first_order
        calendar[cust] = [(first.day_of_week + o.days_since_first_order - base, o) for o in orders]
    length = 1 + max(day for rows in calendar.values() for day, _ in rows)

    # (c) retailers are seeded contiguous chunks of the customer list
    customers = sorted(kept)
    rng.shuffle(customers)
    groups = np.array_split(np.arange(len(customers)), p.retailer_count)
    group_of = {customers[j]: g for g, members in enumerate(groups) for j in members}
    product_ids = sorted({pid for rows in calendar.values() for _, o in rows for pid in o.product_ids})
    pidx = {pid: j for j, pid in enumerate(product_ids)}
    counts = np.zeros((length, len(product_ids), p.retailer_count))
    for cust, rows in calendar.items():
        g = group_of[cust]
        for day, o in rows:
            for pid in o.product_ids:
                counts[day, pidx[pid], g] += 1.0

    # (d) drop rare and ubiquitous products
    totals = counts.sum(axis=(0, 2))
    lo, hi = p.order_band
    band = np.flatnonzero((totals >= lo) & (totals <= hi))
    if len(band) < p.product_count:
        raise PreprocessError(
            "order-count band", f"{len(band)} products in [{lo}, {hi}], need {p.product_count}")

    # (e) keep the most seasonal products
    daily = counts.sum(axis=2)
    scores = np.array([seasonality_score(daily[:, j], p.window) for j in band])
    order = np.lexsort((band, -scores))  # ties broken by product index
    chosen = band[order[: p.product_count]]

    # (f) the first week is biased by the alignment assumption
    demand = counts[p.cut_head:, chosen, :]
    if demand.shape[0] < p.T + p.predictdays:
        raise PreprocessError(
            "horizon", f"{demand.shape[0]} days left, need T + predictdays = {p.T + p.predictdays}")

    # (g) equal total demand per product
    demand = scale_to_total(demand, p.per_product_total)

    # (h) disjoint halves
    prod_perm = rng.permutation(p.product_count)
    ret_perm = rng.permutation(p.retailer_count)
    hp, hr = p.product_count // 2, p.retailer_count // 2
    tp, ep = np.sort(prod_perm[:hp]), np.sort(prod_perm[hp:2 * hp])
    tr, er = np.sort(ret_perm[:hr]), np.sort(ret_perm[hr:2 * hr])
    train = DemandSeries(demand[:, tp][:, :, tr])
    evals = DemandSeries(demand[:, ep][:, :, er])
    meta = {
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(p).items()},
        "customers_kept": len(kept),
        "products_in_band": int(len(band)),
        "train_products": [product_ids[chosen[j]] for j in tp],
        "eval_products": [product_ids[chosen[j]] for j in ep],
        "train_retailers": tr.tolist(),
        "eval_retailers": er.tolist(),
        "seasonality": {product_ids[chosen[j]]: float(scores[order[j]])
                        for j in range(len(chosen))},
    }
    return PreprocessResult(train, evals, meta)


def make_real_scenarios(records, params: PreprocessParams | None = None, seed: int = 0,
                        ranges: dict | None = None, bs_mult: float = 1.5, bs_slack: float = 1.0,
                        truck_cover: float = 1.0):
    """Preprocess ``records`` and attach sampled attributes to both splits."""
    p = params or PreprocessParams(seed=seed)
    res = preprocess(records, p)
    children = np.random.SeedSequence(seed).spawn(2)
    out = {}
    for name, series, child in (("train", res.train, children[0]), ("eval", res.eval, children[1])):
        attr_seed = int(child.generate_state(1)[0])
        products, retailers = sample_attributes(series.P, series.R, series, attr_seed, ranges,
                                                bs_mult, bs_slack, T=p.T,
                                                truck_cover=truck_cover)
        ids = res.meta[f"{name}_products"], res.meta[f"{name}_retailers"]
        scenario = ScenarioConfig(
            T=p.T, predictdays=p.predictdays, products=products, retailers=retailers, seed=seed,
            ranges={**DEFAULT_RANGES, **(ranges or {})},
            meta={"kind": "real", "split": name, "attr_seed": attr_seed, "product_ids": ids[0],
                  "retailer_groups": ids[1], "bs_mult": bs_mult, "bs_slack": bs_slack,
                  "truck_cover": truck_cover,
                  "preprocess": res.meta["params"]})
        out[name] = (scenario, series)
    return out, res.meta


def synthetic_order_rows(n_customers: int, n_products: int, seed: int = 0,
                         short_fraction: float = 0.2, order_gap=(2, 9), basket=(1, 6)):
    """Instacart-shaped rows with seasonal product popularity, for fixtures and demos."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0, YEAR, size=n_products)
    amp = rng.uniform(0.0, 1.0, size=n_products)
    weight = rng.uniform(0.5, 2.0, size=n_products)
    rows = []
    for c in range(n_customers):
        cust = f"c{c}"
        dow0 = int(rng.integers(0, 7))
        horizon = int(rng.integers(100, 340)) if rng.random() < short_fraction else int(rng.integers(355, 363))
        day = 0
        while day <= horizon:
            pop = weight * (1.0 + amp * np.cos(2 * np.pi * (day + offsets) / YEAR))
            size = int(rng.integers(basket[0], basket[1] + 1))
            picks = rng.choice(n_products, size=min(size, n_products), replace=False, p=pop / pop.sum())
            for k in sorted(picks):
                rows.append((cust, f"p{k}", day, (dow0 + day) % 7))
            step = int(rng.integers(order_gap[0], order_gap[1] + 1))
            day = day + step if day + step <= horizon or day == horizon else horizon
    return rows


def write_order_rows(path, rows, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter=delimiter)
        w.writerow(COLUMNS)
        w.writerows(rows)
