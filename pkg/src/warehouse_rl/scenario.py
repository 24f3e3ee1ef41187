"""Scenario containers and their on-disk formats."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import ContractViolation, ProductSpec, RetailerSpec

TENSOR_MAGIC = b"WHTENSOR"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<8sIQQQ")

# attribute sampling ranges; also the source of the observation normalizers
DEFAULT_RANGES = {
    "price": (1.0, 10.0),
    "stockcost": (0.05, 0.5),
    "product_delay": (1, 14),
    "trucksize": (50.0, 500.0),
    "retailer_delay": (1, 3),
}


@dataclass
class DemandSeries:
    """Dense ``[T_ext, P, R]`` demand tensor in kilograms per day."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ContractViolation("demand must be a [T_ext, P, R] tensor")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ContractViolation("demand must be finite and nonnegative")

    @property
    def T_ext(self) -> int:
        return self.values.shape[0]

    @property
    def P(self) -> int:
        return self.values.shape[1]

    @property
    def R(self) -> int:
        return self.values.shape[2]


@dataclass
class ScenarioConfig:
    T: int
    predictdays: int
    products: list[ProductSpec]
    retailers: list[RetailerSpec]
    maxorder: float | None = None
    seed: int | None = None
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1 or self.predictdays < 1 or self.P < 1 or self.R < 1:
            raise ContractViolation("P, R, T and predictdays must all be >= 1")
        for r in self.retailers:
            if len(r.basestock) != self.P:
                raise ContractViolation("retailer basestock length must equal P")

    @property
    def P(self) -> int:
        return len(self.products)

    @property
    def R(self) -> int:
        return len(self.retailers)

    # array views used by the vectorized simulators
    @property
    def price(self) -> np.ndarray:
        return np.array([p.price for p in self.products], dtype=float)

    @property
    def stockcost(self) -> np.ndarray:
        return np.array([p.stockcost for p in self.products], dtype=float)

    @property
    def product_delay(self) -> np.ndarray:
        return np.array([p.delay for p in self.products], dtype=int)

    @property
    def trucksize(self) -> np.ndarray:
        return np.array([r.trucksize for r in self.retailers], dtype=float)

    @property
    def retailer_delay(self) -> np.ndarray:
        return np.array([r.delay for r in self.retailers], dtype=int)

    @property
    def basestock(self) -> np.ndarray:
        """Retailer targets as a ``[P, R]`` array."""
        return np.array([r.basestock for r in self.retailers], dtype=float).T.copy()

    def check_demand(self, demand: DemandSeries) -> None:
        if (demand.P, demand.R) != (self.P, self.R):
            raise ContractViolation(
                f"demand is P={demand.P},R={demand.R} but scenario is P={self.P},R={self.R}")
        if demand.T_ext < self.T + self.predictdays:
            raise ContractViolation(
                f"demand horizon {demand.T_ext} < T + predictdays = {self.T + self.predictdays}")

    def normalizers(self) -> dict:
        """Fixed per-feature scales for observations."""
        if self.maxorder is None:
            raise ContractViolation("maxorder unset; run the request* precomputation first")
        return {
            "price": float(np.mean(self.ranges["price"])),
            "stockcost": float(np.mean(self.ranges["stockcost"])),
            "delay": float(self.ranges["product_delay"][1]),
            "kg": float(self.maxorder) if self.maxorder > 0 else 1.0,
        }

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "predictdays": self.predictdays,
            "P": self.P,
            "R": self.R,
            "maxorder": self.maxorder,
            "seed": self.seed,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "products": [asdict(p) for p in self.products],
            "retailers": [{"trucksize": r.trucksize, "delay": r.delay,
                           "basestock": list(r.basestock)} for r in self.retailers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        products = [ProductSpec(p["price"], p["stockcost"], int(p["delay"])) for p in d["products"]]
        retailers = [RetailerSpec(r["trucksize"], int(r["delay"]), tuple(r["basestock"]))
                     for r in d["retailers"]]
        cfg = cls(T=int(d["T"]), predictdays=int(d["predictdays"]), products=products,
                  retailers=retailers, maxorder=d.get("maxorder"), seed=d.get("seed"),
                  ranges={k: tuple(v) for k, v in d.get("ranges", DEFAULT_RANGES).items()},
                  meta=d.get("meta", {}))
        if (cfg.P, cfg.R) != (d.get("P", cfg.P), d.get("R", cfg.R)):
            raise ContractViolation("P/R fields disagree with the product/retailer lists")
        return cfg


def write_tensor(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 3:
        raise ValueError("only 3-d tensors are stored")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, *values.shape))
        f.write(values.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing tensor file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, a, b, c = _HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != TENSOR_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != a * b * c * 8:
        raise ValueError(f"{path}: expected {a * b * c} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(a, b, c).astype(np.float64)


def save_scenario(directory, scenario: ScenarioConfig, demand: DemandSeries) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scenario.check_demand(demand)
    paths = {"demand": directory / "demand.bin", "scenario": directory / "scenario.json"}
    write_tensor(paths["demand"], demand.values)
    paths["scenario"].write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True))
    return paths


def load_scenario(directory) -> tuple[ScenarioConfig, DemandSeries]:
    directory = Path(directory)
    sc_path = directory / "scenario.json"
    if not sc_path.exists():
        raise FileNotFoundError(f"missing scenario file: {sc_path}")
    scenario = ScenarioConfig.from_dict(json.loads(sc_path.read_text()))
    demand = DemandSeries(read_tensor(directory / "demand.bin"))
    scenario.check_demand(demand)
    return scenario, demand
