"""Command-line driver: gen, precompute, train, tune, eval, report.

Every command reads and writes plain files, so a pipeline looks like::

    warehouse-rl gen --kind artificial --P 20 --R 20 --T 300 --seed 1 --out runs/train
    warehouse-rl precompute --scenario runs/train
    warehouse-rl train --scenario runs/train --out runs/agent --seed 0
    warehouse-rl tune --scenario runs/train --out runs/tune
    warehouse-rl eval --scenario runs/eval --agent runs/agent --tune runs/tune --out runs/report
    warehouse-rl report --eval runs/report --train-log runs/agent/training_log.csv
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .demand import make_artificial_scenario
from .encoding import Normalizer
from .orders import PreprocessParams, ingest_orders, make_real_scenarios, synthetic_order_rows, write_order_rows
from .policies import BaseStockPolicy, OraclePolicy
from .ppo import PPOConfig, TrainingLog, load_agent, save_agent, train
from .scenario import load_scenario, read_tensor, save_scenario, write_tensor
from .simulator import default_maxorder, precompute_request_star, simulate_full, truck_schedule
from .tuner import TuneResult, tune_x

log = logging.getLogger("warehouse_rl")

REPORT_COLUMNS = ("policy", "gain", "profit", "inventory_cost")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    return {"warehouse_rl": __version__, "numpy": np.__version__, "python": platform.python_version()}


@dataclass
class RunManifest:
    command: str
    params: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)   # name -> {"path", "sha256"}
    outputs: dict = field(default_factory=dict)
    versions: dict = field(default_factory=_versions)

    def add_input(self, name, path) -> None:
        self.inputs[name] = {"path": str(path), "sha256": sha256(path)}

    def add_output(self, name, path) -> None:
        self.outputs[name] = {"path": str(path), "sha256": sha256(path)}

    def write(self, directory) -> Path:
        path = Path(directory) / f"manifest_{self.command}.json"
        body = {"command": self.command, "params": self.params, "seeds": self.seeds,
                "inputs": self.inputs, "outputs": self.outputs, "versions": self.versions}
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str))
        return path


@dataclass
class ReportRow:
    policy: str
    gain: float
    profit: float
    inventory_cost: float


class ComparisonReport:
    """Per-policy daily averages, summed over products."""

    def __init__(self, rows=()):
        self.rows = list(rows)

    def add(self, policy: str, summary: dict) -> None:
        self.rows.append(ReportRow(policy, summary["profit"] - summary["inventory_cost"],
                                   summary["profit"], summary["inventory_cost"]))

    def check(self, tol: float = 1e-9) -> None:
        for r in self.rows:
            if abs(r.gain - (r.profit - r.inventory_cost)) > tol * max(1.0, abs(r.profit)):
                raise ValueError(f"report row {r.policy}: gain != profit - inventory_cost")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([r.policy, repr(r.gain), repr(r.profit), repr(r.inventory_cost)])

    @classmethod
    def from_csv(cls, path) -> "ComparisonReport":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"missing report: {path}")
        with open(path, newline="") as f:
            rows = [ReportRow(d["policy"], float(d["gain"]), float(d["profit"]), float(d["inventory_cost"]))
                    for d in csv.DictReader(f)]
        return cls(rows)

    def table(self) -> str:
        head = ["", *(r.policy for r in self.rows)]
        body = [["Av. Gain", *(f"{r.gain:.0f}" for r in self.rows)],
                ["Av. Profit", *(f"{r.profit:.0f}" for r in self.rows)],
                ["Av. Inventory Cost", *(f"{r.inventory_cost:.0f}" for r in self.rows)]]
        widths = [max(len(row[j]) for row in [head] + body) for j in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                    for j, (c, w) in enumerate(zip(row, widths)))
        return "\n".join([fmt(head)] + [fmt(r) for r in body])


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    return path


def _scenario_inputs(manifest: RunManifest, directory) -> None:
    for name in ("scenario.json", "demand.bin"):
        manifest.add_input(name, _require(Path(directory) / name))


def _load_request_star(directory):
    path = _require(Path(directory) / "request_star.bin")
    return read_tensor(path)


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {k: v for k, v in vars(args).items() if k != "func"}
    if args.kind == "artificial":
        scenario, demand = make_artificial_scenario(args.P, args.R, args.T, args.predictdays, args.C,
                                                    seed=args.seed)
        manifest = RunManifest("gen", params, {"seed": args.seed, **{
            k: scenario.meta[k] for k in ("demand_seed", "attr_seed")}})
        for name, path in save_scenario(out, scenario, demand).items():
            manifest.add_output(name, path)
        print(f"wrote artificial scenario P={scenario.P} R={scenario.R} T={scenario.T} to {out}")
    elif args.kind == "orders":
        rows = synthetic_order_rows(args.customers, args.products, seed=args.seed)
        path = out / "orders.csv"
        write_order_rows(path, rows)
        manifest = RunManifest("gen", params, {"seed": args.seed})
        manifest.add_output("orders", path)
        print(f"wrote {len(rows)} synthetic order rows to {path}")
    else:
        if not args.orders:
            raise ValueError("--orders is required for --kind real")
        src = _require(args.orders)
        with open(src, newline="") as f:
            records, errors = ingest_orders(f)
        for e in errors[:10]:
            log.warning("skipped row %s: %s", e.line, e.message)
        if errors:
            log.warning("%d malformed rows skipped", len(errors))
        # each split keeps half of the selected products and retailers
        pp = PreprocessParams(T=args.T, predictdays=args.predictdays, product_count=2 * args.P,
                              retailer_count=2 * args.R, order_band=tuple(args.order_band),
                              per_product_total=args.per_product_total, seed=args.seed)
        splits, meta = make_real_scenarios(records, pp, seed=args.seed)
        manifest = RunManifest("gen", params, {"seed": args.seed})
        manifest.add_input("orders", src)
        for name, (scenario, demand) in splits.items():
            for fname, path in save_scenario(out / name, scenario, demand).items():
                manifest.add_output(f"{name}/{fname}", path)
            manifest.seeds[f"{name}_attr_seed"] = scenario.meta["attr_seed"]
        (out / "preprocess.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
        manifest.add_output("preprocess", out / "preprocess.json")
        print(f"wrote train/eval scenarios P={args.P} R={args.R} T={args.T} to {out}")
    manifest.write(out)
    return 0


def cmd_precompute(args) -> int:
    d = Path(args.scenario)
    manifest = RunManifest("precompute", {"scenario": str(d)})
    _scenario_inputs(manifest, d)
    scenario, demand = load_scenario(d)
    request_star, schedule = precompute_request_star(scenario, demand)
    write_tensor(d / "request_star.bin", request_star)
    if scenario.maxorder is None or args.reset_maxorder:
        scenario.maxorder = default_maxorder(request_star)
        (d / "scenario.json").write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True))
    manifest.add_output("request_star", d / "request_star.bin")
    manifest.add_output("scenario.json", d / "scenario.json")
    manifest.write(d)
    print(f"request* computed: {int(schedule.sum())} truck days, maxorder={scenario.maxorder:.6g}")
    return 0


def _ppo_config(args) -> PPOConfig:
    kw = {f.name: getattr(args, f.name) for f in fields(PPOConfig) if getattr(args, f.name, None) is not None}
    if args.steps is not None:
        kw["total_episodes"] = max(1, -(-args.steps // args._T))
    return PPOConfig(**kw)


def cmd_train(args) -> int:
    d = Path(args.scenario)
    manifest = RunManifest("train", {k: v for k, v in vars(args).items() if k not in ("func", "_T")})
    _scenario_inputs(manifest, d)
    scenario, demand = load_scenario(d)
    request_star = _load_request_star(d)
    manifest.add_input("request_star", d / "request_star.bin")
    if scenario.maxorder is None:
        raise ValueError(f"{d}: scenario has no maxorder; run precompute first")
    args._T = scenario.T
    config = _ppo_config(args)
    manifest.seeds["seed"] = config.seed

    def progress(step, reward, diag):
        log.info("step %d  eval reward %.2f  entropy %.3f", step, reward, diag.get("entropy", float("nan")))

    net, tlog, _ = train(scenario, demand, truck_schedule(request_star), config, progress=progress)
    out = Path(args.out)
    paths = save_agent(out, net, Normalizer.from_dict(scenario.normalizers()), scenario.maxorder,
                       scenario.predictdays, config)
    tlog.to_csv(out / "training_log.csv")
    paths["training_log"] = out / "training_log.csv"
    for name, path in paths.items():
        manifest.add_output(name, path)
    manifest.write(out)
    last = tlog.mean_reward[-1] if len(tlog) else float("nan")
    print(f"trained {config.total_episodes} episodes; last eval reward {last:.2f}; saved to {out}")
    return 0


def cmd_tune(args) -> int:
    d = Path(args.scenario)
    manifest = RunManifest("tune", {k: v for k, v in vars(args).items() if k != "func"})
    _scenario_inputs(manifest, d)
    scenario, demand = load_scenario(d)
    request_star = _load_request_star(d)
    manifest.add_input("request_star", d / "request_star.bin")
    res = tune_x(scenario, demand, request_star, (0.0, args.x_max), args.budget, args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tune.json").write_text(res.to_json())
    res.history_to_csv(out / "tune_history.csv")
    policy = BaseStockPolicy.from_request_star(request_star, res.best_x, scenario)
    (out / "base_stock.json").write_text(policy.to_json())
    for name in ("tune.json", "tune_history.csv", "base_stock.json"):
        manifest.add_output(name, out / name)
    manifest.write(out)
    print(f"best x = {res.best_x:.6g}  gain/day = {res.best_gain / scenario.T:.2f}  "
          f"({len(res.history)} evaluations)")
    return 0


def cmd_eval(args) -> int:
    d = Path(args.scenario)
    manifest = RunManifest("eval", {k: v for k, v in vars(args).items() if k != "func"})
    _scenario_inputs(manifest, d)
    scenario, demand = load_scenario(d)
    request_star = _load_request_star(d)
    manifest.add_input("request_star", d / "request_star.bin")
    policies = [("oracle", OraclePolicy(request_star, scenario.product_delay))]
    if args.tune:
        path = _require(Path(args.tune) / "tune.json")
        manifest.add_input("tune", path)
        x = TuneResult.from_json(path.read_text()).best_x
        policies.append(("base_stock", BaseStockPolicy.from_request_star(request_star, x, scenario)))
    for j, agent in enumerate(args.agent or []):
        a = Path(agent)
        for name in ("policy.json", "policy.bin"):
            manifest.add_input(f"agent{j}/{name}", _require(a / name))
        label = "ppo" if len(args.agent) == 1 else f"ppo_{j}"
        policies.append((label, load_agent(a, predictdays=scenario.predictdays)))

    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    report = ComparisonReport()
    for name, policy in policies:
        trace = simulate_full(scenario, demand, policy)
        report.add(name, trace.summary())
        tpath = out / "traces" / f"{name}.csv"
        trace.to_csv(tpath)
        manifest.add_output(f"trace/{name}", tpath)
    report.check()
    report.to_csv(out / "report.csv")
    manifest.add_output("report", out / "report.csv")
    manifest.write(out)
    print(report.table())
    return 0


def cmd_report(args) -> int:
    out = Path(args.out or args.eval)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("report", {k: v for k, v in vars(args).items() if k != "func"})
    if args.eval:
        path = _require(Path(args.eval) / "report.csv")
        manifest.add_input("report", path)
        report = ComparisonReport.from_csv(path)
        report.check()
        print(report.table())
    for j, lp in enumerate(args.train_log or []):
        src = _require(lp)
        manifest.add_input(f"train_log{j}", src)
        with open(src, newline="") as f:
            rows = list(csv.DictReader(f))
        tlog = TrainingLog()
        for r in rows:
            tlog.append(int(r["step"]), float(r["mean_reward"]))
        dst = out / f"curve_{j}.csv"
        tlog.to_csv(dst, width=args.smooth)
        manifest.add_output(f"curve{j}", dst)
        if len(tlog):
            n = max(1, len(tlog) // 10)
            first, last = np.mean(tlog.mean_reward[:n]), np.mean(tlog.mean_reward[-n:])
            print(f"{src}: first-decile {first:.2f}  last-decile {last:.2f}")
    manifest.write(out)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="warehouse-rl", description="Warehouse ordering with PPO product agents.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate or ingest a scenario")
    g.add_argument("--kind", choices=("artificial", "real", "orders"), default="artificial")
    g.add_argument("--P", type=int, default=20)
    g.add_argument("--R", type=int, default=20)
    g.add_argument("--T", type=int, default=300)
    g.add_argument("--predictdays", type=int, default=14)
    g.add_argument("--C", type=float, default=None, help="artificial demand scale (default: smallest truck size / P)")
    g.add_argument("--orders", help="order-history CSV (kind=real)")
    g.add_argument("--order-band", type=float, nargs=2, default=(200.0, 20_000.0), metavar=("LO", "HI"),
                   help="kept range of total orders per product (kind=real)")
    g.add_argument("--per-product-total", type=float, default=30_000.0,
                   help="kilograms per product after scaling (kind=real)")
    g.add_argument("--customers", type=int, default=400, help="synthetic customers (kind=orders)")
    g.add_argument("--products", type=int, default=60, help="synthetic products (kind=orders)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("precompute", help="simulate request* and set maxorder")
    c.add_argument("--scenario", required=True)
    c.add_argument("--reset-maxorder", action="store_true", help="overwrite an existing maxorder")
    c.set_defaults(func=cmd_precompute)

    t = sub.add_parser("train", help="train a PPO ordering policy")
    t.add_argument("--scenario", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, help="training steps (rounded up to whole episodes)")
    defaults = PPOConfig()
    for f in fields(PPOConfig):
        if f.name in ("hidden", "lr_decay", "reward_scale"):
            continue
        t.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=type(getattr(defaults, f.name)),
                       default=None, help=f"default {getattr(defaults, f.name)}")
    t.add_argument("--hidden", type=int, nargs="+", default=None)
    t.add_argument("--reward-scale", dest="reward_scale", type=float, default=None)
    t.add_argument("--no-lr-decay", dest="lr_decay", action="store_false", default=None)
    t.set_defaults(func=cmd_train)

    u = sub.add_parser("tune", help="tune the base-stock multiplier x")
    u.add_argument("--scenario", required=True)
    u.add_argument("--out", required=True)
    u.add_argument("--x-max", type=float, default=4.0)
    u.add_argument("--budget", type=int, default=29)
    u.add_argument("--grid", type=int, default=9)
    u.set_defaults(func=cmd_tune)

    e = sub.add_parser("eval", help="exact simulation of oracle, base-stock and trained agents")
    e.add_argument("--scenario", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--tune", help="directory holding tune.json")
    e.add_argument("--agent", action="append", help="directory holding policy.json/policy.bin")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="print a report and emit smoothed training curves")
    r.add_argument("--eval", help="directory holding report.csv")
    r.add_argument("--train-log", action="append")
    r.add_argument("--smooth", type=int, default=50)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report" and not (args.eval or args.train_log):
        parser.error("report needs --eval and/or --train-log")
    if args.command == "report" and not (args.out or args.eval):
        parser.error("report needs --out when only --train-log is given")
    if getattr(args, "hidden", None) is not None:
        args.hidden = tuple(args.hidden)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
