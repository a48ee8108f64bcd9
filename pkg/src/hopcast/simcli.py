"""Scenario files, experiment runners, report writers and the command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analysis
from .hopper import (BaselineMeasure, HopperConfig, NoisyMeasure, OracleMeasure, SolverMeasure,
                     baseline_step, hop_step, run_hopper)
from .oracle import fullmesh_rate, solve_mp
from .overlay import (PEER_CAPACITIES, Configuration, OverlayError, OverlayGraph, complete_graph,
                      configuration_adjacency, enumerate_configurations, example_graph, load_graph,
                      pair, proportional_bound, random_configuration, random_graph,
                      sample_capacities, toggle_configurations, toggle_graph,
                      validate_configuration)
from .ratecast import SolverConfig, solve_rate


class ScenarioError(ValueError):
    pass


GRAPHS = ("toggle", "example", "complete", "random", "file")
MEASUREMENTS = ("oracle", "solver", "noisy")


@dataclass(frozen=True)
class Scenario:
    """Everything one run depends on.  See README for the file format."""

    graph: str = "toggle"
    graph_file: str = ""
    nodes: int = 10
    edge_prob: float = 0.5
    capacities: str = "streaming"  # streaming | unit | comma-separated list
    source_capacity: float = 768.0
    bound_rule: str = "uniform"  # uniform | proportional
    bound: int = 3
    beta: float = 10.0
    tau: float = 0.0
    measurement: str = "oracle"
    noise_delta: float = 0.0
    noise_levels: int = 1
    hops: int = 100_000
    burn_in: int = 1000
    solver_iters: int = 2_000_000
    initial: str = "random"  # random | pinned | toggle name (f1..f4) | u-v,u-v,...
    series_points: int = 100
    compare_baseline: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.graph not in GRAPHS:
            raise ScenarioError(f"graph must be one of {GRAPHS}")
        if (self.graph == "file") != bool(self.graph_file):
            raise ScenarioError("graph_file is required with graph = file and only then")
        if self.measurement not in MEASUREMENTS:
            raise ScenarioError(f"measurement must be one of {MEASUREMENTS}")
        if self.bound_rule not in ("uniform", "proportional"):
            raise ScenarioError("bound_rule must be uniform or proportional")
        if self.hops < 0 or self.burn_in < 0 or self.solver_iters <= 0:
            raise ScenarioError("horizons must be nonnegative (solver_iters positive)")
        if self.beta <= 0:
            raise ScenarioError("beta must be positive")
        if self.noise_delta < 0 or self.noise_levels < 1:
            raise ScenarioError("need noise_delta >= 0 and noise_levels >= 1")

    @classmethod
    def parse(cls, text: str, overrides: dict[str, str] | None = None) -> "Scenario":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ScenarioError(f"line {lineno}: expected key = value")
            raw[key.strip()] = val.strip()
        raw.update(overrides or {})
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, val in raw.items():
            if key not in types:
                raise ScenarioError(f"unknown scenario key {key!r}")
            kw[key] = _coerce(key, val, types[key])
        return cls(**kw)

    @classmethod
    def load(cls, path, overrides=None) -> "Scenario":
        return cls.parse(Path(path).read_text(encoding="utf-8"), overrides)

    def dump(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(out) + "\n"


def _coerce(key, val, typ):
    try:
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        if typ == "bool":
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return val.lower() in ("true", "1", "yes")
        return val
    except ValueError:
        raise ScenarioError(f"bad value for {key}: {val!r}") from None


# -- building the instance ---------------------------------------------------

def _capacities(s: Scenario, n: int) -> list[float]:
    if s.capacities == "streaming":
        caps = sample_capacities(PEER_CAPACITIES, n, s.seed)
        caps[0] = s.source_capacity
        return caps
    if s.capacities == "unit":
        return [1.0] * n
    try:
        caps = [float(c) for c in s.capacities.split(",")]
    except ValueError:
        raise ScenarioError(f"bad capacities {s.capacities!r}") from None
    if len(caps) != n:
        raise ScenarioError(f"{len(caps)} capacities for {n} nodes")
    return caps


def _bounds(s: Scenario, caps) -> tuple[int, ...]:
    if s.bound_rule == "proportional":
        return tuple(proportional_bound(c) for c in caps)
    return (s.bound,) * len(caps)


def build_graph(s: Scenario) -> OverlayGraph:
    if s.graph == "toggle":
        return toggle_graph()
    if s.graph == "example":
        return example_graph()
    if s.graph == "file":
        return load_graph(s.graph_file)
    caps = _capacities(s, s.nodes)
    bounds = _bounds(s, caps)
    if s.graph == "complete":
        return complete_graph(caps, list(bounds))
    return random_graph(s.nodes, s.edge_prob, np.random.default_rng(s.seed), caps, list(bounds))


def initial_configuration(s: Scenario, g: OverlayGraph) -> Configuration:
    text = s.initial
    if text == "random":
        f = random_configuration(g, np.random.default_rng([s.seed, 1]))
    elif text == "pinned":
        f = Configuration(g.fixed)
    elif s.graph == "toggle" and text in toggle_configurations():
        f = toggle_configurations()[text]
    else:
        try:
            pairs = [pair(*map(int, tok.split("-"))) for tok in text.split(",") if tok]
        except ValueError:
            raise ScenarioError(f"bad initial configuration {text!r}") from None
        f = Configuration(frozenset(pairs) | g.fixed)
    validate_configuration(g, f)
    return f


def config_id(f: Configuration | tuple) -> str:
    key = f.key() if isinstance(f, Configuration) else f
    return " ".join(f"{u}-{v}" for u, v in key)


# -- reports -----------------------------------------------------------------

@dataclass
class RunReport:
    scenario: Scenario
    series: list[tuple[int, float, float, float]]  # event, time, source rate, mean receiving rate
    cdf: list[tuple[float, float]]  # receiving rate, cumulative fraction
    occupancy: dict[str, float]
    time_average_rate: float
    fullmesh_rate: float | None = None
    baseline_rate: float | None = None
    unconverged: list[str] = field(default_factory=list)
    transitions: str = ""  # JSON lines

    def summary(self) -> dict:
        d = {
            "time_average_rate": self.time_average_rate,
            "fullmesh_rate": self.fullmesh_rate,
            "baseline_rate": self.baseline_rate,
            "configurations_visited": len(self.occupancy),
            "unconverged": self.unconverged,
            "seed": self.scenario.seed,
        }
        if self.baseline_rate:
            d["ratio_vs_baseline"] = self.time_average_rate / self.baseline_rate
        return d


def _cdf(values) -> list[tuple[float, float]]:
    v = np.sort(np.asarray(values, dtype=float))
    return [(float(x), (i + 1) / len(v)) for i, x in enumerate(v)]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def render_report(r: RunReport, fmt: str = "csv") -> dict[str, str]:
    """File name -> contents; deterministic for a given report."""
    summary = json.dumps(r.summary(), sort_keys=True, indent=2) + "\n"
    if fmt == "json":
        doc = {
            "summary": r.summary(),
            "series": [list(x) for x in r.series],
            "cdf": [list(x) for x in r.cdf],
            "occupancy": r.occupancy,
        }
        return {"report.json": json.dumps(doc, sort_keys=True, indent=2) + "\n"}
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    files = {
        "summary.json": summary,
        "series.csv": _csv(["event", "time", "source_rate", "mean_receiving_rate"], r.series),
        "cdf.csv": _csv(["receiving_rate", "cdf"], r.cdf),
        "occupancy.csv": _csv(["config_id", "fraction"], sorted(r.occupancy.items())),
    }
    if r.transitions:
        files["transitions.jsonl"] = r.transitions
    return files


def emit_report(r: RunReport, out: str | Path, fmt: str = "csv") -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in render_report(r, fmt).items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths


# -- runners -----------------------------------------------------------------

def _measure(s: Scenario, g: OverlayGraph):
    if s.measurement == "solver":
        return SolverMeasure(g, SolverConfig(max_iters=s.solver_iters))
    base = OracleMeasure(g)
    if s.measurement == "noisy":
        noise = analysis.NoiseModel.uniform([s.noise_delta], s.noise_levels)
        return NoisyMeasure(base, noise, lambda f: 0, seed=[s.seed, 2])
    return base


def _true_rate(measure):
    return measure.base if isinstance(measure, NoisyMeasure) else measure


def _series(run, n_points):
    """Downsample the per-event log to about ``n_points`` rows."""
    recs = run.records
    if not recs or n_points <= 0:
        return []
    step = max(1, len(recs) // n_points)
    return [(i + 1, r.t, r.x_new if r.accepted and r.x_new is not None else r.x_old)
            for i, r in enumerate(recs) if (i + 1) % step == 0]


def _receiving(measure, g, f: Configuration) -> np.ndarray:
    """Per-receiver rates: the solver's own estimate, or the common rate under coding."""
    if isinstance(measure, SolverMeasure):
        return solve_rate(g, f, measure.sc).receiving[g.receivers]
    return np.full(len(g.receivers), _true_rate(measure)(f))


def _run(s: Scenario, step, measure) -> RunReport:
    g = build_graph(s)
    f0 = initial_configuration(s, g)
    cfg = HopperConfig(s.beta, s.tau)
    fm = fullmesh_rate(g) if g.receivers else None
    if s.hops == 0:
        x = measure(f0)
        return RunReport(s, [], _cdf(_receiving(measure, g, f0)), {config_id(f0): 1.0}, x, fm,
                         unconverged=sorted(config_id(k) for k in getattr(measure, "unconverged", ())))
    run = run_hopper(g, cfg, measure, f0, s.hops, seed=s.seed, burn_in=s.burn_in,
                     keep_records=True, step=step)
    truth = _true_rate(measure)
    if run.elapsed > 0:
        avg = sum(t * truth(Configuration(frozenset(k))) for k, t in run.occupancy.items()) / run.elapsed
        occ = {config_id(k): t / run.elapsed for k, t in run.occupancy.items() if t > 0}
    else:
        avg, occ = run.time_average_rate, {config_id(run.final): 1.0}
    series = [(e, t, x, x) for e, t, x in _series(run, s.series_points)]
    if isinstance(measure, SolverMeasure):
        series = [(e, t, x, float(np.mean(_cached_receiving(measure, g, run, e)))) for e, t, x, _ in series]
    return RunReport(
        scenario=s, series=series, cdf=_cdf(_receiving(measure, g, run.final)), occupancy=occ,
        time_average_rate=float(avg), fullmesh_rate=fm,
        unconverged=sorted(config_id(k) for k in getattr(measure, "unconverged", ())),
        transitions=run.log_lines(),
    )


def _cached_receiving(measure, g, run, event):
    rec = run.records[event - 1]
    return _receiving(measure, g, Configuration(frozenset(rec.after)))


def run_scenario(s: Scenario) -> RunReport:
    measure = _measure(s, build_graph(s))
    report = _run(s, hop_step, measure)
    if s.compare_baseline:
        report.baseline_rate = run_baseline(s).time_average_rate
    return report


def run_baseline(s: Scenario) -> RunReport:
    g = build_graph(s)
    return _run(replace(s, measurement="oracle"), baseline_step, BaselineMeasure(g))


# -- command line ------------------------------------------------------------

def _scenario_from_args(args) -> Scenario:
    overrides = {}
    for item in args.set or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise ScenarioError(f"--set expects key=value, got {item!r}")
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.scenario:
        return Scenario.load(args.scenario, overrides)
    return Scenario.parse("", overrides)


def _write(args, files: dict[str, str]):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")


def cmd_rate(args, s: Scenario):
    g = build_graph(s)
    f = initial_configuration(s, g)
    res = solve_rate(g, f, SolverConfig(max_iters=s.solver_iters, trace_every=args.trace_every))
    out = {"config": config_id(f), "rate": res.rate, "converged": res.converged,
           "iterations": res.iterations}
    if args.exact:
        out["lp_rate"] = solve_mp(g, f)
    _write(args, {"trace.csv": res.trace_csv()})
    return out


def cmd_hop(args, s: Scenario):
    r = run_scenario(s)
    _write(args, render_report(r, args.format))
    return r.summary()


def cmd_baseline(args, s: Scenario):
    r = run_baseline(s)
    _write(args, render_report(r, args.format))
    return r.summary()


def _space(s: Scenario):
    g = build_graph(s)
    configs = enumerate_configurations(g)
    m = OracleMeasure(g)
    return g, configs, np.array([m(f) for f in configs])


def cmd_analyze(args, s: Scenario):
    g, configs, x = _space(s)
    ids = [config_id(f) for f in configs]
    pstar = analysis.optimal_distribution(x, s.beta, ids)
    noise = analysis.NoiseModel.uniform([s.noise_delta] * len(x), s.noise_levels)
    _, pbar, _ = analysis.stationary_extended(x, noise, s.beta, ids)
    b = analysis.noise_bounds(x, noise, s.beta)
    _write(args, {"distribution.csv": analysis.distribution_csv(ids, pstar, pbar)})
    return {
        "configurations": len(x), "max_rate": float(x.max()),
        "log_sum_exp": analysis.log_sum_exp_rate(x, s.beta),
        "expected_rate": pstar.mean(x), "expected_rate_noisy": pbar.mean(x),
        "tv_bound": b.tv_bound, "tv_actual": b.tv_actual,
        "rate_gap_bound": b.rate_gap_bound, "rate_gap_actual": b.rate_gap_actual,
    }


def cmd_enumerate(args, s: Scenario):
    g, configs, x = _space(s)
    rows = [(config_id(f), float(r)) for f, r in zip(configs, x)]
    adj = configuration_adjacency(configs)
    if args.format == "json":
        _write(args, {"configurations.json": json.dumps(
            {"configurations": [{"id": i, "rate": r} for i, r in rows], "adjacency": adj},
            sort_keys=True, indent=2) + "\n"})
    else:
        _write(args, {"configurations.csv": _csv(["config_id", "rate"], rows)})
    return {"configurations": len(rows), "adjacent_pairs": len(adj), "max_rate": float(x.max())}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        self.exit(2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", nargs="?", help="scenario file (key = value lines)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help="directory for report files")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = _Parser(prog="hopcast", description="Broadcast-rate solver and topology hopping simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("rate", parents=[common], help="solve one configuration")
    r.add_argument("--trace-every", type=int, default=100)
    r.add_argument("--exact", action="store_true", help="also solve the LP")
    sub.add_parser("hop", parents=[common], help="topology hopping run")
    sub.add_parser("baseline", parents=[common], help="heuristic baseline run")
    sub.add_parser("analyze", parents=[common], help="stationary distributions and noise bounds")
    sub.add_parser("enumerate", parents=[common], help="list configurations with exact rates")
    return p


COMMANDS = {"rate": cmd_rate, "hop": cmd_hop, "baseline": cmd_baseline,
            "analyze": cmd_analyze, "enumerate": cmd_enumerate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        s = _scenario_from_args(args)
        result = COMMANDS[args.command](args, s)
    except (ScenarioError, OverlayError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True, indent=2))
    return 0
