"""Command-line front end.

Usage: ``adaptdyn COMMAND --config FILE [--seed N] [--replicates N] [--out DIR] [--workers N]``.
The config is an INI file with a ``[model]`` section and one section per
command; see the README for the keys.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import io as aio
from .errors import AdaptdynError
from .model import ModelSpec, model_from_config

COMMANDS = ("simulate-ibm", "simulate-pes", "simulate-tss", "canonical", "analyze", "pip")


class ConfigError(Exception):
    pass


class ScalingAdvisory(UserWarning):
    pass


@dataclass
class RunConfig:
    command: str
    sections: dict
    seed: int = 0
    replicates: int = 1
    out: str = "."
    workers: int = 1
    base_dir: Optional[str] = None
    cfg_hash: str = field(default="", init=False)

    def __post_init__(self):
        self.cfg_hash = aio.config_hash(self.sections)

    def section(self, name: str, fallback: Optional[str] = None) -> dict:
        out = dict(self.sections.get(fallback, {})) if fallback else {}
        out.update(self.sections.get(name, {}))
        return out

    def model(self) -> ModelSpec:
        """The [model] section with ``model.KEY`` overrides from the command section."""
        if "model" not in self.sections:
            raise ConfigError("config has no [model] section")
        sec = dict(self.sections["model"])
        for k, v in self.sections.get(self.command, {}).items():
            if k.startswith("model."):
                sec[k[6:]] = v
        return model_from_config(sec, self.base_dir)

    def header(self, **extra) -> dict:
        return aio.header(self.cfg_hash, self.seed, command=self.command, **extra)


def load_config(path: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def _get(sec: dict, key: str, kind, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    raw = str(sec[key]).strip()
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(float(raw))
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def scaling_advisory(model: ModelSpec) -> Optional[str]:
    """Warn when ``log(K) K u_K >= 0.1``, a heuristic for too-frequent mutations."""
    v = math.log(model.K) * model.K * model.u_K
    if v >= 0.1:
        msg = (f"log(K)*K*u_K = {v:.3g} >= 0.1: mutations are not rare on the ecological "
               "time scale; results may leave the separated-time-scale regime")
        warnings.warn(msg, ScalingAdvisory, stacklevel=2)
        return msg
    return None


def _x_star(model: ModelSpec) -> float:
    if model.analytic is not None and hasattr(model.analytic, "x_star"):
        return float(model.analytic.x_star)
    from .singularity import find_singularities

    reps = find_singularities(model)
    if not reps:
        raise ConfigError("model has no evolutionary singularity; set x_star in the section")
    return reps[0].x_star


def _map(cfg: RunConfig, fn, args: list) -> list:
    if cfg.workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futs = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futs]


def _seeds(cfg: RunConfig) -> list:
    return np.random.SeedSequence(cfg.seed).spawn(cfg.replicates)


# workers rebuild the model from the config: model callables are closures
def _ibm_replicate(cfg: RunConfig, ss, i: int) -> dict:
    from .ibm import PopulationState, gap_clusters, simulate
    from .model import monomorphic_equilibrium

    model = cfg.model()
    sec = cfg.section("simulate-ibm")
    x0 = _get(sec, "initial_trait", float)
    n0 = _get(sec, "initial_count", int, int(round(model.K * float(monomorphic_equilibrium(model, x0)))))
    t_end = _get(sec, "t_end", float)
    snaps = _get(sec, "n_snapshots", int, 500)
    log_events = _get(sec, "log_events", bool, False)
    res = simulate(model, PopulationState.monomorphic(x0, n0, model.K), t_end,
                   np.random.default_rng(ss), n_snapshots=snaps, log_events=log_events)
    fin = res.final_state
    return {
        "rows": [(i, t, x, d) for t, x, d in res.trajectory.long_format()],
        "events": list(res.event_log.records()) if res.event_log is not None else None,
        "summary": {"replicate": i, "n_events": res.n_events, "extinct": res.extinct,
                    "final_size": fin.size,
                    "clusters": gap_clusters(fin.traits(), fin.densities(), gap=0.1)},
    }


def cmd_simulate_ibm(cfg: RunConfig) -> dict:
    model = cfg.model()
    advisory = scaling_advisory(model)
    results = _map(cfg, _ibm_replicate, [(cfg, s, i) for i, s in enumerate(_seeds(cfg))])
    head = cfg.header()
    aio.write_csv(os.path.join(cfg.out, "ibm_trajectory.csv"), head,
                  ("replicate", "time", "trait", "density"),
                  (row for r in results for row in r["rows"]))
    for r in results:
        if r["events"] is not None:
            i = r["summary"]["replicate"]
            aio.write_ndjson(os.path.join(cfg.out, f"ibm_events_{i}.ndjson"), head, r["events"])
    summary = {"replicates": [r["summary"] for r in results], "advisory": advisory}
    aio.write_json(os.path.join(cfg.out, "ibm_summary.json"), head, summary)
    return summary


def _pes_replicate(cfg: RunConfig, ss, i: int) -> dict:
    from .pes import PESState, detect_branching, entry_time, simulate_pes

    model = cfg.model()
    sec = cfg.section("simulate-pes")
    x0 = _get(sec, "initial_trait", float)
    t_end = _get(sec, "t_end", float)
    variant = _get(sec, "variant", str, "full")
    eps = _get(sec, "epsilon", float, model.epsilon)
    eta = _get(sec, "eta", float, 0.2)
    x_star = _get(sec, "x_star", float, _x_star(model))
    stop_diam = _get(sec, "stop_diameter", float, math.inf)
    stop = None
    if math.isfinite(stop_diam):
        def stop(_t, st):
            return st.diameter > stop_diam
    traj = simulate_pes(model, PESState.monomorphic(model, x0), t_end, np.random.default_rng(ss),
                        variant=variant, epsilon=eps, log_rejected=False, stop=stop)
    br = detect_branching(traj, x_star, eta)
    te = entry_time(traj, x_star, eta)
    after = [r.state for r in traj.records if te is not None and r.t >= te and r.state.alive]
    fin = traj.final
    return {
        "records": list(aio.pes_records(traj)),
        "summary": {"replicate": i, "branching": vars(br), "entry_time": te,
                    "post_entry_in_window": all(abs(s - x_star) < eta for st in after for s in st.support),
                    "post_entry_max_cardinality": max((len(st.support) for st in after), default=0),
                    "final_support": list(fin.support), "killed": fin.killed,
                    "n_jumps": len(traj.records) - 1},
    }


def cmd_simulate_pes(cfg: RunConfig) -> dict:
    results = _map(cfg, _pes_replicate, [(cfg, s, i) for i, s in enumerate(_seeds(cfg))])
    head = cfg.header()
    for r in results:
        i = r["summary"]["replicate"]
        aio.write_ndjson(os.path.join(cfg.out, f"pes_{i}.ndjson"), head, r["records"])
    sums = [r["summary"] for r in results]
    summary = {"replicates": sums,
               "branching_fraction": float(np.mean([s["branching"]["occurred"] for s in sums])),
               "killed_fraction": float(np.mean([s["killed"] != "none" for s in sums]))}
    aio.write_json(os.path.join(cfg.out, "pes_summary.json"), head, summary)
    return summary


def _nbar(model: ModelSpec):
    from .model import monomorphic_equilibrium

    return lambda x: float(monomorphic_equilibrium(model, float(x)))


def _time_grid(sec: dict) -> np.ndarray:
    return np.linspace(0.0, _get(sec, "t_end", float), _get(sec, "n_grid", int, 401))


def _tss_replicate(cfg: RunConfig, ss, i: int) -> list:
    from .tss import simulate_tss

    model = cfg.model()
    sec = cfg.section("simulate-tss", "canonical")
    grid = _time_grid(sec)
    eps = _get(sec, "epsilon", float, model.epsilon)
    path = simulate_tss(model, _get(sec, "x0", float), eps, float(grid[-1]),
                        np.random.default_rng(ss))
    return path.on_grid(grid).tolist()


def cmd_simulate_tss(cfg: RunConfig) -> dict:
    sec = cfg.section("simulate-tss", "canonical")
    grid = _time_grid(sec)
    paths = _map(cfg, _tss_replicate, [(cfg, s, i) for i, s in enumerate(_seeds(cfg))])
    head = cfg.header()
    nbar = _nbar(cfg.model())
    aio.write_csv(os.path.join(cfg.out, "tss_paths.csv"), head,
                  ("replicate", "time", "trait", "density"),
                  ((i, float(t), float(x), nbar(x)) for i, p in enumerate(paths) for t, x in zip(grid, p)))
    mean = np.mean(np.array(paths), axis=0)
    aio.write_csv(os.path.join(cfg.out, "tss_mean.csv"), head, ("time", "trait"),
                  zip(grid.tolist(), mean.tolist()))
    return {"time": grid.tolist(), "mean": mean.tolist()}


def cmd_canonical(cfg: RunConfig) -> dict:
    from .tss import solve_canonical

    model = cfg.model()
    sec = cfg.section("canonical", "simulate-tss")
    grid = _time_grid(sec)
    sol = solve_canonical(model, _get(sec, "x0", float), float(grid[-1]),
                          tol=_get(sec, "tol", float, 1e-8), n_out=grid.size)
    head = cfg.header(error_estimate=sol.error_estimate)
    nbar = _nbar(model)
    aio.write_csv(os.path.join(cfg.out, "canonical.csv"), head, ("time", "trait", "density"),
                  ((t, x, nbar(x)) for t, x in zip(sol.times.tolist(), sol.values.tolist())))
    return {"time": sol.times.tolist(), "trait": sol.values.tolist(),
            "error_estimate": sol.error_estimate}


def cmd_analyze(cfg: RunConfig) -> dict:
    from .singularity import coexistence_near_es, find_singularities

    model = cfg.model()
    reports = find_singularities(model)
    out = []
    for r in reports:
        d = r.to_dict()
        try:
            d["coexistence_near_es"] = coexistence_near_es(r)
        except AdaptdynError:
            d["coexistence_near_es"] = None
        out.append(d)
    payload = {"singularities": out}
    aio.write_json(os.path.join(cfg.out, "analysis.json"), cfg.header(), payload)
    for d in out:
        print(f"x*={d['x_star']:.10g} a={d['a']:.10g} c={d['c']:.10g} -> {d['classification']}")
    if not out:
        print("no evolutionary singularity found")
    return payload


def cmd_pip(cfg: RunConfig) -> dict:
    from .singularity import pip

    model = cfg.model()
    sec = cfg.section("pip")
    x_star = _get(sec, "x_star", float, _x_star(model))
    half = _get(sec, "half_width", float, 0.5)
    lo, hi = model.space.bounds
    rng = (_get(sec, "x_min", float, max(lo, x_star - half)), _get(sec, "x_max", float, min(hi, x_star + half)))
    grid = pip(model, rng, _get(sec, "resolution", int, 400), x_star=x_star)
    aio.write_csv(os.path.join(cfg.out, "pip.csv"), cfg.header(),
                  ("x", "y", "sign_fyx", "sign_fxy", "coexist"), grid.rows())
    return {"coexisting_cells": int(grid.coexist.sum())}


HANDLERS = {
    "simulate-ibm": cmd_simulate_ibm,
    "simulate-pes": cmd_simulate_pes,
    "simulate-tss": cmd_simulate_tss,
    "canonical": cmd_canonical,
    "analyze": cmd_analyze,
    "pip": cmd_pip,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaptdyn", description="Adaptive dynamics simulations")
    ap.add_argument("--version", action="version", version=f"adaptdyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides [run] seed)")
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1)
    return ap


def make_config(args: argparse.Namespace) -> RunConfig:
    sections = load_config(args.config)
    run = sections.get("run", {})
    seed = args.seed if args.seed is not None else _get(run, "seed", int, 0)
    reps = args.replicates if args.replicates is not None else _get(run, "replicates", int, 1)
    if reps < 1 or args.workers < 1:
        raise ConfigError("replicates and workers must be positive")
    out = args.out or run.get("out", ".")
    return RunConfig(args.command, sections, seed, reps, out, args.workers,
                     os.path.dirname(os.path.abspath(args.config)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        cfg.model()
    except (ConfigError, AdaptdynError, ValueError, KeyError, OSError) as exc:
        print(f"adaptdyn: invalid config: {exc}", file=sys.stderr)
        return 2
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", ScalingAdvisory)
            warnings.showwarning = _show_warning
            result = HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"adaptdyn: invalid config: {exc}", file=sys.stderr)
        return 2
    print(f"adaptdyn {cfg.command}: done in {time.perf_counter() - t0:.2f} s, output in {cfg.out}",
          file=sys.stderr)
    if cfg.command in ("simulate-pes",):
        print(json.dumps({k: result[k] for k in ("branching_fraction", "killed_fraction")}))
    return 0


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"adaptdyn: warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
