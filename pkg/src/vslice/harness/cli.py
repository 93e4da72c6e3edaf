"""Command line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import networkx as nx

from ..env import ActionSpace, observation_length
from ..mis import mis_reduce, mis_size
from ..oracle import OracleRefused, brute_force_oracle
from ..scenario import network
from ..trainer import TrainResult, load_checkpoint, save_checkpoint, train
from ..vra import check_feasible
from . import outputs
from .config import ALGORITHMS, SWEEP_DEFAULTS, SWEEPS, ConfigError, ExperimentConfig, load_config, validate
from .run import dql_rows, evaluate, run_sweep, train_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("vslice")


def _csv_list(text: str, cast=str) -> tuple:
    return tuple(cast(x.strip()) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vslice", description="Vehicular network-slicing experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, episodes_help="evaluation episodes"):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--network", help="preset such as 2,2,1,5 or m,n,F,T[,slot_s]")
        sp.add_argument("--episodes", type=int, help=episodes_help)
        sp.add_argument("--seed", type=int, help="single seed (overrides the config's seeds)")
        sp.add_argument("--seeds", help="comma-separated seeds")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--svg", action="store_true", help="also write SVG plots")

    sp = sub.add_parser("train", help="train the per-agent Q-networks")
    common(sp, "training episodes H")
    sp.add_argument("--eval-episodes", type=int, default=0, help="greedy evaluation episodes after training")

    sp = sub.add_parser("infer", help="run trained agents on fresh episodes")
    common(sp)
    sp.add_argument("--checkpoint", required=True, help="directory written by `train`")
    sp.add_argument("--greedy", action="store_true", help="force epsilon = 0")

    sp = sub.add_parser("bench", help="matching benchmarks")
    common(sp)
    sp.add_argument("--algorithms", default="oma-mp,noma-mp,noma-rp")

    sp = sub.add_parser("oracle", help="exact optimum on small instances")
    common(sp)
    sp.add_argument("--cap", type=int, help="refuse instances whose search work exceeds this")
    sp.add_argument("--powers", help="power levels in dBm, e.g. -100,30")

    sp = sub.add_parser("mis-check", help="maximum independent set reduction sweep")
    sp.add_argument("--max-vertices", type=int, default=5)
    sp.add_argument("--out", help="optional directory for the result table")

    sp = sub.add_parser("sweep", help="figure-style parameter grid")
    common(sp)
    sp.add_argument("--vary", required=True, choices=SWEEPS)
    sp.add_argument("--values", help="comma-separated sweep values")
    sp.add_argument("--unit", help="unit of the values, e.g. 300B, 1Mbit, slot")
    sp.add_argument("--algorithms", help="comma-separated subset of " + ",".join(ALGORITHMS))
    sp.add_argument("--train-episodes", type=int, help="training episodes per sweep point (dql)")
    return p


def resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else load_config(text="")
    changes = {}
    if getattr(args, "network", None):
        try:
            net = network(args.network)
        except ValueError as exc:
            raise ConfigError(f"--network: {exc}") from None
        changes["network"] = args.network
        changes["scenario"] = replace(cfg.scenario, network=net)
        changes["train"] = replace(cfg.train, network=args.network)
    if getattr(args, "seeds", None):
        try:
            changes["seeds"] = _csv_list(args.seeds, int)
        except ValueError:
            raise ConfigError("--seeds: expected comma-separated integers") from None
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = (args.seed,)
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "svg", False):
        changes["svg"] = True
    cfg = replace(cfg, **changes)
    cmd = args.command
    if cmd == "train" and args.episodes is not None:
        cfg = replace(cfg, train=replace(cfg.train, episodes=args.episodes))
    elif args.episodes is not None:
        cfg = replace(cfg, episodes=args.episodes)
    if cmd in ("bench", "sweep") and getattr(args, "algorithms", None):
        cfg = replace(cfg, algorithms=_csv_list(args.algorithms))
    if cmd == "infer" and args.greedy:
        cfg = replace(cfg, greedy=True)
    if cmd == "oracle":
        if args.cap is not None:
            cfg = replace(cfg, oracle_cap=args.cap)
        if args.powers:
            try:
                levels = _csv_list(args.powers, float)
            except ValueError:
                raise ConfigError("--powers: expected comma-separated dBm values") from None
            cfg = replace(cfg, scenario=replace(cfg.scenario, power_levels_dbm=levels))
    if cmd == "sweep":
        values, unit = SWEEP_DEFAULTS[args.vary]
        if args.values:
            try:
                values = _csv_list(args.values, float)
            except ValueError:
                raise ConfigError("--values: expected comma-separated numbers") from None
        cfg = replace(cfg, sweep=args.vary, sweep_values=tuple(values), sweep_unit=args.unit or unit)
        if args.train_episodes is not None:
            cfg = replace(cfg, train=replace(cfg.train, episodes=args.train_episodes))
    return validate(cfg)


def _header(cfg: ExperimentConfig, command: str, seed=None) -> dict:
    return {
        "command": command,
        "network": cfg.network,
        "seeds": ",".join(str(s) for s in ((seed,) if seed is not None else cfg.seeds)),
        "episodes": cfg.episodes,
        "train_config_hash": cfg.train.digest(),
    }


def cmd_train(cfg: ExperimentConfig, args) -> int:
    seed = cfg.seeds[0]
    tc = train_config(cfg, seed)

    def progress(k, r, loss, eps):
        if (k + 1) % 100 == 0:
            log.info("episode %d reward %.4f loss %.4g eps %.3f", k + 1, r, loss, eps)

    result: TrainResult = train(tc, cfg.scenario, progress=progress)
    os.makedirs(cfg.out, exist_ok=True)
    save_checkpoint(result, cfg.out)
    files = [os.path.join(cfg.out, f) for f in sorted(os.listdir(cfg.out)) if f.endswith(".qnet")]
    files.append(os.path.join(cfg.out, "manifest.json"))
    if cfg.svg:
        files.append(outputs.curves_svg(os.path.join(cfg.out, "curves.svg"), result.reward_ma(), result.loss))
    rows = []
    if args.eval_episodes:
        rows = dql_rows(result.params, replace(result.scenario, seed=seed), seed, args.eval_episodes,
                        result.epsilon, greedy=True)
    header = _header(cfg, "train", seed)
    header.update(episodes=args.eval_episodes, final_epsilon=result.epsilon, training_episodes=tc.episodes,
                  updates=result.updates)
    outputs.emit_outputs(rows, cfg.out, curves=result.curves_csv(), header=header, extra=files)
    print(f"trained {tc.episodes} episodes -> {cfg.out}")
    return EXIT_OK


def cmd_infer(cfg: ExperimentConfig, args) -> int:
    try:
        params, manifest, tc = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"--checkpoint: {exc}") from None
    if not args.network:
        cfg = replace(cfg, network=tc.network, scenario=replace(cfg.scenario, network=network(tc.network)))
    sc = cfg.scenario
    net = sc.network
    want = (observation_length(net.m, net.n, net.F), len(ActionSpace.from_config(sc)))
    if len(params) != net.m or any((p.obs_len, p.action_count) != want for p in params):
        raise ConfigError(f"--checkpoint does not fit network {cfg.network}")
    rows = []
    for seed in cfg.seeds:
        rows += dql_rows(params, replace(sc, seed=seed), seed, cfg.episodes, manifest["epsilon"], cfg.greedy)
    header = _header(cfg, "infer")
    header.update(epsilon=0.0 if cfg.greedy else manifest["epsilon"], checkpoint_config_hash=manifest["config_hash"])
    outputs.emit_outputs(rows, cfg.out, header=header, svg=cfg.svg)
    print(f"{len(rows)} inference episodes -> {cfg.out}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, command: str) -> int:
    rows = []
    for seed in cfg.seeds:
        rows += evaluate(cfg, cfg.scenario, seed)[0]
    outputs.emit_outputs(rows, cfg.out, header=_header(cfg, command))
    print(f"{len(rows)} rows -> {cfg.out}")
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, args) -> int:
    return cmd_eval(replace(cfg, algorithms=("oracle",)), "oracle")


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows = run_sweep(cfg)
    label = f"{cfg.sweep} (x{cfg.sweep_unit})"
    header = _header(cfg, "sweep")
    header.update(sweep=cfg.sweep, unit=cfg.sweep_unit, values=",".join(f"{v:g}" for v in cfg.sweep_values))
    outputs.emit_outputs(rows, cfg.out, header=header, svg=cfg.svg, sweep_label=label)
    print(f"{len(rows)} rows over {len(cfg.sweep_values)} sweep values -> {cfg.out}")
    return EXIT_OK


def small_graphs(max_vertices: int):
    """Every connected graph on 2..max_vertices vertices, up to isomorphism."""
    if max_vertices > 7:
        raise ConfigError("--max-vertices: the graph atlas stops at 7 vertices")
    for g in nx.graph_atlas_g():
        if 2 <= g.number_of_nodes() <= max_vertices and nx.is_connected(g):
            yield g


def cmd_mis_check(args) -> int:
    lines = ["graph,vertices,edges,mis,oracle,feasible,result"]
    failures = 0
    for idx, g in enumerate(small_graphs(args.max_vertices)):
        inst = mis_reduce(g)
        best, a = brute_force_oracle(inst)
        want = mis_size(g)
        feasible = not check_feasible(inst, a)
        ok = best == want and feasible
        failures += not ok
        lines.append(f"{idx},{g.number_of_nodes()},{g.number_of_edges()},{want},{best},{int(feasible)},"
                     f"{'PASS' if ok else 'FAIL'}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    print(f"{len(lines) - 1 - failures}/{len(lines) - 1} PASS")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "mis_check.csv")
        with open(path, "w") as fh:
            fh.write(table)
        outputs.write_manifest(args.out, [path])
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "mis-check":
            return cmd_mis_check(args)
        try:
            cfg = resolve(args)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        handler = {"train": cmd_train, "infer": cmd_infer, "oracle": cmd_oracle, "sweep": cmd_sweep}
        if args.command == "bench":
            return cmd_eval(cfg, "bench")
        return handler[args.command](cfg, args)
    except (ConfigError, OracleRefused) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
