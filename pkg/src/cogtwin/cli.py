"""``cogtwin`` command line: run nodes, the environment, single evolutions and batches."""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path

log = logging.getLogger("cogtwin")


def _evo_config(args):
    from .evo.run import EvoConfig
    from .smarthome.house import load_adjacency

    return EvoConfig(
        pool_seed=getattr(args, "pool_seed", 0), data_seed=getattr(args, "data_seed", 0),
        prefs_seed=getattr(args, "prefs_seed", None), es_seed=getattr(args, "es_seed", 0),
        pop_size=args.pop, max_generations=args.gens, mut_p=args.mut_p,
        ind_m=args.ind_m, p_one=args.p_one, n_samples=args.samples, n_test=args.test,
        n_perceptual=args.perceptuals, n_behavioral=args.behaviorals,
        assignment=args.assignment, update_scope=args.update_scope,
        comfort_rule_direction=args.comfort_direction,
        adjacency=load_adjacency(args.adjacency).tolist() if args.adjacency else None,
    )


def _add_evo_args(p, seeds=True):
    if seeds:
        p.add_argument("--pool-seed", type=int, default=0)
        p.add_argument("--data-seed", type=int, default=0)
        p.add_argument("--prefs-seed", type=int, default=None,
                       help="base-agent preferences seed (default: the data seed)")
        p.add_argument("--es-seed", type=int, default=0)
    p.add_argument("--pop", type=int, default=20)
    p.add_argument("--gens", type=int, default=20)
    p.add_argument("--mut-p", type=float, default=0.5)
    p.add_argument("--ind-m", type=float, default=0.05)
    p.add_argument("--p-one", type=float, default=0.2)
    p.add_argument("--samples", type=int, default=400)
    p.add_argument("--test", type=int, default=20, help="trailing samples held out for scoring")
    p.add_argument("--perceptuals", type=int, default=15)
    p.add_argument("--behaviorals", type=int, default=13)
    p.add_argument("--assignment", choices=("identity", "random"), default="identity")
    p.add_argument("--update-scope", choices=("occupied", "all"), default="occupied")
    p.add_argument("--comfort-direction", choices=("lower", "higher"), default="lower")
    p.add_argument("--adjacency", help="5x5 room adjacency matrix file")
    p.add_argument("--mode", choices=("inprocess", "distributed"), default="inprocess")
    p.add_argument("--env", help="environment address (distributed mode)")
    p.add_argument("--nodes", help="nodes file of a running agent (distributed mode)")
    p.add_argument("--health-period", type=float, default=200,
                   help="ms, for a locally spawned agent")


def _wait_for_stop(stopped, stop):
    """Park the main thread until ``stopped`` fires; SIGINT/SIGTERM trigger ``stop``."""
    def handler(signum, frame):
        threading.Thread(target=stop, daemon=True).start()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    while not stopped(0.5):
        pass


# -- subcommands ----------------------------------------------------------------


def cmd_node(args):
    from .node.config import NodeConfig, load_nodes_file
    from .node.master import NodeMaster, StartupError

    if args.name:
        matches = [n for n in load_nodes_file(args.config) if n.node_name == args.name]
        if not matches:
            print(f"no node named {args.name!r} in {args.config}", file=sys.stderr)
            return 2
        cfg = matches[0]
    else:
        cfg = NodeConfig.load(args.config)
    if args.listen:
        cfg.listen_address = args.listen
    if args.health_period is not None:
        cfg.health_period = args.health_period / 1000.0
    try:
        master = NodeMaster(cfg, args.workdir).start()
    except StartupError as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    print(f"node {cfg.node_name} listening on {master.address}", flush=True)
    _wait_for_stop(master.wait_stopped, master.stop)
    return 0


def cmd_env(args):
    from .smarthome.house import DEFAULT_ADJACENCY, load_adjacency
    from .smarthome.server import EnvServer
    from .smarthome.sim import sample_preferences

    adjacency = load_adjacency(args.adjacency) if args.adjacency else DEFAULT_ADJACENCY
    prefs_seed = args.seed if args.prefs_seed is None else args.prefs_seed
    server = EnvServer(f"{args.host}:{args.port}", prefs=sample_preferences(prefs_seed),
                       adjacency=adjacency, seed=args.seed, update_scope=args.update_scope,
                       direction=args.comfort_direction).start()
    print(f"environment listening on {server.address}", flush=True)
    if args.walk_period > 0:
        def walk():
            while not server.wait_stopped(args.walk_period / 1000.0):
                server.advance()

        threading.Thread(target=walk, daemon=True).start()
    _wait_for_stop(server.wait_stopped, server.stop)
    return 0


def _distributed_backend(args, pool, prefs):
    from .evo.cluster import LocalCluster, StaticCluster

    if args.nodes:
        return StaticCluster(args.nodes, args.env), None
    cluster = LocalCluster(pool, prefs, health_period=args.health_period / 1000.0).start()
    return cluster, cluster


def cmd_evolve(args):
    from .evo.run import evolve_inprocess, make_problem, run_evolution
    from .experiment import RunResult, write_reports

    cfg = _evo_config(args)
    if args.mode == "inprocess":
        report = evolve_inprocess(cfg)
    else:
        pool, prefs, dataset = make_problem(cfg)
        backend, owned = _distributed_backend(args, pool, prefs)
        try:
            agent = backend.agent(pool, dataset) if owned is None else owned.agent(dataset)
            report = run_evolution(agent, pool.genome_length, len(pool.perceptual), cfg)
            agent.close()
        finally:
            if owned is not None:
                owned.stop()
    print(json.dumps(report.to_dict(), sort_keys=True))
    if args.out:
        write_reports([RunResult(0, report)], args.out)
    return 0


def cmd_experiment(args):
    from .evo.pool import build_pool
    from .experiment import (emit_histograms, format_stats, run_batch, summarize,
                             write_reports)

    base = _evo_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        if r.ok:
            log.info("run %d: score %d after %d generations", r.run_id, r.report.score,
                     r.report.generations_used)
        else:
            log.warning("run %d failed: %s", r.run_id, r.error)

    owned = None
    cluster = None
    if args.mode == "distributed":
        from .evo.cluster import LocalCluster, StaticCluster

        if args.nodes:
            cluster = StaticCluster(args.nodes, args.env)
        else:
            shape = build_pool(0, P=base.n_perceptual, B=base.n_behavioral,
                               assignment=base.assignment)
            cluster = owned = LocalCluster(shape, health_period=args.health_period / 1000.0)
            owned.start()
    started = time.monotonic()
    try:
        results = run_batch(args.runs, args.seed, base, jobs=args.jobs, mode=args.mode,
                            cluster=cluster, progress=progress)
    finally:
        if owned is not None:
            owned.stop()
    write_reports(results, out / "report.csv")
    failed = [r for r in results if not r.ok]
    if len(failed) < len(results):
        emit_histograms(results, out)
        print(format_stats(summarize(results)))
    print(f"{len(results) - len(failed)}/{len(results)} runs completed in "
          f"{time.monotonic() - started:.1f}s; outputs in {out}")
    return 0 if not failed else 1


def cmd_layout(args):
    from .evo.layout import build_layout
    from .evo.pool import build_pool
    from .node.config import save_nodes_file

    pool = build_pool(args.pool_seed, P=args.perceptuals, B=args.behaviorals,
                      assignment=args.assignment)
    if args.single:
        addresses = f"{args.host}:{args.base_port}"
    else:
        groups = ("sensory", "perceptual", "behavioral", "motor")
        addresses = {g: f"{args.host}:{args.base_port + i}" for i, g in enumerate(groups)}
    nodes = build_layout(pool, args.env, addresses, args.health_period / 1000.0)
    save_nodes_file(args.out, nodes)
    for n in nodes:
        print(f"{n.node_name}\t{n.listen_address}\t{len(n.codelets)} codelets")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cogtwin", description=__doc__)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("node", help="run one node master")
    p.add_argument("--config", required=True, help="node config, or a nodes file with --name")
    p.add_argument("--name", help="pick this node out of a nodes file")
    p.add_argument("--listen", help="host:port, overrides the config")
    p.add_argument("--health-period", type=float, help="ms, overrides the config")
    p.add_argument("--workdir", help="where fields.json files and codelet logs go")
    p.set_defaults(func=cmd_node)

    p = sub.add_parser("env", help="serve the simulated house")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefs-seed", type=int, default=None)
    p.add_argument("--adjacency", help="5x5 room adjacency matrix file")
    p.add_argument("--update-scope", choices=("occupied", "all"), default="occupied")
    p.add_argument("--comfort-direction", choices=("lower", "higher"), default="lower")
    p.add_argument("--walk-period", type=float, default=0,
                   help="ms between random-walk steps; 0 leaves the house still")
    p.set_defaults(func=cmd_env)

    p = sub.add_parser("evolve", help="one evolution run")
    _add_evo_args(p)
    p.add_argument("--out", help="report CSV")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("experiment", help="a batch of independent runs")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    _add_evo_args(p, seeds=False)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("layout", help="write a nodes file for a multi-host agent")
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--perceptuals", type=int, default=15)
    p.add_argument("--behaviorals", type=int, default=13)
    p.add_argument("--assignment", choices=("identity", "random"), default="identity")
    p.add_argument("--env", required=True, help="environment address")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--base-port", type=int, default=7100)
    p.add_argument("--single", action="store_true", help="one node for every codelet")
    p.add_argument("--health-period", type=float, default=500, help="ms")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_layout)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "experiment" and args.mode == "distributed" and args.jobs != 1:
        print("distributed batches share one live agent; forcing --jobs 1", file=sys.stderr)
        args.jobs = 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
