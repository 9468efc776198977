"""Command line entry point: run, validate, export-topology, replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ConfigInvalid, load_scenario, run_experiment, scenario_topology, validate
from .metrics import NoCompletedJobs, dumps_json, summarize_log
from .topology import build_topology, save_topology

EXIT_CONFIG = 2


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _load(path: str):
    try:
        return load_scenario(path)
    except FileNotFoundError:
        raise ConfigInvalid([f"scenario file {path} not found"])
    except TypeError as exc:
        raise ConfigInvalid([f"scenario: {exc}"])


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    errors, warnings = validate(sc)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    for w in warnings:
        print(f"warning: {w}")
    if errors:
        return EXIT_CONFIG
    print(f"{args.scenario}: ok ({len(warnings)} warnings)")
    return 0


def cmd_run(args) -> int:
    sc = _load(args.scenario)
    out = Path(args.out) if args.out else Path("runs") / sc.name
    res = run_experiment(sc, out, seeds=args.seeds, arms=args.arms)
    print(f"wrote {out}")
    for arm, metrics in res["aggregate"].items():
        m, hw = metrics["avg_wait"]
        sw, _ = metrics["std_wait_across_nodes"]
        su, _ = metrics["std_utilization_across_nodes"]
        print(f"{arm:16s} avg_wait {m:.4f} +- {hw:.4f}  std_wait {sw:.4f}  std_util {su:.4f}")
    if not res["aggregate"]:
        for r in res["results"]:
            s = r.summary
            print(f"{r.arm:16s} seed {r.seed}  avg_wait {s.avg_wait:.4f}  std_wait {s.std_wait_across_nodes:.4f}  std_util {s.std_utilization_across_nodes:.4f}")
    return 0


def cmd_export_topology(args) -> int:
    if args.scenario:
        sc = _load(args.scenario)
        errors, _ = validate(sc)
        if errors:
            raise ConfigInvalid(errors)
        topo = scenario_topology(sc, args.seed)
    else:
        topo = build_topology(args.n_nodes, args.n_aps, seed=args.seed, attachment_degree=args.attachment_degree, regions=args.regions)
    save_topology(topo, args.out)
    print(f"wrote {args.out}: {len(topo.ap_ids)} APs, {len(topo.fog_ids)} fog nodes, {len(topo.links)} links")
    return 0


def cmd_replay(args) -> int:
    log = json.loads(Path(args.event_log).read_text())
    fogs = _int_list(args.fogs) if args.fogs else None
    summary = summarize_log(log, fogs)
    text = dumps_json(summary.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogmarl", description="Fog load-balancing simulator with distributed DDQL agents.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every (arm, seed) of a scenario and write CSV/JSON")
    r.add_argument("scenario")
    r.add_argument("--seeds", type=_int_list, help="comma separated seed subset")
    r.add_argument("--arms", type=_str_list, help="comma separated arm subset, e.g. DRL-realtime,Fastest")
    r.add_argument("--out", help="output directory (default runs/<scenario name>)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("export-topology", help="write a generated topology as JSON")
    e.add_argument("--scenario", help="take the topology settings from this scenario")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--n-nodes", type=int, default=32)
    e.add_argument("--n-aps", type=int, default=21)
    e.add_argument("--attachment-degree", type=int, default=1)
    e.add_argument("--regions", choices=["split2"], default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_topology)

    y = sub.add_parser("replay", help="recompute a run summary from a saved event log")
    y.add_argument("event_log")
    y.add_argument("--fogs", help="restrict across-node statistics to these fog ids")
    y.add_argument("--out", help="write the summary JSON here instead of stdout")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except NoCompletedJobs as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
