"""Command-line surface: synthesis, coarsening, training, inference, benchmarks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import feasibility as feas
from .coarsen import (build_coarsened_graph, coarsen_partition, load_partition,
                      save_coarse, save_partition)
from .gnn import load_params, save_params
from .graph import load_graph, load_graph_dataset, save_graph, synth_sbm
from .pipelines import (ExperimentSpec, infer_full, infer_single_node,
                        infer_subgraphs, run_experiment,
                        structures_from_partition)
from .subgraphs import save_subgraph_dump


def _add_common(p, *names):
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "ratio" in names:
        p.add_argument("--ratio", type=float, default=0.5)
    if "method" in names:
        p.add_argument("--method", default="heavy_edge",
                       choices=["heavy_edge", "neighborhood_growth"])
    if "augment" in names:
        p.add_argument("--augment", default="none",
                       choices=["none", "extra", "cluster"])
    if "setup" in names:
        p.add_argument("--setup", default="gs_train_gs_infer",
                       choices=["gc_train_gs_train", "gc_train_gs_infer",
                                "gs_train_gs_infer", "gc_train_gc_infer"])
    if "task" in names:
        p.add_argument("--task", default="node_class",
                       choices=["node_class", "node_reg", "graph_class",
                                "graph_reg"])


def cmd_synth(args):
    blocks = [int(t) for t in args.blocks.split(",") if t]
    g = synth_sbm(blocks, args.p_in, args.p_out, args.dim, args.seed,
                  feature_scale=args.feature_scale)
    save_graph(g, args.out)
    print(f"wrote {args.out}: n={g.n} m={g.m} d={g.d}")


def cmd_partition(args):
    g = load_graph(args.graph)
    part = coarsen_partition(g, args.ratio, method=args.method, seed=args.seed)
    save_partition(part, args.out, method=args.method, seed=args.seed)
    print(f"wrote {args.out}: k={part.k} n={part.n}")


def cmd_coarsen(args):
    g = load_graph(args.graph)
    part = coarsen_partition(g, args.ratio, method=args.method, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_partition(part, out_dir / "partition.txt", method=args.method,
                   seed=args.seed)
    coarse_task = "classification" if args.task == "node_class" else "none"
    gc = build_coarsened_graph(g, part, task=coarse_task)
    save_coarse(gc, out_dir / "coarse.json")
    print(f"wrote {out_dir}/partition.txt and {out_dir}/coarse.json: k={gc.k}")


def cmd_augment(args):
    g = load_graph(args.graph)
    part, _method, _seed = load_partition(args.partition)
    _gc, s = structures_from_partition(g, part, args.augment, args.task)
    save_subgraph_dump(s, args.out)
    added = sum(int((sub.provenance != "core").sum()) for sub in s.subgraphs)
    print(f"wrote {args.out}: {len(s.subgraphs)} subgraphs, {added} appended nodes")


def cmd_train(args):
    if args.config:
        spec = ExperimentSpec.from_file(args.config)
    else:
        spec = ExperimentSpec(
            task=args.task, setup=args.setup, ratio=args.ratio,
            augmentation=args.augment, method=args.method, trials=args.trials,
            epochs=args.epochs, layers=args.layers, hidden=args.hidden,
            lr=args.lr, weight_decay=args.weight_decay, seed=args.seed)
    if spec.task.startswith("node"):
        data = load_graph(args.graph)
    else:
        if not args.dataset:
            raise ValueError("graph-level tasks require --dataset")
        data = load_graph_dataset(args.dataset)
    report = run_experiment(spec, data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec.to_file(out_dir / "spec.cfg")
    report.to_json(out_dir / "report.json")
    report.to_csv(out_dir / "report.csv")
    save_params(report.best_params, out_dir / "checkpoint.ckpt")
    print(f"wrote {out_dir}: test {report.test_mean:.4f} +/- {report.test_std:.4f} "
          f"over {len(report.kept_trials)} kept trials")


def _node_structures(args, g):
    part, _method, _seed = load_partition(args.partition)
    return structures_from_partition(g, part, args.augment, args.task)


def cmd_infer(args):
    g = load_graph(args.graph)
    params = load_params(args.checkpoint)
    if args.mode == "full":
        z = infer_full(g, params)
    elif args.mode == "coarse":
        gc, _s = _node_structures(args, g)
        from .gnn import make_operator, node_model_forward
        z = node_model_forward(make_operator(gc.a_c, gc.d_c), gc.x_c, params)
    else:
        _gc, s = _node_structures(args, g)
        if args.mode == "single_node":
            if args.node is None:
                raise ValueError("single_node mode requires --node")
            z = infer_single_node(s, params, args.node)[None, :]
        else:
            z = infer_subgraphs(s, params)
    header = ["row"] + [f"z{i}" for i in range(z.shape[1])]
    classify = args.task.endswith("class")
    if classify:
        header.append("pred")
    lines = [",".join(header)]
    ids = [args.node] if args.mode == "single_node" else range(len(z))
    for i, row in zip(ids, z):
        cells = [str(i)] + [repr(v) for v in row]
        if classify:
            cells.append(str(int(np.argmax(row))))
        lines.append(",".join(cells))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}: {len(z)} predictions")


def cmd_bench(args):
    g = load_graph(args.graph)
    params = load_params(args.checkpoint)
    gc = s = None
    if args.mode != "full":
        gc, s = _node_structures(args, g)
    report = bench_mod.bench_inference(
        g, params, args.mode, s=s, gc=gc, repetitions=args.repetitions,
        samples=args.samples, seed=args.seed, ratio=args.ratio,
        augment=args.augment)
    baseline = bench_mod.bench_inference(
        g, params, "full", repetitions=args.repetitions, samples=args.samples,
        seed=args.seed, scenario="baseline-full")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bench_mod.save_bench_csv([baseline, report], out_dir / "bench.csv")
    bench_mod.save_bench_json([baseline, report], out_dir / "bench.json")
    ratios = report.ratios_vs(baseline)
    (out_dir / "ratios.json").write_text(json.dumps(ratios, indent=2))
    print(f"wrote {out_dir}: opcount_ratio={ratios['opcount_ratio']:.2f} "
          f"bytes_ratio={ratios['bytes_ratio']:.2f}")


def cmd_feasibility(args):
    if args.region:
        n_values = [int(t) for t in args.n_grid.split(",") if t]
        r_values = [float(t) for t in args.r_grid.split(",") if t]
        rows = feas.feasibility_region(args.d, n_values, r_values, args.phi or 0.0)
        feas.save_feasibility_csv(rows, args.out)
        print(f"wrote {args.out}: {len(rows)} grid points")
        return
    if args.check:
        sizes = [int(t) for t in args.sizes.split(",") if t]
        res = feas.lemma2_check(args.n, args.d, sizes, args.phi or 0.0)
        print(json.dumps({"lhs": res.lhs, "rhs": res.rhs, "holds": res.holds,
                          "ratio_condition": res.ratio_condition,
                          "size_condition": res.size_condition}))
        return
    if args.r is not None:
        print(f"{feas.phi_max_bound(args.d, args.r):.3f}")
        return
    if args.phi is not None:
        print(f"{feas.ratio_bound(args.d, args.phi):.6f}")
        return
    raise ValueError("feasibility requires --r, --phi, --check, or --region")


def cmd_report(args):
    rows = []
    for path in args.inputs:
        doc = json.loads(Path(path).read_text())
        spec = doc["spec"]
        rows.append([spec["task"], spec["setup"], spec["ratio"],
                     spec["augmentation"], spec["method"], spec["trials"],
                     doc["test_mean"], doc["test_std"], doc["train_time_s"],
                     doc["latency_mean_s"], doc["latency_median_s"],
                     doc["peak_bytes"]])
    header = ["task", "setup", "ratio", "augment", "method", "trials",
              "test_mean", "test_std", "train_time_s", "latency_mean_s",
              "latency_median_s", "peak_bytes"]
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}: {len(rows)} runs")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subgcn",
        description="Coarsen graphs, train compact GCNs, and benchmark "
                    "subgraph-level inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a stochastic-block-model graph")
    p.add_argument("--blocks", required=True, help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--feature-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_common(p, "seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="write a partition file")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "ratio", "method", "seed")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("coarsen", help="write partition and coarse graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p, "ratio", "method", "seed", "task")
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("augment", help="dump augmented subgraphs as JSON")
    p.add_argument("--graph", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "augment", "task")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--graph")
    p.add_argument("--dataset")
    p.add_argument("--config", help="flat key=value experiment file")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=0.0005)
    p.add_argument("--out-dir", required=True)
    _add_common(p, "ratio", "method", "seed", "augment", "setup", "task")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict with a trained checkpoint")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--partition")
    p.add_argument("--mode", default="subgraphs",
                   choices=["full", "subgraphs", "single_node", "coarse"])
    p.add_argument("--node", type=int)
    p.add_argument("--out", required=True)
    _add_common(p, "augment", "task")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="benchmark an inference mode")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--partition")
    p.add_argument("--mode", default="single_node",
                   choices=["full", "subgraphs", "single_node", "coarse"])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--out-dir", required=True)
    _add_common(p, "ratio", "seed", "augment", "task")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("feasibility", help="cost-model bounds and regions")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--sizes", help="comma-separated cluster sizes")
    p.add_argument("--check", action="store_true")
    p.add_argument("--region", action="store_true")
    p.add_argument("--n-grid", help="comma-separated node counts")
    p.add_argument("--r-grid", help="comma-separated ratios")
    p.add_argument("--out")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("report", help="combine run reports into one CSV")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
