"""Inference benchmarking: wall clock, multiply-add counts, analytic memory.

Wall-clock numbers are machine-dependent and reported for information;
assertions elsewhere rely on the deterministic multiply-add counts and the
analytic byte accounting. The measured path runs single-threaded (BLAS pools
are limited during timing); a best-effort process RSS delta is included for
reference only.
"""

from __future__ import annotations

import json
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import gnn
from .pipelines import infer_full, infer_single_node, infer_subgraphs, subgraph_operator

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

MIN_REPETITIONS = 5


def _single_thread():
    return threadpool_limits(limits=1) if threadpool_limits else nullcontext()


def _rss_bytes():
    try:
        import psutil
        return psutil.Process().memory_info().rss
    except Exception:  # pragma: no cover
        return 0


@dataclass
class BenchReport:
    """One benchmark scenario; latencies are per prediction, in seconds."""

    scenario: str
    mode: str
    ratio: float | None
    augment: str | None
    repetitions: int
    samples: int
    latency_mean_s: float
    latency_median_s: float
    opcount: int
    peak_bytes: int
    rss_delta_bytes: int = 0

    def ratios_vs(self, baseline):
        """Comparison ratios against a full-graph baseline report (same
        parameter checkpoint on the same machine)."""
        return {
            "latency_ratio": baseline.latency_mean_s / self.latency_mean_s
            if self.latency_mean_s else float("inf"),
            "opcount_ratio": baseline.opcount / self.opcount
            if self.opcount else float("inf"),
            "bytes_ratio": baseline.peak_bytes / self.peak_bytes
            if self.peak_bytes else float("inf"),
        }


def _check_reps(repetitions):
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"at least {MIN_REPETITIONS} repetitions required, "
                         f"got {repetitions}")


def _stats(times):
    times = sorted(times)
    mid = len(times) // 2
    median = times[mid] if len(times) % 2 else 0.5 * (times[mid - 1] + times[mid])
    return float(np.mean(times)), float(median)


def bench_inference(g, params, mode, s=None, gc=None, repetitions=MIN_REPETITIONS,
                    samples=1000, seed=0, scenario="", ratio=None, augment=None,
                    local_degree=False):
    """Benchmark one node-task inference mode.

    ``full`` times a whole-graph forward per prediction, ``subgraphs`` one
    pass over every subgraph (predicting all nodes), ``single_node`` the
    sampled per-node path (1000 nodes, with replacement when the graph is
    smaller), and ``coarse`` a forward over the coarse graph.
    """
    _check_reps(repetitions)
    dims = params.dims
    rss_before = _rss_bytes()
    if mode == "full":
        op = gnn.make_operator(g.adj, g.degrees)
        times = []
        with _single_thread():
            for _ in range(repetitions):
                t0 = time.perf_counter()
                gnn.node_model_forward(op, g.x, params)
                times.append(time.perf_counter() - t0)
        ops = gnn.forward_opcount(op.nnz, g.n, dims)
        peak = gnn.inference_bytes(g.n, dims)
    elif mode == "subgraphs":
        if s is None:
            raise ValueError("subgraphs mode requires a subgraph set")
        times = []
        with _single_thread():
            for _ in range(repetitions):
                t0 = time.perf_counter()
                infer_subgraphs(s, params, local_degree)
                times.append(time.perf_counter() - t0)
        ops = sum(gnn.forward_opcount(subgraph_operator(sub, local_degree).nnz,
                                      sub.n_local, dims) for sub in s.subgraphs)
        peak = max(gnn.inference_bytes(sub.n_local, dims) for sub in s.subgraphs)
    elif mode == "single_node":
        if s is None:
            raise ValueError("single_node mode requires a subgraph set")
        rng = np.random.default_rng(seed)
        n = len(s.owner)
        nodes = rng.choice(n, size=samples, replace=n < samples)
        times = []
        with _single_thread():
            for _ in range(repetitions):
                t0 = time.perf_counter()
                for node in nodes:
                    infer_single_node(s, params, int(node), local_degree)
                times.append((time.perf_counter() - t0) / len(nodes))
        per_node_ops = []
        touched = set(int(s.owner[v]) for v in nodes)
        for node in nodes:
            sub = s.subgraphs[int(s.owner[node])]
            nnz = subgraph_operator(sub, local_degree).nnz
            per_node_ops.append(gnn.forward_opcount(nnz, sub.n_local, dims))
        ops = int(round(float(np.mean(per_node_ops))))
        peak = max(gnn.inference_bytes(s.subgraphs[i].n_local, dims)
                   for i in touched)
    elif mode == "coarse":
        if gc is None:
            raise ValueError("coarse mode requires a coarsened graph")
        op = gnn.make_operator(gc.a_c, gc.d_c)
        times = []
        with _single_thread():
            for _ in range(repetitions):
                t0 = time.perf_counter()
                gnn.node_model_forward(op, gc.x_c, params)
                times.append(time.perf_counter() - t0)
        ops = gnn.forward_opcount(op.nnz, gc.k, dims)
        peak = gnn.inference_bytes(gc.k, dims)
    else:
        raise ValueError(f"unknown bench mode {mode!r}")
    mean, median = _stats(times)
    return BenchReport(scenario=scenario or mode, mode=mode, ratio=ratio,
                       augment=augment, repetitions=repetitions, samples=samples,
                       latency_mean_s=mean, latency_median_s=median,
                       opcount=int(ops), peak_bytes=int(peak),
                       rss_delta_bytes=max(0, _rss_bytes() - rss_before))


def bench_graph_inference(ds, params, items, repetitions=MIN_REPETITIONS,
                          samples=1000, seed=0, scenario="", mode="subgraphs",
                          ratio=None, augment=None):
    """Benchmark graph-level prediction over sampled test-split graphs.

    ``items`` holds one list of (operator, features) pairs per dataset graph
    (a singleton list for coarse-graph inference).
    """
    _check_reps(repetitions)
    rng = np.random.default_rng(seed)
    pool = ds.test_idx if len(ds.test_idx) else np.arange(len(ds.graphs))
    picks = rng.choice(pool, size=samples, replace=len(pool) < samples)
    dims = params.dims
    times = []
    with _single_thread():
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for i in picks:
                gnn.graph_model_gs_forward(items[int(i)], params)
            times.append((time.perf_counter() - t0) / len(picks))
    per_graph_ops = [sum(gnn.forward_opcount(op.nnz, op.n, dims, pooled=True)
                         for op, _ in items[int(i)]) for i in picks]
    peak = max(gnn.inference_bytes(op.n, dims)
               for i in picks for op, _ in items[int(i)])
    mean, median = _stats(times)
    return BenchReport(scenario=scenario or f"graph-{mode}", mode=mode,
                       ratio=ratio, augment=augment, repetitions=repetitions,
                       samples=samples, latency_mean_s=mean,
                       latency_median_s=median,
                       opcount=int(round(float(np.mean(per_graph_ops)))),
                       peak_bytes=int(peak))


BENCH_CSV_COLUMNS = ("scenario", "mode", "r", "augment", "latency_mean_s",
                     "latency_median_s", "opcount", "peak_bytes")


def save_bench_csv(reports, path):
    lines = [",".join(BENCH_CSV_COLUMNS)]
    for rep in reports:
        lines.append(",".join([
            rep.scenario, rep.mode,
            "" if rep.ratio is None else repr(rep.ratio),
            rep.augment or "",
            repr(rep.latency_mean_s), repr(rep.latency_median_s),
            str(rep.opcount), str(rep.peak_bytes)]))
    Path(path).write_text("\n".join(lines) + "\n")


def save_bench_json(reports, path):
    Path(path).write_text(json.dumps([asdict(r) for r in reports], indent=2))
