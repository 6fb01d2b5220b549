"""Immutable sparse graph containers, file I/O, and synthetic generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .validation import check_probability, check_positive_int

SPLIT_NAMES = ("train", "val", "test", "none")


class GraphFormatError(ValueError):
    """Raised when an input file cannot be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GraphValidationError(ValueError):
    """Raised when parsed data violates a structural invariant."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph with node features, immutable after construction.

    Adjacency is stored symmetrically in CSR form with no explicit self-loops
    (self-loops enter analytically during propagation). ``degrees`` caches the
    weighted degree of every node in this graph; subgraph construction carries
    these values along so that boundary nodes keep their original degrees.
    """

    n: int
    m: int
    edges: np.ndarray          # (m, 2) int64, u < v, lexicographically sorted
    edge_weights: np.ndarray   # (m,) float64, positive
    adj: sp.csr_matrix         # n x n symmetric, zero diagonal
    x: np.ndarray              # (n, d) float64
    y: np.ndarray | None       # (n,) int64 class ids, or (n,) / (n, t) float64 targets
    degrees: np.ndarray        # (n,) float64 row sums of adj
    train_mask: np.ndarray     # (n,) bool, pairwise disjoint with val/test
    val_mask: np.ndarray
    test_mask: np.ndarray
    id_map: tuple | None = field(default=None, compare=False)  # original ids, if remapped

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def num_classes(self):
        if self.y is None or not np.issubdtype(self.y.dtype, np.integer):
            raise ValueError("graph has no class labels")
        return int(self.y.max()) + 1

    def neighbors(self, v):
        """Neighbor ids of node v (ascending)."""
        return self.adj.indices[self.adj.indptr[v]:self.adj.indptr[v + 1]]

    def split_mask(self, name):
        try:
            return {"train": self.train_mask, "val": self.val_mask,
                    "test": self.test_mask}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    @classmethod
    def build(cls, n, edge_triples, x, y=None, split=None, id_map=None):
        """Construct a validated graph from directed or undirected edge triples.

        Repeated entries of the same directed pair are merged by weight sum;
        entries listing both orientations describe one undirected edge and
        must agree in (merged) weight. Self-loops are rejected.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise GraphValidationError(
                f"feature matrix has {x.shape[0] if x.ndim == 2 else '?'} rows, expected {n}")
        directed = {}
        for u, v, w in edge_triples:
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphValidationError(f"edge ({u},{v}) references a node outside [0,{n})")
            if u == v:
                raise GraphValidationError(f"self-loop on node {u} is not allowed")
            directed[(u, v)] = directed.get((u, v), 0.0) + w
        merged = {}
        for (u, v), w in directed.items():
            a, b = (u, v) if u < v else (v, u)
            if (a, b) in merged:
                continue
            back = directed.get((v, u))
            if back is not None and back != w:
                raise GraphValidationError(
                    f"edge ({a},{b}) listed in both orientations with unequal weights")
            merged[(a, b)] = w
        for w in merged.values():
            if w <= 0:
                raise GraphValidationError("edge weights must be positive")
        if merged:
            pairs = np.array(sorted(merged), dtype=np.int64)
            weights = np.array([merged[tuple(p)] for p in pairs], dtype=np.float64)
        else:
            pairs = np.empty((0, 2), dtype=np.int64)
            weights = np.empty(0, dtype=np.float64)
        adj = _adjacency_from_pairs(n, pairs, weights)
        degrees = np.asarray(adj.sum(axis=1)).ravel()
        masks = _parse_split(split, n)
        g = cls(n=n, m=len(pairs), edges=_frozen(pairs), edge_weights=_frozen(weights),
                adj=adj, x=_frozen(x), y=_prepare_labels(y, n), degrees=_frozen(degrees),
                train_mask=masks[0], val_mask=masks[1], test_mask=masks[2],
                id_map=tuple(id_map) if id_map is not None else None)
        problems = validate(g)
        if problems:
            raise GraphValidationError("; ".join(problems))
        return g


def _adjacency_from_pairs(n, pairs, weights):
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    data = np.concatenate([weights, weights])
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adj.sort_indices()
    adj.data.setflags(write=False)
    return adj


def _prepare_labels(y, n):
    if y is None:
        return None
    y = np.asarray(y)
    if len(y) != n:
        raise GraphValidationError(f"label vector has length {len(y)}, expected {n}")
    if np.issubdtype(y.dtype, np.integer):
        return _frozen(y.astype(np.int64))
    return _frozen(y.astype(np.float64))


def _parse_split(split, n):
    if split is None:
        split = ["none"] * n
    if len(split) != n:
        raise GraphValidationError(f"split vector has length {len(split)}, expected {n}")
    masks = []
    for name in ("train", "val", "test"):
        masks.append(_frozen(np.array([s == name for s in split], dtype=bool)))
    for i, s in enumerate(split):
        if s not in SPLIT_NAMES:
            raise GraphValidationError(f"unknown split tag {s!r} for node {i}")
    return masks


def split_tags(g):
    """Per-node split tags, inverse of the mask triple."""
    tags = np.full(g.n, "none", dtype=object)
    tags[g.train_mask] = "train"
    tags[g.val_mask] = "val"
    tags[g.test_mask] = "test"
    return tags.tolist()


def validate(g):
    """Check every Graph invariant; returns a list of violation descriptions."""
    problems = []
    if g.adj.shape != (g.n, g.n):
        problems.append(f"shape: adjacency is {g.adj.shape}, expected ({g.n},{g.n})")
        return problems
    if (g.adj != g.adj.T).nnz != 0:
        problems.append("symmetry: adjacency is not symmetric")
    if np.any(g.adj.diagonal() != 0):
        problems.append("self-loop: adjacency has nonzero diagonal entries")
    if np.any(g.adj.data < 0):
        problems.append("weight: negative edge weights present")
    row_sums = np.asarray(g.adj.sum(axis=1)).ravel()
    if g.degrees.shape != (g.n,) or not np.array_equal(g.degrees, row_sums):
        problems.append("degree: cached degrees disagree with adjacency row sums")
    if g.x.shape[0] != g.n:
        problems.append(f"shape: features have {g.x.shape[0]} rows, expected {g.n}")
    if g.y is not None and len(g.y) != g.n:
        problems.append(f"shape: labels have length {len(g.y)}, expected {g.n}")
    overlap = (g.train_mask & g.val_mask) | (g.train_mask & g.test_mask) | (g.val_mask & g.test_mask)
    if overlap.any():
        problems.append("mask: train/val/test masks are not pairwise disjoint")
    if g.m * 2 != g.adj.nnz:
        problems.append(f"edge-count: m={g.m} but adjacency stores {g.adj.nnz} entries")
    return problems


# ---------------------------------------------------------------------------
# single-graph I/O
# ---------------------------------------------------------------------------

def save_graph(g, path):
    """Write a graph as single-file JSON; exact inverse of load_graph."""
    y = None
    if g.y is not None:
        y = g.y.tolist()
    doc = {"n": g.n,
           "edges": [[int(u), int(v), float(w)]
                     for (u, v), w in zip(g.edges, g.edge_weights)],
           "x": g.x.tolist(),
           "y": y,
           "split": split_tags(g)}
    if g.id_map is not None:
        doc["id_map"] = list(g.id_map)
    Path(path).write_text(json.dumps(doc))


def load_graph(path, fmt="single-file-json", remap_ids=False):
    """Load a graph from disk.

    Supported formats:
      * ``single-file-json``: one JSON object with fields n/edges/x/y/split.
      * ``edge-list+feature-csv``: a directory containing ``edges.txt`` and
        ``features.csv``, plus optional ``labels.csv`` and ``splits.txt``.

    With ``remap_ids`` the edge-list loader accepts arbitrary integer ids,
    remaps them to dense 0-based ids (in ascending original order), and
    records the mapping on the returned graph.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt == "single-file-json":
        return _load_graph_json(path)
    if fmt == "edge-list+feature-csv":
        return _load_graph_edgelist(path, remap_ids=remap_ids)
    raise ValueError(f"unknown graph format {fmt!r}")


def _load_graph_json(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(str(exc.msg), line=exc.lineno) from exc
    for key in ("n", "edges", "x"):
        if key not in doc:
            raise GraphFormatError(f"missing field {key!r}")
    return Graph.build(int(doc["n"]), doc["edges"], doc["x"],
                       y=doc.get("y"), split=doc.get("split"),
                       id_map=doc.get("id_map"))


def _read_lines(path):
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _load_graph_edgelist(directory, remap_ids=False):
    directory = Path(directory)
    edges_path = directory / "edges.txt"
    feats_path = directory / "features.csv"
    for p in (edges_path, feats_path):
        if not p.exists():
            raise FileNotFoundError(p)

    triples = []
    for lineno, line in _read_lines(edges_path):
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"expected 'u v [w]', got {line!r}", line=lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise GraphFormatError(str(exc), line=lineno) from exc
        triples.append((u, v, w))

    feats = []
    width = None
    for lineno, line in _read_lines(feats_path):
        try:
            row = [float(t) for t in line.split(",")]
        except ValueError as exc:
            raise GraphFormatError(str(exc), line=lineno) from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(f"expected {width} columns, got {len(row)}", line=lineno)
        feats.append(row)
    if not feats:
        raise GraphFormatError("feature file is empty")
    n = len(feats)

    id_map = None
    if remap_ids:
        ids = sorted({u for u, v, _ in triples} | {v for u, v, _ in triples})
        if len(ids) != n:
            raise GraphValidationError(
                f"{len(ids)} distinct node ids but {n} feature rows")
        lookup = {orig: new for new, orig in enumerate(ids)}
        triples = [(lookup[u], lookup[v], w) for u, v, w in triples]
        id_map = ids

    y = None
    labels_path = directory / "labels.csv"
    if labels_path.exists():
        values = []
        integral = True
        for lineno, line in _read_lines(labels_path):
            try:
                val = float(line)
            except ValueError as exc:
                raise GraphFormatError(str(exc), line=lineno) from exc
            integral = integral and val == int(val)
            values.append(val)
        if len(values) != n:
            raise GraphValidationError(f"{len(values)} labels for {n} nodes")
        y = np.array(values, dtype=np.int64 if integral else np.float64)

    split = None
    splits_path = directory / "splits.txt"
    if splits_path.exists():
        split = []
        for lineno, line in _read_lines(splits_path):
            if line not in SPLIT_NAMES:
                raise GraphFormatError(f"unknown split tag {line!r}", line=lineno)
            split.append(line)
        if len(split) != n:
            raise GraphValidationError(f"{len(split)} split tags for {n} nodes")

    return Graph.build(n, triples, feats, y=y, split=split, id_map=id_map)


# ---------------------------------------------------------------------------
# graph datasets (graph-level tasks)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphDataset:
    """Ordered collection of graphs with per-graph targets and index splits."""

    graphs: tuple
    targets: np.ndarray        # (g,) int64 class ids or (g,)/(g, t) float64
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __len__(self):
        return len(self.graphs)

    @property
    def num_classes(self):
        if not np.issubdtype(self.targets.dtype, np.integer):
            raise ValueError("dataset has no class targets")
        return int(self.targets.max()) + 1

    def split_indices(self, name):
        try:
            return {"train": self.train_idx, "val": self.val_idx,
                    "test": self.test_idx}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    @classmethod
    def build(cls, graphs, targets, train_idx, val_idx, test_idx):
        targets = np.asarray(targets)
        if np.issubdtype(targets.dtype, np.integer):
            targets = targets.astype(np.int64)
        else:
            targets = targets.astype(np.float64)
        if len(targets) != len(graphs):
            raise GraphValidationError(
                f"{len(targets)} targets for {len(graphs)} graphs")
        idx = [np.asarray(a, dtype=np.int64) for a in (train_idx, val_idx, test_idx)]
        seen = np.concatenate(idx) if idx else np.empty(0, np.int64)
        if len(seen) != len(np.unique(seen)):
            raise GraphValidationError("split index sets overlap")
        if len(seen) and (seen.min() < 0 or seen.max() >= len(graphs)):
            raise GraphValidationError("split index out of range")
        return cls(graphs=tuple(graphs), targets=_frozen(targets),
                   train_idx=_frozen(idx[0]), val_idx=_frozen(idx[1]),
                   test_idx=_frozen(idx[2]))


def save_graph_dataset(ds, path):
    doc = {"graphs": [], "targets": ds.targets.tolist(),
           "splits": {"train": ds.train_idx.tolist(),
                      "val": ds.val_idx.tolist(),
                      "test": ds.test_idx.tolist()}}
    for g in ds.graphs:
        doc["graphs"].append({
            "n": g.n,
            "edges": [[int(u), int(v), float(w)]
                      for (u, v), w in zip(g.edges, g.edge_weights)],
            "x": g.x.tolist(),
            "y": g.y.tolist() if g.y is not None else None,
            "split": split_tags(g)})
    Path(path).write_text(json.dumps(doc))


def load_graph_dataset(path, fmt="single-file-json"):
    """Load a multi-graph dataset from single-file JSON."""
    if fmt != "single-file-json":
        raise ValueError(f"unknown dataset format {fmt!r}")
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(str(exc.msg), line=exc.lineno) from exc
    records = doc.get("graphs", [])
    if not records:
        raise GraphValidationError("empty dataset")
    graphs = [Graph.build(int(r["n"]), r["edges"], r["x"],
                          y=r.get("y"), split=r.get("split")) for r in records]
    splits = doc.get("splits", {})
    return GraphDataset.build(graphs, doc["targets"],
                              splits.get("train", []), splits.get("val", []),
                              splits.get("test", []))


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------

def _sample_pair_ids(rng, total, count):
    """Draw ``count`` distinct flat pair ids from [0, total), deterministically."""
    chosen = set()
    while len(chosen) < count:
        draw = rng.integers(0, total, size=count - len(chosen))
        chosen.update(draw.tolist())
    return np.sort(np.fromiter(chosen, dtype=np.int64, count=count))


def _block_edges(rng, lo_a, size_a, lo_b, size_b, p, same_block):
    if same_block:
        total = size_a * (size_a - 1) // 2
    else:
        total = size_a * size_b
    if total == 0 or p <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    if p >= 1.0:
        count = total
        flat = np.arange(total, dtype=np.int64)
    else:
        count = int(rng.binomial(total, p))
        flat = _sample_pair_ids(rng, total, count)
    if same_block:
        # pair t -> (i, j), i < j, in row-major upper-triangular order
        offsets = np.concatenate([[0], np.cumsum(size_a - 1 - np.arange(size_a))])
        i = np.searchsorted(offsets, flat, side="right") - 1
        j = flat - offsets[i] + i + 1
        return np.column_stack([lo_a + i, lo_a + j])
    i, j = flat // size_b, flat % size_b
    return np.column_stack([lo_a + i, lo_b + j])


def synth_sbm(block_sizes, p_in, p_out, d, seed, feature_scale=1.0,
              split_fracs=(0.3, 0.2, 0.5)):
    """Stochastic-block-model graph with block labels and Gaussian features.

    Node features are drawn around a block-specific mean (``feature_scale``
    in coordinate ``block % d``); the class label is the block id. A per-class
    train/val/test split is drawn according to ``split_fracs``. The result is
    a pure function of the arguments.
    """
    block_sizes = [int(s) for s in block_sizes]
    for s in block_sizes:
        check_positive_int(s, "block size")
    check_probability(p_in, "p_in")
    check_probability(p_out, "p_out")
    check_positive_int(d, "feature dimension")
    rng = np.random.default_rng(seed)
    n = sum(block_sizes)
    offsets = np.concatenate([[0], np.cumsum(block_sizes)])
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)

    chunks = []
    for a in range(len(block_sizes)):
        for b in range(a, len(block_sizes)):
            chunks.append(_block_edges(rng, offsets[a], block_sizes[a],
                                       offsets[b], block_sizes[b],
                                       p_in if a == b else p_out, a == b))
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), np.int64)

    means = np.zeros((len(block_sizes), d))
    for b in range(len(block_sizes)):
        means[b, b % d] = feature_scale
    x = means[labels] + rng.standard_normal((n, d))

    split = np.full(n, "none", dtype=object)
    for b in range(len(block_sizes)):
        members = rng.permutation(np.arange(offsets[b], offsets[b + 1]))
        n_tr = int(round(split_fracs[0] * len(members)))
        n_val = int(round(split_fracs[1] * len(members)))
        split[members[:n_tr]] = "train"
        split[members[n_tr:n_tr + n_val]] = "val"
        split[members[n_tr + n_val:]] = "test"

    triples = [(int(u), int(v), 1.0) for u, v in pairs]
    return Graph.build(n, triples, x, y=labels, split=split.tolist())


def synth_er(n, p, d, seed, **kwargs):
    """Erdos-Renyi graph: single-block SBM with edge probability p."""
    return synth_sbm([n], p, 0.0, d, seed, **kwargs)
