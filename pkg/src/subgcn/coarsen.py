"""Graph partitioning and coarse-graph construction.

A partition of the n nodes into k clusters realizes the binary assignment
matrix P (n x k); the coarse graph carries A_c = P^T A P, D_c = P^T D P,
features from the column-normalized partition, and majority-vote labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import _frozen
from .validation import check_in, check_ratio

PARTITION_METHODS = ("heavy_edge", "neighborhood_growth")


@dataclass(frozen=True)
class PartitionMatrix:
    """Node-to-cluster assignment; rows of the implied P sum to one."""

    assign: np.ndarray         # (n,) int64, values in [0, k)
    k: int
    cluster_sizes: np.ndarray  # (k,) int64, all positive

    @property
    def n(self):
        return len(self.assign)

    @classmethod
    def build(cls, assign, k=None):
        assign = np.asarray(assign, dtype=np.int64)
        if k is None:
            k = int(assign.max()) + 1 if len(assign) else 0
        if len(assign) == 0 or assign.min() < 0 or assign.max() >= k:
            raise ValueError("cluster ids must cover [0, k) for a nonempty node set")
        sizes = np.bincount(assign, minlength=k)
        if (sizes == 0).any():
            raise ValueError(f"empty clusters: {np.flatnonzero(sizes == 0).tolist()}")
        return cls(assign=_frozen(assign), k=int(k), cluster_sizes=_frozen(sizes))

    @classmethod
    def identity(cls, n):
        return cls.build(np.arange(n, dtype=np.int64), k=n)

    @cached_property
    def members(self):
        """Tuple of per-cluster node-id arrays (ascending)."""
        order = np.argsort(self.assign, kind="stable")
        return tuple(np.split(order, np.cumsum(self.cluster_sizes)[:-1]))

    def to_sparse(self):
        """P as CSR, one unit entry per node row."""
        n = self.n
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.assign)),
                             shape=(n, self.k))

    def normalized(self):
        """Column-normalized partition P C^{-1/2}; its Gram matrix is I_k."""
        n = self.n
        data = 1.0 / np.sqrt(self.cluster_sizes[self.assign].astype(np.float64))
        return sp.csr_matrix((data, (np.arange(n), self.assign)), shape=(n, self.k))


@dataclass(frozen=True)
class CoarsenedGraph:
    """Reduced graph on k cluster nodes.

    ``a_c`` keeps intra-cluster weight on its diagonal (the algebraic
    P^T A P result); ``d_c`` aggregates original node degrees, which equals
    the row sums of ``a_c``. ``y_c`` is -1 where a cluster received no
    training votes; ``label_mask`` marks clusters that did.
    """

    k: int
    a_c: sp.csr_matrix
    d_c: np.ndarray
    x_c: np.ndarray
    y_c: np.ndarray | None = None
    label_mask: np.ndarray | None = None


def ratio_to_clusters(n, r):
    """k = round(n * r) with round-half-away-from-zero, clamped to [1, n]."""
    check_ratio(r)
    return min(n, max(1, int(math.floor(n * r + 0.5))))


def coarsen_partition(g, r, method="heavy_edge", seed=0):
    """Partition g into k = round(n * r) connected clusters.

    ``heavy_edge`` repeatedly contracts a maximal heaviest-edge matching
    (ties to the smallest node ids) until k clusters remain;
    ``neighborhood_growth`` grows balanced BFS regions from high-degree
    seeds. Both are deterministic; the seed is recorded in partition files
    for provenance. Raises if g has more connected components than k.
    """
    check_in(method, PARTITION_METHODS, "method")
    k = ratio_to_clusters(g.n, r)
    if k == g.n:
        return PartitionMatrix.identity(g.n)
    n_comp, comp = connected_components(g.adj, directed=False)
    if k < n_comp:
        raise ValueError(
            f"cannot form {k} connected clusters: graph has {n_comp} components")
    if method == "heavy_edge":
        groups = _heavy_edge_groups(g, k)
    else:
        groups = _region_growth_groups(g, k, comp, n_comp)
    if len(groups) > k:
        groups = _merge_smallest_adjacent(g, groups, k)
    return _groups_to_partition(g.n, groups)


def _groups_to_partition(n, groups):
    groups = sorted(groups, key=min)
    assign = np.empty(n, dtype=np.int64)
    for j, members in enumerate(groups):
        assign[list(members)] = j
    return PartitionMatrix.build(assign, k=len(groups))


def _heavy_edge_groups(g, k):
    rep = list(range(g.n))      # supernode representative (min original id)
    group = {i: [i] for i in range(g.n)}
    weights = {(int(u), int(v)): float(w)
               for (u, v), w in zip(g.edges, g.edge_weights)}
    count = g.n
    while count > k and weights:
        order = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
        merges = []
        matched = set()
        for (u, v), _ in order:
            if count - len(merges) <= k:
                break
            if u in matched or v in matched:
                continue
            matched.update((u, v))
            merges.append((u, v))
        for u, v in merges:     # u < v by canonical pair order
            group[u].extend(group.pop(v))
            for node in group[u]:
                rep[node] = u
        count -= len(merges)
        contracted = {}
        for (u, v), w in weights.items():
            a, b = rep[u], rep[v]
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            contracted[key] = contracted.get(key, 0.0) + w
        weights = contracted
    return list(group.values())


def _component_budgets(comp_sizes, k):
    """Split k clusters over components, at least 1 and at most size each."""
    n = sum(comp_sizes)
    quota = [k * s / n for s in comp_sizes]
    budget = [min(max(1, int(q)), s) for q, s in zip(quota, comp_sizes)]
    while sum(budget) < k:
        cands = [i for i in range(len(budget)) if budget[i] < comp_sizes[i]]
        i = max(cands, key=lambda i: (quota[i] - budget[i], -i))
        budget[i] += 1
    while sum(budget) > k:
        cands = [i for i in range(len(budget)) if budget[i] > 1]
        i = min(cands, key=lambda i: (quota[i] - budget[i], i))
        budget[i] -= 1
    return budget


def _region_growth_groups(g, k, comp, n_comp):
    indptr, indices = g.adj.indptr, g.adj.indices
    comp_nodes = [np.flatnonzero(comp == c) for c in range(n_comp)]
    budgets = _component_budgets([len(c) for c in comp_nodes], k)
    assigned = np.full(g.n, -1, dtype=np.int64)
    groups = []
    for c, nodes in enumerate(comp_nodes):
        order = nodes[np.lexsort((nodes, -g.degrees[nodes]))]
        unassigned = len(nodes)
        for j in range(budgets[c]):
            cap = -(-unassigned // (budgets[c] - j))  # ceil
            seed_node = next(int(v) for v in order if assigned[v] < 0)
            cluster = [seed_node]
            assigned[seed_node] = len(groups)
            queue = [seed_node]
            while queue and len(cluster) < cap:
                v = queue.pop(0)
                for u in indices[indptr[v]:indptr[v + 1]]:
                    if assigned[u] < 0 and len(cluster) < cap:
                        assigned[u] = len(groups)
                        cluster.append(int(u))
                        queue.append(int(u))
            unassigned -= len(cluster)
            groups.append(cluster)
        # attach leftover nodes to the smallest adjacent cluster
        while unassigned:
            progressed = False
            for v in nodes:
                if assigned[v] >= 0:
                    continue
                nbr_clusters = {int(assigned[u]) for u in indices[indptr[v]:indptr[v + 1]]
                                if assigned[u] >= 0}
                if not nbr_clusters:
                    continue
                target = min(nbr_clusters, key=lambda j: (len(groups[j]), j))
                assigned[v] = target
                groups[target].append(int(v))
                unassigned -= 1
                progressed = True
            if not progressed:
                raise AssertionError("leftover node unreachable within its component")
    return groups


def _merge_smallest_adjacent(g, groups, k):
    """Merge the two smallest adjacent clusters until only k remain."""
    groups = [list(c) for c in groups]
    while len(groups) > k:
        owner = {}
        for j, members in enumerate(groups):
            for v in members:
                owner[v] = j
        adjacent = set()
        for (u, v) in g.edges:
            a, b = owner[int(u)], owner[int(v)]
            if a != b:
                adjacent.add((min(a, b), max(a, b)))
        if not adjacent:
            raise ValueError("no adjacent clusters left to merge")
        a, b = min(adjacent, key=lambda ab: (len(groups[ab[0]]) + len(groups[ab[1]]),
                                             ab[0], ab[1]))
        groups[a].extend(groups[b])
        del groups[b]
    return groups


def coarse_degree(g, part):
    """D_c = P^T D P: per-cluster sum of original weighted degrees."""
    return np.bincount(part.assign, weights=g.degrees, minlength=part.k)


def build_coarsened_graph(g, part, task="classification"):
    """Assemble the coarse graph for a partition.

    ``task`` selects label handling: majority vote over training nodes for
    classification (ties to the smallest class id, clusters without any
    training vote are marked unlabeled), no labels otherwise.
    """
    check_in(task, ("classification", "regression", "none"), "task")
    if part.n != g.n:
        raise ValueError(f"partition covers {part.n} nodes, graph has {g.n}")
    p = part.to_sparse()
    a_c = (p.T @ g.adj @ p).tocsr()
    a_c.sort_indices()
    d_c = coarse_degree(g, part)
    x_c = np.asarray(part.normalized().T @ g.x)

    y_c = label_mask = None
    if task == "classification":
        if g.y is None or not np.issubdtype(g.y.dtype, np.integer):
            raise ValueError("classification coarsening requires class labels")
        votes = np.zeros((part.k, g.num_classes), dtype=np.int64)
        voters = np.flatnonzero(g.train_mask)
        np.add.at(votes, (part.assign[voters], g.y[voters]), 1)
        label_mask = votes.sum(axis=1) > 0
        y_c = np.where(label_mask, votes.argmax(axis=1), -1)

    return CoarsenedGraph(k=part.k, a_c=a_c, d_c=_frozen(d_c), x_c=_frozen(x_c),
                          y_c=_frozen(y_c) if y_c is not None else None,
                          label_mask=_frozen(label_mask) if label_mask is not None else None)


# ---------------------------------------------------------------------------
# partition files
# ---------------------------------------------------------------------------

def save_partition(part, path, method="heavy_edge", seed=0):
    """Write 'k n method seed' header plus one cluster id per node line."""
    lines = [f"{part.k} {part.n} {method} {seed}"]
    lines.extend(str(int(c)) for c in part.assign)
    Path(path).write_text("\n".join(lines) + "\n")


def load_partition(path):
    """Read a partition file; returns (PartitionMatrix, method, seed)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty partition file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    k, n, method, seed = int(head[0]), int(head[1]), head[2], int(head[3])
    assign = np.array([int(t) for t in lines[1:n + 1]], dtype=np.int64)
    if len(assign) != n:
        raise ValueError(f"{path}: expected {n} assignments, found {len(assign)}")
    part = PartitionMatrix.build(assign, k=k)
    return part, method, seed


def save_coarse(gc, path):
    """Write a coarse graph as JSON (upper-triangular entries incl. diagonal)."""
    import json
    coo = gc.a_c.tocoo()
    entries = [[int(i), int(j), float(w)]
               for i, j, w in zip(coo.row, coo.col, coo.data) if i <= j]
    doc = {"k": gc.k, "a": entries, "d_c": gc.d_c.tolist(),
           "x_c": gc.x_c.tolist(),
           "y_c": gc.y_c.tolist() if gc.y_c is not None else None,
           "label_mask": gc.label_mask.tolist() if gc.label_mask is not None else None}
    Path(path).write_text(json.dumps(doc))


def load_coarse(path):
    import json
    doc = json.loads(Path(path).read_text())
    k = int(doc["k"])
    rows, cols, data = [], [], []
    for i, j, w in doc["a"]:
        rows.append(i), cols.append(j), data.append(w)
        if i != j:
            rows.append(j), cols.append(i), data.append(w)
    a_c = sp.csr_matrix((data, (rows, cols)), shape=(k, k))
    a_c.sort_indices()
    y_c = doc.get("y_c")
    mask = doc.get("label_mask")
    return CoarsenedGraph(
        k=k, a_c=a_c, d_c=_frozen(np.array(doc["d_c"], dtype=np.float64)),
        x_c=_frozen(np.array(doc["x_c"], dtype=np.float64)),
        y_c=_frozen(np.array(y_c, dtype=np.int64)) if y_c is not None else None,
        label_mask=_frozen(np.array(mask, dtype=bool)) if mask is not None else None)
