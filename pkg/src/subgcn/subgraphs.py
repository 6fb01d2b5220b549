"""Per-cluster subgraphs with boundary augmentation and training masks.

Each cluster of a partition induces one subgraph. Two augmentation modes
recover information lost at cluster boundaries: appending the 1-hop outside
neighbors themselves, or appending one representative node per neighboring
cluster. Appended nodes never contribute to any loss; masks mark genuine
cluster members that are also training nodes.

Every node carries the weighted degree it has in the ORIGINAL graph
(cluster representatives carry the aggregate degree of their cluster), so
that symmetric normalization in downstream propagation matches the full
graph exactly at genuine members.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .coarsen import PartitionMatrix
from .graph import _frozen

AUGMENTATIONS = ("none", "extra", "cluster")

CORE, EXTRA, CLUSTER = "core", "extra", "cluster"


@dataclass(frozen=True)
class Subgraph:
    """One induced (optionally augmented) subgraph in local index space.

    ``global_ids`` maps local index to the original node id; for appended
    cluster representatives it holds the coarse cluster id instead (the
    ``provenance`` tag disambiguates).
    """

    cluster_of: int
    global_ids: np.ndarray
    adj: sp.csr_matrix
    x: np.ndarray
    y: np.ndarray | None
    provenance: np.ndarray     # "core" | "extra" | "cluster" per local node
    orig_degree: np.ndarray
    mask: np.ndarray           # core and train
    val_mask: np.ndarray       # core and val
    test_mask: np.ndarray      # core and test

    @property
    def n_local(self):
        return len(self.global_ids)

    @property
    def core_mask(self):
        return self.provenance == CORE

    @property
    def core_ids(self):
        return self.global_ids[self.core_mask]


@dataclass(frozen=True)
class SubgraphSet:
    """All cluster subgraphs of one partition; every node is core exactly once."""

    subgraphs: tuple
    owner: np.ndarray          # global node id -> owning subgraph index
    augmentation: str

    def __len__(self):
        return len(self.subgraphs)

    def __iter__(self):
        return iter(self.subgraphs)


def _local_adj(n_local, triples):
    if triples:
        arr = np.array(triples, dtype=np.float64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]]).astype(np.int64)
        cols = np.concatenate([arr[:, 1], arr[:, 0]]).astype(np.int64)
        data = np.concatenate([arr[:, 2], arr[:, 2]])
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        data = np.empty(0, dtype=np.float64)
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n_local, n_local))
    adj.sort_indices()
    return adj


def _intra_triples_by_cluster(g, part):
    cu = part.assign[g.edges[:, 0]]
    keep = cu == part.assign[g.edges[:, 1]]
    per_cluster = [[] for _ in range(part.k)]
    for (u, v), w, c in zip(g.edges[keep], g.edge_weights[keep], cu[keep]):
        per_cluster[c].append((int(u), int(v), float(w)))
    return per_cluster


def induce_subgraphs(g, part):
    """Split g into its cluster-induced subgraphs (no augmentation)."""
    if part.n != g.n:
        raise ValueError(f"partition covers {part.n} nodes, graph has {g.n}")
    local = np.empty(g.n, dtype=np.int64)
    for members in part.members:
        local[members] = np.arange(len(members))
    intra = _intra_triples_by_cluster(g, part)
    subs = []
    for j, members in enumerate(part.members):
        triples = [(local[u], local[v], w) for u, v, w in intra[j]]
        prov = np.full(len(members), CORE, dtype="<U7")
        subs.append(Subgraph(
            cluster_of=j,
            global_ids=_frozen(members),
            adj=_local_adj(len(members), triples),
            x=g.x[members],
            y=g.y[members] if g.y is not None else None,
            provenance=_frozen(prov),
            orig_degree=g.degrees[members],
            mask=g.train_mask[members],
            val_mask=g.val_mask[members],
            test_mask=g.test_mask[members]))
    return SubgraphSet(subgraphs=tuple(subs), owner=part.assign.copy(),
                       augmentation="none")


def _require_unaugmented(s):
    if s.augmentation != "none":
        raise ValueError(f"subgraph set is already augmented ({s.augmentation})")


def _boundary_neighbor_ids(g, part):
    """Per cluster, the sorted 1-hop neighbors living outside the cluster."""
    outside = [set() for _ in range(part.k)]
    cu = part.assign[g.edges[:, 0]]
    cv = part.assign[g.edges[:, 1]]
    for (u, v), a, b in zip(g.edges, cu, cv):
        if a != b:
            outside[a].add(int(v))
            outside[b].add(int(u))
    return [np.array(sorted(ids), dtype=np.int64) for ids in outside]


def augment_extra_nodes(g, s):
    """Append each subgraph's 1-hop outside neighbors.

    Appended nodes keep their original features, labels, and degrees; edges
    cover every original edge between the subgraph and its appended nodes
    and among appended nodes of the same subgraph. Masks stay core-only.
    """
    _require_unaugmented(s)
    part = PartitionMatrix.build(s.owner)
    extras = _boundary_neighbor_ids(g, part)
    indptr, indices, data = g.adj.indptr, g.adj.indices, g.adj.data
    subs = []
    for sub, added in zip(s.subgraphs, extras):
        cores = sub.global_ids
        ids = np.concatenate([cores, added])
        pos = {int(v): i for i, v in enumerate(ids)}
        coo = sub.adj.tocoo()
        triples = [(int(u), int(v), float(w))
                   for u, v, w in zip(coo.row, coo.col, coo.data) if u < v]
        added_set = {int(a) for a in added}
        for e in added:
            e = int(e)
            for u, w in zip(indices[indptr[e]:indptr[e + 1]],
                            data[indptr[e]:indptr[e + 1]]):
                u = int(u)
                if u in added_set:
                    if e < u:  # edge among appended nodes, counted once
                        triples.append((pos[e], pos[u], float(w)))
                elif u in pos:  # edge back to a core of this subgraph
                    triples.append((pos[u], pos[e], float(w)))
        prov = np.concatenate([sub.provenance,
                               np.full(len(added), EXTRA, dtype="<U7")])
        y = None
        if g.y is not None:
            y = np.concatenate([sub.y, g.y[added]])
        false_tail = np.zeros(len(added), dtype=bool)
        subs.append(replace(
            sub,
            global_ids=_frozen(ids),
            adj=_local_adj(len(ids), triples),
            x=np.concatenate([sub.x, g.x[added]]),
            y=y,
            provenance=_frozen(prov),
            orig_degree=np.concatenate([sub.orig_degree, g.degrees[added]]),
            mask=np.concatenate([sub.mask, false_tail]),
            val_mask=np.concatenate([sub.val_mask, false_tail]),
            test_mask=np.concatenate([sub.test_mask, false_tail])))
    return SubgraphSet(subgraphs=tuple(subs), owner=s.owner, augmentation="extra")


def augment_cluster_nodes(g, part, s, gc):
    """Append one representative node per neighboring cluster.

    Representative t carries the coarse features x_c[t] and aggregate degree
    d_c[t]. It connects to every boundary core with the summed weight of
    that core's edges into cluster t; representatives of clusters adjacent
    in the coarse graph are connected with the coarse edge weight.
    """
    _require_unaugmented(s)
    if gc.k != part.k:
        raise ValueError("coarsened graph and partition disagree on cluster count")
    extras = _boundary_neighbor_ids(g, part)
    indptr, indices, data = g.adj.indptr, g.adj.indices, g.adj.data
    subs = []
    for sub, boundary in zip(s.subgraphs, extras):
        j = sub.cluster_of
        neighbor_clusters = np.unique(part.assign[boundary]) if len(boundary) else \
            np.empty(0, dtype=np.int64)
        cores = sub.global_ids
        n_core = len(cores)
        cluster_pos = {int(t): n_core + i for i, t in enumerate(neighbor_clusters)}
        coo = sub.adj.tocoo()
        triples = [(int(u), int(v), float(w))
                   for u, v, w in zip(coo.row, coo.col, coo.data) if u < v]
        # boundary edges: core -> representative, aggregated cross weight
        for li, v in enumerate(cores):
            acc = {}
            for u, w in zip(indices[indptr[v]:indptr[v + 1]],
                            data[indptr[v]:indptr[v + 1]]):
                t = int(part.assign[u])
                if t != j:
                    acc[t] = acc.get(t, 0.0) + float(w)
            for t in sorted(acc):
                triples.append((li, cluster_pos[t], acc[t]))
        # cross-cluster edges among representatives, following coarse adjacency
        if len(neighbor_clusters) > 1:
            block = gc.a_c[neighbor_clusters][:, neighbor_clusters].toarray()
            for a in range(len(neighbor_clusters)):
                for b in range(a + 1, len(neighbor_clusters)):
                    if block[a, b] != 0:
                        triples.append((n_core + a, n_core + b, float(block[a, b])))
        prov = np.concatenate([sub.provenance,
                               np.full(len(neighbor_clusters), CLUSTER, dtype="<U7")])
        ids = np.concatenate([cores, neighbor_clusters])
        y = None
        if g.y is not None:
            if np.issubdtype(g.y.dtype, np.integer):
                fill = gc.y_c[neighbor_clusters] if gc.y_c is not None else \
                    np.full(len(neighbor_clusters), -1, dtype=np.int64)
            else:
                fill = np.zeros((len(neighbor_clusters),) + g.y.shape[1:],
                                dtype=np.float64)
            y = np.concatenate([sub.y, fill])
        false_tail = np.zeros(len(neighbor_clusters), dtype=bool)
        subs.append(replace(
            sub,
            global_ids=_frozen(ids),
            adj=_local_adj(len(ids), triples),
            x=np.concatenate([sub.x, gc.x_c[neighbor_clusters]]),
            y=y,
            provenance=_frozen(prov),
            orig_degree=np.concatenate([sub.orig_degree, gc.d_c[neighbor_clusters]]),
            mask=np.concatenate([sub.mask, false_tail]),
            val_mask=np.concatenate([sub.val_mask, false_tail]),
            test_mask=np.concatenate([sub.test_mask, false_tail])))
    return SubgraphSet(subgraphs=tuple(subs), owner=s.owner, augmentation="cluster")


def build_masks(s, g):
    """Recompute train/val/test masks: core membership AND the global split."""
    subs = []
    for sub in s.subgraphs:
        core = sub.core_mask
        masks = {}
        for name, split in (("mask", g.train_mask), ("val_mask", g.val_mask),
                            ("test_mask", g.test_mask)):
            m = np.zeros(sub.n_local, dtype=bool)
            m[core] = split[sub.global_ids[core]]
            masks[name] = m
        subs.append(replace(sub, **masks))
    return SubgraphSet(subgraphs=tuple(subs), owner=s.owner,
                       augmentation=s.augmentation)


def locate_subgraph(s, node):
    """Index of the subgraph where ``node`` is a genuine member; O(1)."""
    if not 0 <= node < len(s.owner):
        raise KeyError(f"unknown node id {node}")
    return int(s.owner[node])


# ---------------------------------------------------------------------------
# information-loss diagnostics
# ---------------------------------------------------------------------------

def info_loss_l1(g, part, i):
    """Nodes whose information cannot reach cluster i in one propagation step."""
    members = part.members[i]
    inside = np.zeros(g.n, dtype=bool)
    inside[members] = True
    lost = set()
    for v in members:
        nbrs = g.neighbors(v)
        if not inside[nbrs].all():
            lost.update(int(u) for u in nbrs if not inside[u])
    return len(lost)


def info_loss_l2(g, part, i, augmented=False):
    """Two-step variant; with boundary augmentation the appended 1-hop
    neighbors no longer count as lost."""
    members = part.members[i]
    inside = np.zeros(g.n, dtype=bool)
    inside[members] = True
    reach = set()
    for v in members:
        nbrs = g.neighbors(v)
        if inside[nbrs].all():
            continue
        within_two = set(int(u) for u in nbrs)
        for u in nbrs:
            within_two.update(int(w) for w in g.neighbors(u))
        within_two.discard(int(v))
        reach.update(within_two)
    lost = {u for u in reach if not inside[u]}
    if augmented:
        one_hop = set()
        for v in members:
            one_hop.update(int(u) for u in g.neighbors(v) if not inside[u])
        lost -= one_hop
    return len(lost)


# ---------------------------------------------------------------------------
# inspection dump
# ---------------------------------------------------------------------------

def save_subgraph_dump(s, path):
    """Write the per-subgraph JSON dump used for inspection and tests."""
    doc = {"augmentation": s.augmentation, "subgraphs": []}
    for sub in s.subgraphs:
        coo = sub.adj.tocoo()
        edges = [[int(u), int(v), float(w)]
                 for u, v, w in zip(coo.row, coo.col, coo.data) if u < v]
        doc["subgraphs"].append({
            "cluster": sub.cluster_of,
            "global_ids": [int(v) for v in sub.global_ids],
            "provenance": [str(p) for p in sub.provenance],
            "edges": edges,
            "mask": [bool(b) for b in sub.mask]})
    Path(path).write_text(json.dumps(doc))
