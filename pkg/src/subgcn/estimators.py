"""Scikit-learn style estimators wrapping the coarsening/GCN pipelines.

These follow the fit/transform/predict conventions (constructor stores
hyperparameters verbatim, fitted state lives in trailing-underscore
attributes) so they compose with ``sklearn.base.clone``, ``get_params``,
and pipeline tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import gnn, pipelines
from .graph import Graph, GraphDataset


def _check_graph(g):
    if not isinstance(g, Graph):
        raise TypeError(f"expected a Graph, got {type(g).__name__}")
    return g


def _check_dataset(ds):
    if not isinstance(ds, GraphDataset):
        raise TypeError(f"expected a GraphDataset, got {type(ds).__name__}")
    return ds


class GraphCoarsener(BaseEstimator):
    """Partition a graph and expose its coarse graph and subgraph set.

    ``fit`` computes the partition; ``transform`` returns the (augmented)
    subgraph set. The coarse graph and partition are available as fitted
    attributes.
    """

    def __init__(self, ratio=0.5, method="heavy_edge", augmentation="none",
                 task="none", seed=0):
        self.ratio = ratio
        self.method = method
        self.augmentation = augmentation
        self.task = task
        self.seed = seed

    def fit(self, graph, y=None):
        _check_graph(graph)
        # "classification" additionally builds majority-vote coarse labels
        task = "node_class" if self.task == "classification" else "node_reg"
        part, gc, s = pipelines.build_structures(
            graph, self.ratio, self.method, self.augmentation, task, self.seed)
        self.partition_ = part
        self.coarsened_ = gc
        self.subgraphs_ = s
        return self

    def transform(self, graph=None):
        check_is_fitted(self, "subgraphs_")
        return self.subgraphs_

    def fit_transform(self, graph, y=None):
        return self.fit(graph).transform(graph)


class _NodeEstimator(BaseEstimator):
    """Shared fit/predict machinery for transductive node-level models."""

    _task = None

    def __init__(self, ratio=0.3, method="heavy_edge", augmentation="cluster",
                 setup="gs_train_gs_infer", epochs=300, layers=2, hidden=64,
                 lr=None, weight_decay=0.0005, seed=0, local_degree=False):
        self.ratio = ratio
        self.method = method
        self.augmentation = augmentation
        self.setup = setup
        self.epochs = epochs
        self.layers = layers
        self.hidden = hidden
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.local_degree = local_degree

    def _spec(self):
        return pipelines.ExperimentSpec(
            task=self._task, setup=self.setup, ratio=self.ratio,
            augmentation=self.augmentation, method=self.method,
            epochs=self.epochs, layers=self.layers, hidden=self.hidden,
            lr=self.lr, weight_decay=self.weight_decay, seed=self.seed,
            local_degree=self.local_degree)

    def fit(self, graph, y=None):
        g = _check_graph(graph)
        spec = self._spec()
        part, gc, s = pipelines.build_structures(
            g, spec.ratio, spec.method, spec.augmentation, spec.task, spec.seed)
        cfg = spec.train_config()
        self.graph_ = g
        self.spec_ = spec
        self.subgraphs_ = s
        self.params_ = pipelines._train_node_with_structures(g, gc, s, spec, cfg)
        return self

    def _outputs(self):
        check_is_fitted(self, "params_")
        return pipelines.infer_subgraphs(self.subgraphs_, self.params_,
                                         self.local_degree)

    def predict_single(self, node):
        check_is_fitted(self, "params_")
        return pipelines.infer_single_node(self.subgraphs_, self.params_,
                                           node, self.local_degree)


class NodeClassifierGCN(_NodeEstimator):
    """Transductive node classifier trained on coarsened subgraphs."""

    _task = "node_class"

    def decision_function(self, nodes=None):
        z = self._outputs()
        return z if nodes is None else z[np.asarray(nodes)]

    def predict_proba(self, nodes=None):
        z = self.decision_function(nodes)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, nodes=None):
        return self.decision_function(nodes).argmax(axis=1)

    def score(self, split="test"):
        """Accuracy on one of the graph's stored splits."""
        z = self._outputs()
        return gnn.accuracy(z, self.graph_.y, self.graph_.split_mask(split))


class NodeRegressorGCN(_NodeEstimator):
    """Transductive node regressor; admits subgraph training/inference only."""

    _task = "node_reg"

    def predict(self, nodes=None):
        z = self._outputs()
        if nodes is not None:
            z = z[np.asarray(nodes)]
        return z[:, 0] if z.shape[1] == 1 else z

    def score(self, split="test"):
        """Negative normalized MAE (higher is better, scikit-learn style)."""
        z = self._outputs()
        sigma = gnn.target_sigma(self.graph_.y, self.graph_.train_mask)
        return -gnn.normalized_mae(z, self.graph_.y,
                                   self.graph_.split_mask(split), sigma)


class _GraphEstimator(BaseEstimator):
    _task = None

    def __init__(self, ratio=0.3, method="heavy_edge", augmentation="extra",
                 setup="gs_train_gs_infer", epochs=300, layers=2, hidden=64,
                 lr=None, weight_decay=0.0005, seed=0):
        self.ratio = ratio
        self.method = method
        self.augmentation = augmentation
        self.setup = setup
        self.epochs = epochs
        self.layers = layers
        self.hidden = hidden
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def _spec(self):
        return pipelines.ExperimentSpec(
            task=self._task, setup=self.setup, ratio=self.ratio,
            augmentation=self.augmentation, method=self.method,
            epochs=self.epochs, layers=self.layers, hidden=self.hidden,
            lr=self.lr, weight_decay=self.weight_decay, seed=self.seed)

    def fit(self, dataset, y=None):
        ds = _check_dataset(dataset)
        spec = self._spec()
        self.dataset_ = ds
        self.spec_ = spec
        self.structures_ = pipelines.dataset_structures(ds, spec)
        self.params_ = pipelines.train_graph_task(ds, spec,
                                                  structures=self.structures_)
        return self

    def _outputs(self, indices=None):
        check_is_fitted(self, "params_")
        return pipelines.infer_graph_task(self.dataset_, self.spec_,
                                          self.params_, indices,
                                          self.structures_)


class GraphClassifierGCN(_GraphEstimator):
    """Graph-level classifier over per-graph coarsened structures."""

    _task = "graph_class"

    def predict(self, indices=None):
        return self._outputs(indices).argmax(axis=1)

    def score(self, split="test"):
        idx = self.dataset_.split_indices(split)
        z = self._outputs(idx)
        return gnn.accuracy(z, self.dataset_.targets[idx],
                            np.ones(len(idx), dtype=bool))


class GraphRegressorGCN(_GraphEstimator):
    """Graph-level regressor over per-graph coarsened structures."""

    _task = "graph_reg"

    def predict(self, indices=None):
        z = self._outputs(indices)
        return z[:, 0] if z.shape[1] == 1 else z

    def score(self, split="test"):
        """Negative normalized MAE on a dataset split."""
        idx = self.dataset_.split_indices(split)
        z = self._outputs(idx)
        train_mask = np.isin(np.arange(len(self.dataset_)), self.dataset_.train_idx)
        sigma = gnn.target_sigma(self.dataset_.targets, train_mask)
        return -gnn.normalized_mae(z, self.dataset_.targets[idx],
                                   np.ones(len(idx), dtype=bool), sigma)
