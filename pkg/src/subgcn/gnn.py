"""Dense/sparse GCN engine: propagation, exact gradients, Adam, metrics.

The propagation operator is the symmetrically normalized adjacency with an
analytic self-loop. Degrees are supplied by the caller rather than recomputed
from the local adjacency: subgraphs pass the degrees their nodes have in the
original graph, which makes one-layer subgraph predictions at genuine members
reproduce the full-graph forward exactly.

All arithmetic is float64 numpy; training is deterministic for a fixed seed
on a single thread. Gradients are closed-form reverse mode for the three
model heads (per-node outputs, max-pooled graph outputs on one graph, and
max-pooled graph outputs over a stacked subgraph set).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_CKPT_MAGIC = b"SUBGCN-CKPT\n"


# ---------------------------------------------------------------------------
# propagation operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagationOperator:
    """Normalized propagation matrix (A + I) rescaled by 1/sqrt(deg + 1)."""

    matrix: sp.csr_matrix

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def nnz(self):
        return self.matrix.nnz


def make_operator(adjacency, degree_vector):
    """Build the propagation operator from an adjacency and degree vector.

    Entry (u, v) becomes w(u,v) / sqrt((d_u + 1)(d_v + 1)); the diagonal
    receives an extra analytic self-loop of weight one. The adjacency may
    carry self-weight on its diagonal (coarse graphs do).
    """
    deg = np.asarray(degree_vector, dtype=np.float64)
    if deg.ndim != 1 or adjacency.shape != (len(deg), len(deg)):
        raise ValueError(
            f"degree vector of length {len(deg)} does not match adjacency {adjacency.shape}")
    if (deg < 0).any():
        raise ValueError("degrees must be nonnegative")
    n = len(deg)
    scale = sp.diags(1.0 / np.sqrt(deg + 1.0))
    a_tilde = (adjacency + sp.identity(n, format="csr")).tocsr()
    mat = (scale @ a_tilde @ scale).tocsr()
    mat.sort_indices()
    return PropagationOperator(matrix=mat)


# ---------------------------------------------------------------------------
# parameters and configuration
# ---------------------------------------------------------------------------

@dataclass
class GcnParams:
    """Stacked layer weights followed by one linear head weight."""

    weights: list
    seed: int = 0

    @property
    def num_layers(self):
        return len(self.weights) - 1

    @property
    def layer_weights(self):
        return self.weights[:-1]

    @property
    def head_weight(self):
        return self.weights[-1]

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self):
        return GcnParams(weights=[w.copy() for w in self.weights], seed=self.seed)


def model_dims(in_dim, hidden, out_dim, layers):
    """Shape chain [in, hidden, ..., hidden, out] for ``layers`` propagations."""
    if layers < 1:
        raise ValueError("at least one propagation layer is required")
    return [in_dim] + [hidden] * layers + [out_dim]


def init_params(dims, seed):
    """Seeded fan-based uniform initialization over the shape chain."""
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return GcnParams(weights=weights, seed=seed)


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the node-task recipe."""

    epochs: int = 300
    layers: int = 2
    hidden: int = 512
    lr: float = 0.01
    weight_decay: float = 0.0005
    loss: str = "cross_entropy"
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if min(self.epochs, self.layers, self.hidden) < 1 or self.lr <= 0:
            raise ValueError("epochs, layers, hidden, and lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        if self.loss not in ("cross_entropy", "mae"):
            raise ValueError(f"unsupported loss {self.loss!r}")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")


def default_train_config(task, **overrides):
    """Per-task defaults: lr 0.01 and CE for node tasks, lr 1e-4 for graph
    tasks, MAE for regression."""
    cfg = {"lr": 0.01 if task.startswith("node") else 0.0001,
           "loss": "mae" if task.endswith("reg") else "cross_entropy"}
    cfg.update(overrides)
    return TrainConfig(**cfg)


# ---------------------------------------------------------------------------
# forwards
# ---------------------------------------------------------------------------

def _check_shapes(op, x, params):
    if x.shape[0] != op.n:
        raise ValueError(f"{x.shape[0]} feature rows for operator of size {op.n}")
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match first weight {params.weights[0].shape}")


def _forward_stack(op, x, layer_weights):
    """Propagation layers with ReLU; returns final hidden and caches."""
    h = x
    caches = []
    for w in layer_weights:
        p = op.matrix @ h
        s = p @ w
        caches.append((p, s))
        h = np.maximum(s, 0.0)
    return h, caches


def _backward_stack(op, d_h, caches, layer_weights):
    grads = [None] * len(layer_weights)
    for l in reversed(range(len(layer_weights))):
        p, s = caches[l]
        d_s = d_h * (s > 0)
        grads[l] = p.T @ d_s
        d_h = op.matrix @ (d_s @ layer_weights[l].T)
    return grads


def node_model_forward(op, x, params):
    """Per-node outputs: stacked propagation layers plus a linear head."""
    _check_shapes(op, x, params)
    h, _ = _forward_stack(op, x, params.layer_weights)
    return h @ params.head_weight


def graph_model_gc_forward(op, x, params):
    """Whole-graph output: propagate, max-pool over nodes, linear head."""
    _check_shapes(op, x, params)
    h, _ = _forward_stack(op, x, params.layer_weights)
    return h.max(axis=0) @ params.head_weight


def graph_model_gs_forward(pairs, params):
    """Whole-graph output over a subgraph set.

    Each subgraph propagates with its own operator; all node embeddings are
    row-stacked, max-pooled coordinatewise, and passed through the head.
    """
    if not pairs:
        raise ValueError("empty subgraph list")
    hiddens = []
    for op, x in pairs:
        _check_shapes(op, x, params)
        h, _ = _forward_stack(op, x, params.layer_weights)
        hiddens.append(h)
    return np.vstack(hiddens).max(axis=0) @ params.head_weight


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _masked_rows(z, mask):
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError("no supervised nodes")
    return rows


def cross_entropy(z, labels, mask):
    """Mean softmax cross entropy over masked rows (stable log-sum-exp)."""
    rows = _masked_rows(z, mask)
    zz = z[rows]
    m = zz.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(zz - m).sum(axis=1))
    return float(np.mean(lse - zz[np.arange(len(rows)), labels[rows]]))


def _cross_entropy_grad(z, labels, mask):
    rows = _masked_rows(z, mask)
    zz = z[rows]
    m = zz.max(axis=1, keepdims=True)
    e = np.exp(zz - m)
    p = e / e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(e.sum(axis=1))
    loss = float(np.mean(lse - zz[np.arange(len(rows)), labels[rows]]))
    dz = np.zeros_like(z)
    p[np.arange(len(rows)), labels[rows]] -= 1.0
    dz[rows] = p / len(rows)
    return loss, dz


def _align_targets(zz, tt):
    if zz.ndim == 2 and tt.ndim == 1:
        tt = tt[:, None]
    if zz.shape != tt.shape:
        raise ValueError(f"output shape {zz.shape} does not match targets {tt.shape}")
    return tt


def mae(z, targets, mask):
    """Mean absolute error over masked rows (all columns)."""
    rows = _masked_rows(z, mask)
    err = z[rows] - _align_targets(z[rows], targets[rows])
    return float(np.mean(np.abs(err)))


def _mae_grad(z, targets, mask):
    rows = _masked_rows(z, mask)
    err = z[rows] - _align_targets(z[rows], targets[rows])
    dz = np.zeros_like(z)
    dz[rows] = np.sign(err) / err.size
    return float(np.mean(np.abs(err))), dz


def _loss_grad(z, y, mask, kind):
    if kind == "cross_entropy":
        return _cross_entropy_grad(z, y, mask)
    if kind == "mae":
        return _mae_grad(z, y, mask)
    raise ValueError(f"unsupported loss {kind!r}")


def _check_finite(loss, caches):
    if np.isfinite(loss):
        return
    for l, (p, s) in enumerate(caches):
        if not np.isfinite(s).all():
            raise ValueError(f"non-finite loss; first non-finite activation in layer {l}")
    raise ValueError("non-finite loss in the head or loss computation")


def _apply_weight_decay(loss, grads, params, weight_decay):
    if weight_decay:
        loss += weight_decay * sum(float((w * w).sum()) for w in params.weights)
        grads = [g + 2.0 * weight_decay * w for g, w in zip(grads, params.weights)]
    return loss, grads


# ---------------------------------------------------------------------------
# loss + exact gradients for the three composite models
# ---------------------------------------------------------------------------

def node_loss_and_grads(op, x, params, y, mask, loss="cross_entropy",
                        weight_decay=0.0):
    """Loss and reverse-mode gradients of the per-node model on one graph.

    ``weight_decay`` adds lam * sum ||W||^2 to the objective and 2*lam*W to
    every gradient (training folds this term in the optimizer step instead;
    see ``adam_step``).
    """
    _check_shapes(op, x, params)
    h, caches = _forward_stack(op, x, params.layer_weights)
    z = h @ params.head_weight
    loss_val, dz = _loss_grad(z, y, mask, loss)
    _check_finite(loss_val, caches)
    head_grad = h.T @ dz
    d_h = dz @ params.head_weight.T
    grads = _backward_stack(op, d_h, caches, params.layer_weights) + [head_grad]
    return _apply_weight_decay(loss_val, grads, params, weight_decay)


def subgraph_loss_and_grads(items, params, loss="cross_entropy",
                            weight_decay=0.0):
    """Single joint loss over the masked rows of every subgraph.

    ``items`` is a sequence of (operator, features, labels, mask); outputs of
    all subgraphs are concatenated in sequence order before the loss, so one
    optimizer step sees the whole partition.
    """
    outputs, caches_list, hs = [], [], []
    masks, labels = [], []
    for op, x, y, m in items:
        _check_shapes(op, x, params)
        h, caches = _forward_stack(op, x, params.layer_weights)
        hs.append(h)
        caches_list.append(caches)
        outputs.append(h @ params.head_weight)
        masks.append(np.asarray(m, dtype=bool))
        labels.append(y)
    z = np.vstack(outputs)
    mask = np.concatenate(masks)
    y_all = np.concatenate(labels)
    loss_val, dz = _loss_grad(z, y_all, mask, loss)
    for caches in caches_list:
        _check_finite(loss_val, caches)
    grads = [np.zeros_like(w) for w in params.weights]
    offset = 0
    for (op, x, _, _), h, caches in zip(items, hs, caches_list):
        dz_i = dz[offset:offset + len(h)]
        offset += len(h)
        if not dz_i.any():
            continue
        grads[-1] += h.T @ dz_i
        d_h = dz_i @ params.head_weight.T
        for l, g in enumerate(_backward_stack(op, d_h, caches, params.layer_weights)):
            grads[l] += g
    return _apply_weight_decay(loss_val, grads, params, weight_decay)


def graph_batch_loss_and_grads(batch_items, targets, params,
                               loss="cross_entropy", weight_decay=0.0):
    """Loss and gradients for a batch of whole-graph outputs.

    Each batch item is a list of (operator, features) pairs: a singleton for
    a plain or coarse graph, one pair per subgraph otherwise. Pooling takes
    the coordinatewise max over all stacked node embeddings of the item.
    """
    pooled, pool_caches = [], []
    for pairs in batch_items:
        hiddens, caches = [], []
        for op, x in pairs:
            _check_shapes(op, x, params)
            h, c = _forward_stack(op, x, params.layer_weights)
            hiddens.append(h)
            caches.append(c)
        stacked = np.vstack(hiddens)
        arg = stacked.argmax(axis=0)
        pooled.append(stacked[arg, np.arange(stacked.shape[1])])
        pool_caches.append((pairs, hiddens, caches, arg))
    pool = np.vstack(pooled)
    z = pool @ params.head_weight
    mask = np.ones(len(batch_items), dtype=bool)
    loss_val, dz = _loss_grad(z, targets, mask, loss)
    for _pairs, _hiddens, caches, _arg in pool_caches:
        _check_finite(loss_val, [c for cs in caches for c in cs])
    grads = [np.zeros_like(w) for w in params.weights]
    grads[-1] += pool.T @ dz
    d_pool = dz @ params.head_weight.T
    for b, (pairs, hiddens, caches, arg) in enumerate(pool_caches):
        sizes = [len(h) for h in hiddens]
        bounds = np.cumsum([0] + sizes)
        d_stacked = np.zeros((bounds[-1], len(arg)))
        d_stacked[arg, np.arange(len(arg))] = d_pool[b]
        for i, (op, _x) in enumerate(pairs):
            d_h = d_stacked[bounds[i]:bounds[i + 1]]
            if not d_h.any():
                continue
            for l, g in enumerate(_backward_stack(op, d_h, caches[i],
                                                  params.layer_weights)):
                grads[l] += g
    return _apply_weight_decay(loss_val, grads, params, weight_decay)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m=[np.zeros_like(w) for w in params.weights],
                   v=[np.zeros_like(w) for w in params.weights])


def adam_step(params, grads, state, lr, weight_decay=0.0, decoupled=False):
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8), in place.

    By default the L2 term is folded into the gradient as 2*lam*W; with
    ``decoupled`` the decay is applied directly to the weights after the
    adaptive step instead.
    """
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for w, g, m, v in zip(params.weights, grads, state.m, state.v):
        if weight_decay and not decoupled:
            g = g + 2.0 * weight_decay * w
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        if weight_decay and decoupled:
            w -= lr * 2.0 * weight_decay * w
    return params


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def accuracy(z, labels, mask):
    """Fraction of masked rows whose argmax matches the label."""
    rows = _masked_rows(z, mask)
    return float(np.mean(z[rows].argmax(axis=1) == labels[rows]))


def target_sigma(targets, mask):
    """Per-column standard deviation of the masked (training) targets."""
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError("no supervised nodes")
    t = np.asarray(targets, dtype=np.float64)[rows]
    sigma = t.std(axis=0)
    if np.any(sigma <= 0):
        raise ValueError("targets have zero variance on the training split")
    return sigma


def normalized_mae(z, targets, mask, sigma):
    """MAE divided by sigma (per column, then averaged)."""
    rows = _masked_rows(z, mask)
    err = z[rows] - _align_targets(z[rows], targets[rows])
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    return float(np.mean(np.abs(err) / sigma))


# ---------------------------------------------------------------------------
# operation counting (deterministic multiply-add totals)
# ---------------------------------------------------------------------------

def forward_opcount(nnz, n_rows, dims, pooled=False):
    """Multiply-adds of one forward pass: sparse propagation plus dense
    transforms, and the head (applied per node, or once after pooling)."""
    ops = 0
    for w_in, w_out in zip(dims[:-2], dims[1:-1]):
        ops += nnz * w_in + n_rows * w_in * w_out
    head = dims[-2] * dims[-1]
    return ops + (head if pooled else n_rows * head)


def inference_bytes(n_rows, dims):
    """Analytic peak live bytes of one forward pass at float64.

    Counts the dense-equivalent operator (rows squared), the widest live
    activation, and the model weights; deterministic and cross-platform by
    construction, unlike process-level measurements.
    """
    weight_entries = sum(a * b for a, b in zip(dims[:-1], dims[1:]))
    return 8 * (n_rows * n_rows + n_rows * max(dims) + weight_entries)


# ---------------------------------------------------------------------------
# checkpoint I/O (versioned header + raw row-major float64 payloads)
# ---------------------------------------------------------------------------

def save_params(params, path):
    header = json.dumps({"version": 1, "layers": params.num_layers,
                         "dims": params.dims, "seed": params.seed}).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for w in params.weights:
            f.write(np.ascontiguousarray(w, dtype=np.float64).tobytes())


def load_params(path):
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        header_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(header_len).decode())
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version")
        dims = header["dims"]
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            buf = f.read(fan_in * fan_out * 8)
            weights.append(np.frombuffer(buf, dtype=np.float64)
                           .reshape(fan_in, fan_out).copy())
    return GcnParams(weights=weights, seed=header["seed"])
