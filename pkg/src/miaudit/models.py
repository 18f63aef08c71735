"""Small classifiers with hand-derived gradients.

``gcn2``  two-layer GCN, softmax(Â relu(Â X W0 + b0) W1 + b1)
``mlp1``  one hidden layer, the same network with Â = I
``linear`` softmax(X W0 + b0)

Training is plain full-batch gradient descent on the summed NLL of the
member nodes, over the member-induced adjacency (inductive setting).
"""
from dataclasses import dataclass, replace

import numpy as np

from .graph import as_mask, masked_adjacency, normalized_adjacency
from .rng import stream

__all__ = [
    "ARCHS",
    "LOSS_FLOOR",
    "ModelParams",
    "TrainConfig",
    "init_params",
    "logits",
    "predict_proba",
    "gcn_forward",
    "nll_loss",
    "losses_from_logits",
    "node_losses",
    "per_node_losses",
    "training_loss",
    "loss_and_grad",
    "train",
    "accuracy",
    "generalization_gap",
    "LossEvaluator",
    "write_params",
    "read_params",
]

ARCHS = ("gcn2", "mlp1", "linear")
LOSS_FLOOR = 1e-30
_LOG_FLOOR = np.log(LOSS_FLOOR)


@dataclass(frozen=True, eq=False)
class ModelParams:
    arch: str
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray | None = None
    b1: np.ndarray | None = None

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.arch == "linear":
            if self.W1 is not None or self.b1 is not None:
                raise ValueError("linear models have a single layer")
        else:
            if self.W1 is None or self.b1 is None:
                raise ValueError(f"{self.arch} needs two layers")
            if self.W1.shape[0] != self.W0.shape[1]:
                raise ValueError("hidden widths disagree")
            if self.b1.shape != (self.W1.shape[1],):
                raise ValueError("output bias has the wrong shape")
        if self.b0.shape != (self.W0.shape[1],):
            raise ValueError("first bias has the wrong shape")
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")

    @property
    def d(self):
        return self.W0.shape[0]

    @property
    def hidden(self):
        return 0 if self.arch == "linear" else self.W0.shape[1]

    @property
    def num_classes(self):
        return self.W0.shape[1] if self.arch == "linear" else self.W1.shape[1]

    def arrays(self):
        if self.arch == "linear":
            return [self.W0, self.b0]
        return [self.W0, self.b0, self.W1, self.b1]

    def with_arrays(self, arrays):
        if self.arch == "linear":
            return replace(self, W0=arrays[0], b0=arrays[1])
        return replace(self, W0=arrays[0], b0=arrays[1], W1=arrays[2], b1=arrays[3])

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.arch == other.arch and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )

    __hash__ = None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 200
    weight_decay: float = 0.0
    hidden: int = 32
    seed: int = 0

    def validate(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(arch, d, c, hidden, seed):
    """Glorot-uniform weights and zero biases."""
    rng = stream(seed, "init")
    if arch == "linear":
        return ModelParams(arch, _glorot(rng, d, c), np.zeros(c))
    if arch not in ARCHS:
        raise ValueError(f"unknown arch {arch!r}")
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    return ModelParams(arch, _glorot(rng, d, hidden), np.zeros(hidden), _glorot(rng, hidden, c), np.zeros(c))


def _propagate(ahat, m):
    return m if ahat is None else ahat @ m


def logits(p, x, ahat=None):
    """Pre-softmax outputs. ``ahat=None`` means the identity (no message passing)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != p.d:
        raise ValueError(f"feature dim {x.shape[1]} != model input dim {p.d}")
    if p.arch == "linear":
        return x @ p.W0 + p.b0
    if p.arch == "mlp1":
        ahat = None
    h = _propagate(ahat, x @ p.W0) + p.b0
    z = np.maximum(h, 0.0)
    return _propagate(ahat, z @ p.W1) + p.b1


def _log_softmax(o):
    m = o.max(axis=-1, keepdims=True)
    s = o - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def predict_proba(p, x, ahat=None):
    return np.exp(_log_softmax(logits(p, x, ahat)))


def gcn_forward(p, g, a):
    """Row-stochastic class probabilities of a GCN on the masked adjacency ``a``."""
    if p.arch != "gcn2":
        raise ValueError("gcn_forward needs a gcn2 model")
    if a.n != g.n:
        raise ValueError("adjacency and graph sizes differ")
    return predict_proba(p, g.features, normalized_adjacency(a))


def nll_loss(probs, label):
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range")
    return float(-np.log(max(probs[label], LOSS_FLOOR)))


def losses_from_logits(o, y):
    """Per-row NLL of the true label, clamped at ``p >= 1e-30``."""
    lp = _log_softmax(o)
    picked = np.take_along_axis(lp, np.asarray(y)[..., None], axis=-1)[..., 0]
    return -np.maximum(picked, _LOG_FLOOR)


def node_losses(p, g, ahat=None):
    """Loss of every node under ``ahat`` (``None``: 0-hop / i.i.d. query)."""
    return losses_from_logits(logits(p, g.features, ahat), g.labels)


def per_node_losses(p, g, a, nodes):
    """Losses for ``nodes`` only, touching just their two-hop receptive field."""
    nodes = sorted(int(v) for v in nodes)
    if not nodes:
        return {}
    if nodes[0] < 0 or nodes[-1] >= g.n:
        raise IndexError("node index out of range")
    x = g.features
    if p.arch != "gcn2":
        o = logits(p, x[nodes])
        return dict(zip(nodes, losses_from_logits(o, g.labels[nodes]).tolist()))
    ahat = normalized_adjacency(a)
    s0 = np.array(nodes)
    s1 = np.unique(np.concatenate([s0, ahat[s0].indices]))
    s2 = np.unique(np.concatenate([s1, ahat[s1].indices]))
    h = ahat[s1][:, s2] @ (x[s2] @ p.W0) + p.b0
    z = np.maximum(h, 0.0)
    o = ahat[s0][:, s1] @ (z @ p.W1) + p.b1
    return dict(zip(nodes, losses_from_logits(o, g.labels[s0]).tolist()))


def _training_inputs(p, g, train_mask):
    m = as_mask(train_mask, g.n)
    if not m.any():
        raise ValueError("empty training set")
    ahat = normalized_adjacency(masked_adjacency(g, m)) if p.arch == "gcn2" else None
    return m, ahat


def loss_and_grad(p, x, y, member, ahat=None, weight_decay=0.0, ax=None):
    """Summed member NLL plus ``weight_decay/2 * |W|^2`` and its exact gradient.

    ``ax`` may carry a cached ``Â @ x`` for the GCN.
    """
    member = np.asarray(member, dtype=bool)
    c = p.num_classes
    onehot = np.zeros((len(y), c))
    onehot[np.arange(len(y)), y] = 1.0
    if p.arch == "linear":
        o = x @ p.W0 + p.b0
    else:
        prop = ahat if p.arch == "gcn2" else None
        f = x if prop is None else (ax if ax is not None else prop @ x)
        h = f @ p.W0 + p.b0
        z = np.maximum(h, 0.0)
        gz = _propagate(prop, z)
        o = gz @ p.W1 + p.b1
    lp = _log_softmax(o)
    picked = lp[np.arange(len(y)), y]
    active = member & (picked > _LOG_FLOOR)
    loss = float(-np.maximum(picked, _LOG_FLOOR)[member].sum())
    do = (np.exp(lp) - onehot) * active[:, None]
    if p.arch == "linear":
        grads = [x.T @ do, do.sum(0)]
        weights = [p.W0]
    else:
        dw1 = gz.T @ do
        db1 = do.sum(0)
        dz = _propagate(prop.T if prop is not None else None, do @ p.W1.T)
        dh = dz * (h > 0)
        grads = [f.T @ dh, dh.sum(0), dw1, db1]
        weights = [p.W0, p.W1]
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in weights)
        grads[0] = grads[0] + weight_decay * p.W0
        if p.arch != "linear":
            grads[2] = grads[2] + weight_decay * p.W1
    return loss, grads


def training_loss(p, g, train_mask, weight_decay=0.0):
    m, ahat = _training_inputs(p, g, train_mask)
    return loss_and_grad(p, g.features, g.labels, m, ahat, weight_decay)[0]


def train(arch, g, train_mask, cfg):
    """Deterministic full-batch gradient descent; returns the final parameters."""
    cfg.validate()
    p = init_params(arch, g.d, g.num_classes, cfg.hidden, cfg.seed)
    m, ahat = _training_inputs(p, g, train_mask)
    x = g.features
    ax = ahat @ x if ahat is not None else None
    arrays = [a.copy() for a in p.arrays()]
    for _ in range(cfg.epochs):
        _, grads = loss_and_grad(p, x, g.labels, m, ahat, cfg.weight_decay, ax=ax)
        for a, gr in zip(arrays, grads):
            a -= cfg.lr * gr
        p = p.with_arrays(arrays)
    return p.with_arrays([a.copy() for a in arrays])


def accuracy(p, g, nodes, ahat=None):
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        return float("nan")
    pred = logits(p, g.features, ahat)[nodes].argmax(axis=1)
    return float((pred == g.labels[nodes]).mean())


def generalization_gap(p, g, train_mask):
    """(train accuracy on the training graph, test accuracy on the full graph, gap)."""
    m = as_mask(train_mask, g.n)
    train_ahat = normalized_adjacency(masked_adjacency(g, m)) if p.arch == "gcn2" else None
    full_ahat = normalized_adjacency(masked_adjacency(g, np.ones(g.n, bool))) if p.arch == "gcn2" else None
    tr = accuracy(p, g, np.flatnonzero(m), train_ahat)
    te = accuracy(p, g, np.flatnonzero(~m), full_ahat)
    return tr, te, tr - te


class LossEvaluator:
    """Node losses of many models under many adjacencies.

    GCN models sharing a hidden width are stacked so one sparse product
    propagates all of them; ``X @ W0`` is cached since it does not depend on
    the adjacency. Non-GCN models ignore the adjacency.
    """

    def __init__(self, models, g):
        self.models = list(models)
        self.g = g
        self.y = g.labels
        self._groups = []
        gcn = {}
        for k, p in enumerate(self.models):
            if p.arch == "gcn2":
                gcn.setdefault(p.hidden, []).append(k)
            else:
                self._groups.append(("static", [k], node_losses(p, g)))
        for h, idx in gcn.items():
            ps = [self.models[k] for k in idx]
            xw = np.concatenate([g.features @ p.W0 for p in ps], axis=1)
            b0 = np.concatenate([p.b0 for p in ps])
            w1 = np.stack([p.W1 for p in ps])
            b1 = np.concatenate([p.b1 for p in ps])
            self._groups.append(("gcn", idx, (h, xw, b0, w1, b1)))

    def __len__(self):
        return len(self.models)

    def losses(self, ahat):
        """``(n, K)`` matrix of per-node losses; ``ahat=None`` is the 0-hop query."""
        n = self.g.n
        out = np.empty((n, len(self.models)))
        for kind, idx, data in self._groups:
            if kind == "static":
                out[:, idx[0]] = data
                continue
            h, xw, b0, w1, b1 = data
            k = len(idx)
            c = w1.shape[2]
            z = np.maximum(_propagate(ahat, xw) + b0, 0.0).reshape(n, k, h)
            zw = np.einsum("nkh,khc->nkc", z, w1).reshape(n, k * c)
            o = (_propagate(ahat, zw) + b1).reshape(n, k, c)
            out[:, idx] = losses_from_logits(o, np.broadcast_to(self.y[:, None], (n, k)))
        return out


def _fmt_row(row):
    return " ".join(format(float(v), ".17g") for v in np.ravel(row))


def write_params(p, path):
    """Header ``arch d h c`` then W0 rows, b0, W1 rows, b1 (17 significant digits)."""
    lines = [f"{p.arch} {p.d} {p.hidden} {p.num_classes}"]
    lines.extend(_fmt_row(r) for r in p.W0)
    lines.append(_fmt_row(p.b0))
    if p.arch != "linear":
        lines.extend(_fmt_row(r) for r in p.W1)
        lines.append(_fmt_row(p.b1))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_params(path):
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    arch, d, h, c = rows[0][0], int(rows[0][1]), int(rows[0][2]), int(rows[0][3])
    vals = [np.array([float(t) for t in r]) for r in rows[1:]]
    if arch == "linear":
        return ModelParams(arch, np.vstack(vals[:d]).reshape(d, c), vals[d])
    return ModelParams(
        arch,
        np.vstack(vals[:d]).reshape(d, h),
        vals[d],
        np.vstack(vals[d + 1 : d + 1 + h]).reshape(h, c),
        vals[d + 1 + h],
    )
