"""Shadow-model pool with complementary half splits, and signal assembly."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import full_adjacency, normalized_adjacency
from .models import LossEvaluator, train
from .rng import derive_seed, stream

__all__ = [
    "ShadowPool",
    "SignalMatrix",
    "half_splits",
    "train_many",
    "train_shadow_pool",
    "filter_out_models",
    "query_losses",
    "signal_matrix",
    "write_signals",
    "read_signals",
    "SignalParseError",
]


@dataclass(frozen=True, eq=False)
class ShadowPool:
    models: list
    in_bits: np.ndarray  # (K, n) bool; in_bits[k, v] iff v trained model k
    arch: str = "gcn2"
    config: object = None
    seed: int = 0

    def __post_init__(self):
        ib = np.asarray(self.in_bits, dtype=bool)
        if ib.ndim != 2 or ib.shape[0] != len(self.models):
            raise ValueError("in_bits must be K x n")
        ib.setflags(write=False)
        object.__setattr__(self, "in_bits", ib)

    @property
    def k(self):
        return len(self.models)

    def subset(self, idx):
        idx = list(idx)
        return replace(self, models=[self.models[i] for i in idx], in_bits=self.in_bits[idx])


def half_splits(n, k, seed):
    """``(k, n)`` in-bit matrix: ``k/2`` uniform half splits, each followed by its complement."""
    if k < 2 or k % 2:
        raise ValueError("K must be an even number >= 2")
    bits = np.zeros((k, n), dtype=bool)
    for j in range(k // 2):
        perm = stream(seed, "split", j).permutation(n)
        bits[2 * j, perm[: n // 2]] = True
        bits[2 * j + 1] = ~bits[2 * j]
    return bits


def _train_job(args):
    arch, g, mask, cfg = args
    return train(arch, g, mask, cfg)


def train_many(jobs, n_jobs=1):
    """Train ``(arch, graph, mask, cfg)`` jobs, optionally in worker processes; order is preserved."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_train_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_train_job, jobs))


def train_shadow_pool(g, arch, cfg, k, seed, n_jobs=1):
    """Complementary-split shadow training: every node is in exactly ``k/2`` training sets."""
    bits = half_splits(g.n, k, seed)
    jobs = [(arch, g, bits[i], replace(cfg, seed=derive_seed(seed, "shadow", i))) for i in range(k)]
    return ShadowPool(train_many(jobs, n_jobs), bits, arch, cfg, seed)


def filter_out_models(pool, v):
    """Indices of the shadow models that did not train on ``v``."""
    if not 0 <= v < pool.in_bits.shape[1]:
        raise IndexError(f"node {v} out of range")
    return set(np.flatnonzero(~pool.in_bits[:, v]).tolist())


def query_losses(models, g, mode="zero_hop"):
    """``(n, len(models))`` losses: 0-hop (edges removed) or on the full graph."""
    if mode not in ("zero_hop", "graph"):
        raise ValueError(f"unknown signal mode {mode!r}")
    ahat = None if mode == "zero_hop" else normalized_adjacency(full_adjacency(g))
    return LossEvaluator(models, g).losses(ahat)


@dataclass(frozen=True, eq=False)
class SignalMatrix:
    """Per-sample target loss, K shadow losses, in/out bits and ground truth."""

    sample_ids: np.ndarray
    member: np.ndarray
    target_loss: np.ndarray
    shadow_loss: np.ndarray
    in_bits: np.ndarray
    mode: str = "zero_hop"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        n = ids.shape[0]
        mem = np.asarray(self.member, dtype=bool)
        tl = np.asarray(self.target_loss, dtype=np.float64)
        sl = np.asarray(self.shadow_loss, dtype=np.float64).reshape(n, -1)
        ib = np.asarray(self.in_bits, dtype=bool).reshape(n, -1)
        if mem.shape != (n,) or tl.shape != (n,) or ib.shape != sl.shape:
            raise ValueError("signal columns have inconsistent shapes")
        for name, a in (("sample_ids", ids), ("member", mem), ("target_loss", tl), ("shadow_loss", sl), ("in_bits", ib)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self):
        return self.sample_ids.shape[0]

    @property
    def k(self):
        return self.shadow_loss.shape[1]

    def rows(self, idx):
        idx = np.asarray(idx)
        return SignalMatrix(
            self.sample_ids[idx], self.member[idx], self.target_loss[idx],
            self.shadow_loss[idx], self.in_bits[idx], self.mode, dict(self.meta),
        )


def signal_matrix(target, pool, g, targets, ground_truth, mode="zero_hop", losses=None):
    """Assemble the attack interchange matrix for the nodes in ``targets``.

    ``losses`` may supply a precomputed ``(n, 1 + K)`` matrix (target first).
    """
    targets = np.asarray(sorted(int(v) for v in targets), dtype=np.int64)
    gt = np.asarray(ground_truth, dtype=bool)
    if gt.shape != (g.n,):
        raise ValueError("ground truth mask has the wrong length")
    if losses is None:
        losses = query_losses([target, *pool.models], g, mode)
    return SignalMatrix(
        targets, gt[targets], losses[targets, 0], losses[targets, 1:],
        pool.in_bits[:, targets].T, mode,
    )


def _fmt(x):
    return format(float(x), ".17g")


def write_signals(sig, path):
    k = sig.k
    header = ["sample_id", "member", "target_loss"] + [f"sh{i}" for i in range(k)] + [f"in{i}" for i in range(k)]
    lines = [",".join(header)]
    for i in range(sig.n):
        row = [str(int(sig.sample_ids[i])), str(int(sig.member[i])), _fmt(sig.target_loss[i])]
        row += [_fmt(v) for v in sig.shadow_loss[i]]
        row += [str(int(b)) for b in sig.in_bits[i]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class SignalParseError(ValueError):
    pass


def _parse_bit(tok, where):
    if tok not in ("0", "1"):
        raise SignalParseError(f"{where}: expected 0/1, got {tok!r}")
    return tok == "1"


def read_signals(path, mode="zero_hop"):
    """Parse a signals CSV; K is inferred from the header. Errors carry line numbers."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SignalParseError(f"{path}:1: empty file")
    header = lines[0].strip().split(",")
    if len(header) < 5 or header[:3] != ["sample_id", "member", "target_loss"] or (len(header) - 3) % 2:
        raise SignalParseError(f"{path}:1: bad header")
    k = (len(header) - 3) // 2
    if header[3:] != [f"sh{i}" for i in range(k)] + [f"in{i}" for i in range(k)]:
        raise SignalParseError(f"{path}:1: bad header, expected sh0..sh{k - 1},in0..in{k - 1}")
    ids, mem, tl, sl, ib = [], [], [], [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        toks = ln.strip().split(",")
        where = f"{path}:{lineno}"
        if len(toks) != len(header):
            raise SignalParseError(f"{where}: expected {len(header)} fields, got {len(toks)}")
        try:
            ids.append(int(toks[0]))
            vals = [float(t) for t in toks[2 : 3 + k]]
        except ValueError as e:
            raise SignalParseError(f"{where}: {e}") from None
        if not all(np.isfinite(vals)):
            raise SignalParseError(f"{where}: non-finite loss")
        mem.append(_parse_bit(toks[1], where))
        tl.append(vals[0])
        sl.append(vals[1:])
        ib.append([_parse_bit(t, where) for t in toks[3 + k :]])
    return SignalMatrix(
        np.array(ids, dtype=np.int64), np.array(mem, dtype=bool), np.array(tl),
        np.array(sl).reshape(len(ids), k), np.array(ib, dtype=bool).reshape(len(ids), k), mode,
    )
