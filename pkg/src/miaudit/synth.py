"""Deterministic synthetic populations: SBM graphs and i.i.d. datasets."""
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .rng import stream

__all__ = ["SbmSpec", "gen_sbm_graph", "gen_iid_dataset"]


@dataclass(frozen=True)
class SbmSpec:
    n: int = 400
    num_classes: int = 4
    p_in: float = 0.05
    p_out: float = 0.005
    dim: int = 16
    radius: float = 1.0
    noise: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")
        if self.num_classes < 1 or self.n % self.num_classes:
            raise ValueError("n must be a positive multiple of num_classes")
        if self.dim < self.num_classes:
            raise ValueError("feature dim must be >= num_classes (means sit on the first c axes)")
        if self.noise < 0:
            raise ValueError("noise std must be non-negative")


def _labels_and_features(spec):
    rng = stream(spec.seed, "labels")
    labels = rng.permutation(np.repeat(np.arange(spec.num_classes), spec.n // spec.num_classes))
    means = np.zeros((spec.num_classes, spec.dim))
    means[np.arange(spec.num_classes), np.arange(spec.num_classes)] = spec.radius
    noise = stream(spec.seed, "features").normal(0.0, 1.0, size=(spec.n, spec.dim))
    return labels, means[labels] + spec.noise * noise


def gen_sbm_graph(spec):
    """Balanced SBM: intra-class pairs linked w.p. ``p_in``, inter-class w.p. ``p_out``."""
    spec.validate()
    labels, x = _labels_and_features(spec)
    iu, iw = np.triu_indices(spec.n, k=1)
    p = np.where(labels[iu] == labels[iw], spec.p_in, spec.p_out)
    draw = stream(spec.seed, "edges").random(iu.shape[0])
    keep = draw < p
    edges = np.stack([iu[keep], iw[keep]], axis=1)
    return Graph(x, labels, edges, spec.num_classes)


def gen_iid_dataset(spec):
    """The same labels and features as :func:`gen_sbm_graph`, with no edges."""
    spec.validate()
    labels, x = _labels_and_features(spec)
    return Graph(x, labels, np.zeros((0, 2), dtype=np.int64), spec.num_classes)
