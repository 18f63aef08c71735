"""ROC analysis, low-FPR operating points, threshold estimation, attack
equivalence and the epsilon-DP bound on membership posteriors.

A sample is predicted a member when ``score > threshold``; ties at the
threshold are predicted non-members. ROC curves are staircases with no
interpolation.
"""
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RocCurve",
    "ThresholdEstimate",
    "roc_auc",
    "tpr_at_fpr",
    "realized_rates",
    "estimate_threshold",
    "check_equivalence",
    "dp_bound",
    "write_roc",
]


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _validate(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and of equal length")
    if y.all() or not y.any():
        raise ValueError("need both members and non-members")
    return s, y


def roc_auc(scores, labels):
    """Full threshold sweep. Point ``i`` predicts positive for ``score > thresholds[i]``.

    The area equals the Mann-Whitney statistic with ties counted as one half.
    """
    s, y = _validate(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    distinct = np.r_[True, s_sorted[1:] != s_sorted[:-1]]
    starts = np.flatnonzero(distinct)
    ends = np.r_[starts[1:], len(s_sorted)]
    tp = np.cumsum(y_sorted)[ends - 1]
    fp = np.cumsum(~y_sorted)[ends - 1]
    n_pos, n_neg = y.sum(), (~y).sum()
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    vals = s_sorted[starts]
    lowest = np.nextafter(vals[-1], -np.inf)
    thresholds = np.r_[vals, lowest]
    # area in counts for exactness, then one division
    tp_c = np.r_[0, tp]
    fp_c = np.r_[0, fp]
    area = float(np.sum((fp_c[1:] - fp_c[:-1]) * (tp_c[1:] + tp_c[:-1])))
    auc = area / (2.0 * n_pos * n_neg)
    return RocCurve(fpr, tpr, thresholds, auc)


def tpr_at_fpr(roc_or_scores, target_fpr, labels=None):
    """TPR and threshold at the largest realised FPR not exceeding ``target_fpr``."""
    if not 0.0 < target_fpr <= 1.0:
        raise ValueError("target FPR must lie in (0, 1]")
    roc = roc_or_scores if isinstance(roc_or_scores, RocCurve) else roc_auc(roc_or_scores, labels)
    ok = np.flatnonzero(roc.fpr <= target_fpr + 1e-15)
    best = ok[np.argmax(roc.fpr[ok])]
    # among equal FPRs the later (lower) threshold has the higher TPR
    best = ok[roc.fpr[ok] == roc.fpr[best]].max()
    return float(roc.tpr[best]), float(roc.thresholds[best])


def realized_rates(scores, labels, threshold):
    """(FPR, TPR) of the hard predictions ``score > threshold``."""
    s, y = _validate(scores, labels)
    pred = s > threshold
    return float(pred[~y].mean()), float(pred[y].mean())


@dataclass(frozen=True, eq=False)
class ThresholdEstimate:
    thresholds: np.ndarray
    mean: float
    max: float
    target_fpr: float


def estimate_threshold(pool, g, cfg, target_fpr, n_sim, losses=None, mode="zero_hop"):
    """Attack shadow models with known membership to pick a threshold.

    Shadow ``s`` (for ``s < n_sim``) plays the target and the other ``K - 1``
    models form the reference pool. ``losses`` may hold the ``(n, K)`` 0-hop
    losses of the pool to avoid recomputation.
    """
    from .attacks import run_attack
    from .shadow import SignalMatrix, query_losses

    if n_sim < 1:
        raise ValueError("need at least one simulated target")
    if n_sim > pool.k or pool.k < 3:
        raise ValueError("shadow pool too small for the requested simulated targets")
    if losses is None:
        losses = query_losses(pool.models, g, mode)
    n = losses.shape[0]
    ths = []
    for s in range(n_sim):
        rest = [k for k in range(pool.k) if k != s]
        sig = SignalMatrix(np.arange(n), pool.in_bits[s], losses[:, s], losses[:, rest], pool.in_bits[rest].T, mode)
        sv = run_attack(sig, cfg)
        ths.append(tpr_at_fpr(sv.scores, target_fpr, sig.member)[1])
    ths = np.array(ths)
    return ThresholdEstimate(ths, float(ths.mean()), float(ths.max()), target_fpr)


def check_equivalence(a, b):
    """Rank concordance of two score vectors.

    Returns ``(ok, max_violation)`` where ``ok`` holds iff no pair is ordered
    strictly one way by ``a`` and strictly the other way by ``b``; the
    violation is measured in units of ``b``. O(N log N).
    """
    a = np.asarray(getattr(a, "scores", a), dtype=np.float64)
    b = np.asarray(getattr(b, "scores", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("score vectors differ in length")
    if a.size < 2:
        return True, 0.0
    order = np.lexsort((b, a))
    sa, sb = a[order], b[order]
    starts = np.flatnonzero(np.r_[True, sa[1:] != sa[:-1]])
    gmin = np.minimum.reduceat(sb, starts)
    gmax = np.maximum.reduceat(sb, starts)
    prev_max = np.maximum.accumulate(gmax)[:-1]
    viol = prev_max - gmin[1:]
    worst = float(max(viol.max(initial=-np.inf), 0.0))
    return worst == 0.0, worst


def dp_bound(epsilon, lam=0.5):
    """Upper bound on the membership posterior of an epsilon-DP training algorithm."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    # sigma(eps + logit(lam)) written so that eps = 0 returns lam exactly
    return float(1.0 / (1.0 + (1.0 - lam) / lam * math.exp(-epsilon)))


def write_roc(roc, path):
    lines = ["fpr,tpr"]
    lines.extend(f"{format(float(f), '.17g')},{format(float(t), '.17g')}" for f, t in zip(roc.fpr, roc.tpr))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
