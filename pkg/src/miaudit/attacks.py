"""Membership-inference score functions: BASE, G-BASE, MCA, RMIA and LiRA.

Signals are per-sample NLL losses. Higher scores always mean "more likely a
member". BASE and G-BASE return posterior membership probabilities.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

from .graph import l_hop_neighborhood, normalized_adjacency_from_mask
from .models import LossEvaluator, per_node_losses
from .graph import masked_adjacency
from .rng import stream
from .sampling import MaskTarget, SamplerConfig, draw_masks

__all__ = [
    "METHODS",
    "AttackConfig",
    "ScoreVector",
    "log_mean_exp",
    "base_logit",
    "base_score",
    "attack_base",
    "mca_score",
    "log_mca",
    "attack_mca",
    "attack_rmia",
    "attack_lira",
    "graph_signal_S",
    "attack_gbase",
    "run_attack",
    "write_scores",
]

METHODS = ("base", "gbase", "rmia", "lira", "mca")
LIRA_CLAMP = (1e-12, 1.0 - 1e-7)


@dataclass(frozen=True)
class AttackConfig:
    method: str = "base"
    mode: str = "online"
    lam: float = 0.5
    alpha: float = 1.0
    gamma: float = 1.0
    n_masks: int = 4
    sampler: str = "model_independent"
    lira_var_floor: float = 1e-8
    population_fraction: float = 1.0
    hops: int = 2
    seed: int = 0

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack {self.method!r}")
        if self.mode not in ("online", "offline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.n_masks < 1:
            raise ValueError("n_masks must be >= 1")
        if not 0.0 < self.population_fraction <= 1.0:
            raise ValueError("population fraction must lie in (0, 1]")

    @property
    def effective_alpha(self):
        return 1.0 if self.mode == "online" else self.alpha

    def label(self):
        return self.method if self.mode == "online" else f"{self.method}-offline"


@dataclass(frozen=True, eq=False)
class ScoreVector:
    sample_ids: np.ndarray
    scores: np.ndarray
    method: str
    mode: str = "online"
    is_probability: bool = False
    member: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.scores)


def _logit(p):
    return math.log(p) - math.log1p(-p)


def log_mean_exp(a, use=None):
    """Row-wise ``log(mean(exp(a)))`` over the entries flagged in ``use``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
        use = None if use is None else np.asarray(use)[None, :]
    if use is None:
        count = np.full(a.shape[0], a.shape[1])
        lse = logsumexp(a, axis=1)
    else:
        use = np.asarray(use, dtype=bool)
        count = use.sum(axis=1)
        if np.any(count == 0):
            raise ValueError("a row has no usable shadow models")
        lse = logsumexp(np.where(use, a, -np.inf), axis=1)
    return lse - np.log(count)


def base_logit(target_loss, shadow_losses, lam=0.5, alpha=1.0, use=None):
    """Log-odds of membership before the sigmoid."""
    sl = np.asarray(shadow_losses, dtype=np.float64)
    if sl.size == 0:
        raise ValueError("empty shadow set")
    tl = np.asarray(target_loss, dtype=np.float64)
    out = -tl - alpha * log_mean_exp(-sl, use) + _logit(lam)
    return out if tl.ndim else float(out[0])


def base_score(target_loss, shadow_losses, lam=0.5, alpha=1.0):
    """BASE membership probability of one sample (or a batch of rows)."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    return expit(base_logit(target_loss, shadow_losses, lam, alpha))


def _shadow_use(signal, cfg):
    if cfg.mode == "online":
        return None
    if signal.in_bits.shape != signal.shadow_loss.shape:
        raise ValueError("offline attacks need in/out bits for every shadow loss")
    return ~signal.in_bits


def log_mca(signal, cfg=None):
    cfg = cfg or AttackConfig()
    return -signal.target_loss - cfg.effective_alpha * log_mean_exp(-signal.shadow_loss, _shadow_use(signal, cfg))


def attack_base(signal, cfg):
    cfg.validate()
    logits = log_mca(signal, cfg) + _logit(cfg.lam)
    return ScoreVector(signal.sample_ids, expit(logits), "base", cfg.mode, True, signal.member,
                       {"alpha": cfg.effective_alpha})


def mca_score(target_loss, shadow_losses):
    """Target confidence over the mean shadow confidence."""
    return float(np.exp(-target_loss - log_mean_exp(-np.asarray(shadow_losses, dtype=np.float64))[0]))


def attack_mca(signal, cfg):
    cfg.validate()
    return ScoreVector(signal.sample_ids, np.exp(log_mca(signal, cfg)), "mca", cfg.mode, False, signal.member)


def attack_rmia(signal, cfg, population=None):
    """Fraction of population samples ``j`` with ``mca_i / mca_j >= gamma``.

    ``population`` holds row indices into ``signal``; by default all rows, or a
    seeded random ``population_fraction`` of them.
    """
    cfg.validate()
    lm = log_mca(signal, cfg)
    if population is None:
        if cfg.population_fraction < 1.0:
            size = max(1, int(round(cfg.population_fraction * signal.n)))
            population = np.sort(stream(cfg.seed, "rmia-population").choice(signal.n, size, replace=False))
        else:
            population = np.arange(signal.n)
    population = np.asarray(population, dtype=np.int64)
    if population.size == 0:
        raise ValueError("empty RMIA population")
    if cfg.gamma == 0:
        scores = np.ones(signal.n)
    else:
        ref = np.sort(lm[population])
        counts = np.searchsorted(ref, lm - math.log(cfg.gamma), side="right")
        scores = counts / population.size
    return ScoreVector(signal.sample_ids, scores, "rmia", cfg.mode, False, signal.member,
                       {"gamma": cfg.gamma, "population": int(population.size)})


def _lira_logit(losses):
    p = np.clip(np.exp(-np.asarray(losses, dtype=np.float64)), *LIRA_CLAMP)
    return np.log(p) - np.log1p(-p)


def _masked_stats(phi, use):
    cnt = use.sum(axis=1)
    mu = np.where(use, phi, 0.0).sum(axis=1) / np.maximum(cnt, 1)
    var = np.where(use, (phi - mu[:, None]) ** 2, 0.0).sum(axis=1) / np.maximum(cnt, 1)
    return cnt, mu, var


def _gauss_logpdf(x, mu, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mu) ** 2 / var)


def attack_lira(signal, cfg):
    """Gaussian likelihood-ratio test on logit-scaled confidences.

    Online: log N(phi_t; in) - log N(phi_t; out). Offline: the one-sided
    standardised distance (phi_t - mu_out) / sigma_out, larger for members.
    """
    cfg.validate()
    phi_t = _lira_logit(signal.target_loss)
    phi = _lira_logit(signal.shadow_loss)
    n_out, mu_out, var_out = _masked_stats(phi, ~signal.in_bits)
    var_out = np.maximum(var_out, cfg.lira_var_floor)
    if np.any(n_out < 2):
        raise ValueError("LiRA needs at least two out-models per sample")
    if cfg.mode == "online":
        n_in, mu_in, var_in = _masked_stats(phi, signal.in_bits)
        if np.any(n_in < 2):
            raise ValueError("online LiRA needs at least two in-models per sample")
        var_in = np.maximum(var_in, cfg.lira_var_floor)
        scores = _gauss_logpdf(phi_t, mu_in, var_in) - _gauss_logpdf(phi_t, mu_out, var_out)
    else:
        scores = (phi_t - mu_out) / np.sqrt(var_out)
    return ScoreVector(signal.sample_ids, scores, "lira", cfg.mode, False, signal.member)


def graph_signal_S(model, g, v, mask_tilde, hops=2):
    """Loss of ``v`` with ``v`` included, plus the change its inclusion causes
    in the losses of member nodes within ``hops`` of it."""
    mt = np.array(mask_tilde, dtype=bool)
    if mt[v]:
        raise ValueError("target bit must be unset in the configuration")
    m = mt.copy()
    m[v] = True
    a_with = masked_adjacency(g, m)
    a_without = masked_adjacency(g, mt)
    nbrs = l_hop_neighborhood(a_with, v, hops)
    with_v = per_node_losses(model, g, a_with, nbrs | {v})
    without_v = per_node_losses(model, g, a_without, nbrs)
    return with_v[v] + sum(with_v[u] - without_v[u] for u in nbrs if m[u])


def _csr_l_hop(ahat, v, hops):
    indptr, indices = ahat.indptr, ahat.indices
    seen = {v}
    frontier = [v]
    for _ in range(hops):
        nxt = []
        for u in frontier:
            for w in indices[indptr[u] : indptr[u + 1]].tolist():
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    seen.discard(v)
    return np.array(sorted(seen), dtype=np.int64)


def _graph_signals(evaluator, g, v, mask_tilde, hops):
    """``S`` for every model held by ``evaluator`` (one batched forward per adjacency)."""
    m = mask_tilde.copy()
    m[v] = True
    ahat_with = normalized_adjacency_from_mask(g, m)
    nbrs = _csr_l_hop(ahat_with, v, hops)
    l_with = evaluator.losses(ahat_with)
    s = l_with[v].copy()
    if nbrs.size:
        l_without = evaluator.losses(normalized_adjacency_from_mask(g, mask_tilde))
        s += (l_with[nbrs] - l_without[nbrs]).sum(axis=0)
    return s


def attack_gbase(target, pool, g, targets, cfg, sampler=None, probs=None, member=None, n_jobs=1):
    """G-BASE: average over sampled configurations of the graph-signal BASE posterior.

    ``probs`` (per-node 0-hop BASE probabilities) is needed for the
    ``zero_hop_mia`` sampler. Each target node draws from its own stream.
    """
    cfg.validate()
    sampler = sampler or SamplerConfig(kind=cfg.sampler, lam=cfg.lam, n_samples=cfg.n_masks)
    targets = np.asarray(sorted(int(v) for v in targets), dtype=np.int64)
    if pool.k < 1:
        raise ValueError("empty shadow pool")
    if pool.in_bits.shape[1] != g.n:
        raise ValueError("shadow pool and graph disagree on node count")
    evaluator = LossEvaluator([target, *pool.models], g)
    mask_target = MaskTarget(target, pool.models, g, evaluator) if sampler.kind == "mcmc" else None
    prior = _logit(cfg.lam)
    alpha = cfg.effective_alpha
    scores = np.empty(len(targets))
    for i, v in enumerate(targets.tolist()):
        rng = stream(cfg.seed, "gbase", v)
        masks = draw_masks(sampler, v, rng, g, target, pool, probs, mask_target)
        use = None if cfg.mode == "online" else ~pool.in_bits[:, v]
        if use is not None and not use.any():
            raise ValueError(f"node {v} has no out-models")
        vals = []
        for mt in masks:
            s = _graph_signals(evaluator, g, v, mt, cfg.hops)
            vals.append(-s[0] - alpha * log_mean_exp(-s[1:], use)[0] + prior)
        scores[i] = expit(np.array(vals)).mean()
    mem = None if member is None else np.asarray(member, dtype=bool)[targets]
    return ScoreVector(targets, scores, "gbase", cfg.mode, True, mem,
                       {"alpha": alpha, "sampler": sampler.kind, "n_masks": sampler.n_samples})


def run_attack(signal, cfg):
    """Dispatch the signal-based (i.i.d.-style) attacks."""
    if cfg.method == "base":
        return attack_base(signal, cfg)
    if cfg.method == "rmia":
        return attack_rmia(signal, cfg)
    if cfg.method == "lira":
        return attack_lira(signal, cfg)
    if cfg.method == "mca":
        return attack_mca(signal, cfg)
    raise ValueError(f"{cfg.method!r} is not a signal-based attack")


def with_alpha(cfg, alpha):
    return replace(cfg, alpha=float(alpha))


def write_scores(sv, path, label=None):
    """CSV ``sample_id,member,score,method,mode``."""
    method = label or sv.method
    lines = ["sample_id,member,score,method,mode"]
    member = sv.member if sv.member is not None else np.zeros(len(sv), dtype=bool)
    for sid, m, s in zip(sv.sample_ids.tolist(), member.tolist(), sv.scores.tolist()):
        lines.append(f"{sid},{int(m)},{format(float(s), '.17g')},{method},{sv.mode}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
