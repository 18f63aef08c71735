"""Samplers for the non-target membership configuration of G-BASE.

A configuration is an ``n``-long boolean mask whose target bit is always 0.
Three strategies are provided: independent Bernoulli bits, Metropolis-Hastings
on the model-posterior ratio, and Bernoulli bits driven by 0-hop BASE
probabilities. ``enumerate_exact`` gives the exact MCMC target distribution
for small graphs.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._core import mh_steps
from .graph import normalized_adjacency_from_mask
from .models import LossEvaluator

__all__ = [
    "SAMPLER_KINDS",
    "SamplerConfig",
    "free_nodes",
    "code_to_mask",
    "mask_to_code",
    "sample_model_independent",
    "MaskTarget",
    "mcmc_log_target",
    "log_target_table",
    "enumerate_exact",
    "sample_mcmc",
    "sample_zero_hop_mia",
    "draw_masks",
    "format_masks",
]

SAMPLER_KINDS = ("model_independent", "mcmc", "zero_hop_mia")
ENUMERATE_MAX_N = 14
TABLE_MAX_FREE = 16
_CHUNK = 1 << 20


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "model_independent"
    lam: float = 0.5
    n_samples: int = 4
    flip_fraction: float | None = None  # None: single-bit flips
    burn_in: int = 1000
    thinning: int = 500

    def validate(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}")
        if not 0.0 < self.lam < 1.0 and self.kind != "model_independent":
            raise ValueError("lambda must lie in (0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if self.flip_fraction is not None and not 0.0 < self.flip_fraction <= 1.0:
            raise ValueError("flip fraction must lie in (0, 1]")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn-in must be >= 0 and thinning >= 1")

    def n_flip(self, n):
        if self.flip_fraction is None:
            return 1
        return max(1, math.ceil(self.flip_fraction * (n - 1)))


def free_nodes(n, v):
    """Non-target nodes in index order; bit ``i`` of a code is node ``free_nodes(n, v)[i]``."""
    return np.array([u for u in range(n) if u != v], dtype=np.int64)


def code_to_mask(code, n, v):
    free = free_nodes(n, v)
    m = np.zeros(n, dtype=bool)
    m[free] = (int(code) >> np.arange(len(free))) & 1
    return m


def mask_to_code(mask, v):
    free = free_nodes(len(mask), v)
    return int(sum(1 << i for i, u in enumerate(free) if mask[u]))


def _codes_to_masks(codes, n, v):
    free = free_nodes(n, v)
    codes = np.asarray(codes, dtype=np.int64)
    out = np.zeros((len(codes), n), dtype=bool)
    out[:, free] = (codes[:, None] >> np.arange(len(free))) & 1
    return out


def sample_model_independent(cfg, n, v, rng, size=None):
    """Each non-target bit ~ Bernoulli(lambda), independently."""
    shape = (n,) if size is None else (size, n)
    m = rng.random(shape) < cfg.lam
    m[..., v] = False
    return m


class MaskTarget:
    """Unnormalised log-probability of a configuration given target model and shadows.

    ``-sum_u m_u l_theta(u) - log mean_k exp(-sum_u m_u l_k(u))`` with all losses
    taken under the adjacency induced by the mask itself.
    """

    def __init__(self, target, shadows, g, evaluator=None):
        self.g = g
        self.k = len(shadows)
        if self.k == 0:
            raise ValueError("need at least one shadow model")
        self.evaluator = evaluator or LossEvaluator([target, *shadows], g)

    def __call__(self, mask):
        mask = np.asarray(mask, dtype=bool)
        ahat = normalized_adjacency_from_mask(self.g, mask)
        losses = self.evaluator.losses(ahat)
        sums = losses[mask].sum(axis=0)
        return float(-sums[0] - (logsumexp(-sums[1:]) - math.log(self.k)))


def mcmc_log_target(mask, v, target, pool, g):
    mask = np.array(mask, dtype=bool)
    if mask[v]:
        raise ValueError("target bit must be unset")
    return MaskTarget(target, _models(pool), g)(mask)


def _models(pool):
    return list(pool.models) if hasattr(pool, "models") else list(pool)


def log_target_table(v, target, pool, g, mask_target=None):
    """Log target of every configuration, indexed by code (``2**(n-1)`` entries)."""
    n = g.n
    if n - 1 > TABLE_MAX_FREE:
        raise ValueError(f"n={n} too large to tabulate")
    mt = mask_target or MaskTarget(target, _models(pool), g)
    masks = _codes_to_masks(np.arange(1 << (n - 1)), n, v)
    return np.array([mt(m) for m in masks])


def enumerate_exact(v, target, pool, g):
    """Normalised probabilities of all ``2**(n-1)`` configurations, indexed by code."""
    if g.n > ENUMERATE_MAX_N:
        raise ValueError(f"exact enumeration needs n <= {ENUMERATE_MAX_N}, got {g.n}")
    table = log_target_table(v, target, pool, g)
    p = np.exp(table - table.max())
    return p / p.sum()


def _draw_chunk(rng, steps, n_free, n_flip):
    # Positions are drawn over all n nodes; slot ``n_free`` stands for v, whose
    # bit is pinned, so choosing it flips nothing. The occasional null move
    # keeps the chain aperiodic when nearly every proposal is accepted.
    if n_flip == 1:
        idx = rng.integers(0, n_free + 1, size=(steps, 1))
    else:
        idx = np.argpartition(rng.random((steps, n_free + 1)), n_flip - 1, axis=1)[:, :n_flip]
    log_u = np.log(rng.random(steps))
    return idx, log_u


def _record_offset(start, steps, first, thinning):
    if start <= first:
        r = first
    else:
        r = first + -(-(start - first) // thinning) * thinning
    return r - start if r - start < steps else steps


def sample_mcmc(cfg, v, target, pool, g, rng, return_stats=False, mask_target=None):
    """Metropolis-Hastings over configurations with symmetric bit-flip proposals.

    Each proposal picks ``n_flip`` distinct nodes out of all ``n``; bits of the
    picked non-target nodes are flipped, and picking ``v`` is a null move.

    Starts from a uniform random configuration, runs ``burn_in`` steps, then
    keeps the state after every ``thinning`` further steps until ``n_samples``
    masks are collected. Small graphs use a tabulated log target and the
    compiled chain kernel.
    """
    cfg.validate()
    n = g.n
    n_free = n - 1
    free = free_nodes(n, v)
    n_flip = cfg.n_flip(n)
    total = cfg.burn_in + cfg.thinning * cfg.n_samples
    first = cfg.burn_in + cfg.thinning - 1
    mt = mask_target or MaskTarget(target, _models(pool), g)
    init_bits = rng.random(n_free) < 0.5
    chunk = max(1, min(_CHUNK, (1 << 24) // max(n_free * (n_flip > 1), 1)))
    accepted = 0
    records = []
    if n_free <= TABLE_MAX_FREE:
        table = log_target_table(v, target, pool, g, mt)
        state = int(np.sum(init_bits.astype(np.int64) << np.arange(n_free)))
        for start in range(0, total, chunk):
            steps = min(chunk, total - start)
            idx, log_u = _draw_chunk(rng, steps, n_free, n_flip)
            flips = np.bitwise_or.reduce(np.left_shift(np.int64(1), idx), axis=1) & ((1 << n_free) - 1)
            off = _record_offset(start, steps, first, cfg.thinning)
            state, acc, rec = mh_steps(table, state, flips, log_u, off, cfg.thinning)
            accepted += acc
            records.append(rec)
        masks = _codes_to_masks(np.concatenate(records), n, v)
    else:
        cur = np.zeros(n, dtype=bool)
        cur[free] = init_bits
        cur_lp = mt(cur)
        out = []
        for start in range(0, total, chunk):
            steps = min(chunk, total - start)
            idx, log_u = _draw_chunk(rng, steps, n_free, n_flip)
            for t in range(steps):
                prop = cur.copy()
                hit = idx[t][idx[t] < n_free]
                prop[free[hit]] ^= True
                prop_lp = mt(prop)
                if prop_lp - cur_lp > log_u[t]:
                    cur, cur_lp = prop, prop_lp
                    accepted += 1
                gt = start + t
                if gt >= first and (gt - first) % cfg.thinning == 0:
                    out.append(cur.copy())
        masks = np.array(out, dtype=bool).reshape(-1, n)
    if return_stats:
        return masks, {"accept_rate": accepted / total, "steps": total}
    return masks


def sample_zero_hop_mia(cfg, v, signal, rng, size=None):
    """Bernoulli bits with per-node probabilities from 0-hop BASE.

    ``signal`` is a :class:`SignalMatrix` covering every node, or an ``n``-long
    array of membership probabilities.
    """
    if hasattr(signal, "target_loss"):
        from .attacks import AttackConfig, attack_base

        n = int(signal.sample_ids.max()) + 1
        probs = np.full(n, np.nan)
        sv = attack_base(signal, AttackConfig(method="base", mode="online", lam=cfg.lam))
        probs[signal.sample_ids] = sv.scores
    else:
        probs = np.asarray(signal, dtype=np.float64)
        n = probs.shape[0]
    others = np.ones(n, dtype=bool)
    others[v] = False
    if np.any(np.isnan(probs[others])):
        raise ValueError("BASE probabilities missing for some non-target nodes")
    shape = (n,) if size is None else (size, n)
    m = rng.random(shape) < np.where(others, probs, 0.0)
    m[..., v] = False
    return m


def draw_masks(cfg, v, rng, g, target=None, pool=None, probs=None, mask_target=None):
    """``(n_samples, n)`` configurations for target ``v`` using ``cfg.kind``."""
    cfg.validate()
    if cfg.kind == "model_independent":
        return sample_model_independent(cfg, g.n, v, rng, size=cfg.n_samples)
    if cfg.kind == "zero_hop_mia":
        if probs is None:
            raise ValueError("zero_hop_mia sampling needs BASE probabilities")
        return sample_zero_hop_mia(cfg, v, probs, rng, size=cfg.n_samples)
    if target is None or pool is None:
        raise ValueError("mcmc sampling needs the target model and shadow pool")
    return sample_mcmc(cfg, v, target, pool, g, rng, mask_target=mask_target)


def format_masks(masks):
    """Debug dump: one ``0/1`` string per mask."""
    return "\n".join("".join("1" if b else "0" for b in m) for m in np.atleast_2d(masks))
