"""Pipelines behind the CLI: the membership game loop, the MCMC stationarity
check and the threshold study. Every random choice is derived from the
experiment seed, so a config fully determines the output files."""
import logging
import os
from dataclasses import replace

import numpy as np

from .attacks import AttackConfig, attack_base, attack_gbase, run_attack, write_scores
from .graph import read_graph
from .metrics import estimate_threshold, realized_rates, roc_auc, tpr_at_fpr, write_roc
from .models import generalization_gap, train
from .rng import derive_seed, stream
from .sampling import SamplerConfig, enumerate_exact, format_masks, mask_to_code, sample_mcmc
from .shadow import SignalMatrix, query_losses, read_signals, signal_matrix, train_many, train_shadow_pool
from .synth import SbmSpec, gen_iid_dataset, gen_sbm_graph

log = logging.getLogger(__name__)

ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))
GBASE_ALPHA_GRID = (0.9, 1.0)


def build_graph(cfg):
    if cfg.graph_file:
        return read_graph(cfg.graph_file)
    return gen_iid_dataset(cfg.data) if cfg.edgeless else gen_sbm_graph(cfg.data)


def challenger_mask(n, fraction, seed):
    m = np.zeros(n, dtype=bool)
    m[stream(seed, "challenger").permutation(n)[: int(round(fraction * n))]] = True
    return m


def balanced_targets(member, size, seed):
    """Equal numbers of members and non-members, sorted by node id."""
    ins, outs = np.flatnonzero(member), np.flatnonzero(~member)
    per = min(len(ins), len(outs))
    if size:
        per = min(per, size // 2)
    rng = stream(seed, "eval-set")
    picked = np.concatenate([rng.choice(ins, per, replace=False), rng.choice(outs, per, replace=False)])
    return np.sort(picked)


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) if isinstance(x, (float, np.floating)) else str(x) for x in r) + "\n")


def _simulated_signal(pool, losses, s=0):
    rest = [k for k in range(pool.k) if k != s]
    n = losses.shape[0]
    return SignalMatrix(np.arange(n), pool.in_bits[s], losses[:, s], losses[:, rest], pool.in_bits[rest].T)


def select_alpha(spec, pool, g, pool_losses, probs=None):
    """Offline alpha by grid search, shadow 0 acting as a target with known membership."""
    cfg = spec.config
    if cfg.method == "gbase":
        sub = pool.subset(range(1, pool.k))
        best = None
        for a in GBASE_ALPHA_GRID:
            sv = attack_gbase(pool.models[0], sub, g, range(g.n), replace(cfg, alpha=a), probs=probs,
                              member=pool.in_bits[0])
            auc = roc_auc(sv.scores, pool.in_bits[0]).auc
            if best is None or auc >= best[0]:
                best = (auc, a)
        return best[1]
    sig = _simulated_signal(pool, pool_losses)
    best = None
    for a in ALPHA_GRID:
        sv = run_attack(sig, replace(cfg, alpha=a))
        auc = roc_auc(sv.scores, sig.member).auc
        if best is None or auc >= best[0]:
            best = (auc, a)
    return best[1]


def _metrics(sv):
    roc = roc_auc(sv.scores, sv.member)
    return roc, roc.auc, tpr_at_fpr(roc, 0.01)[0], tpr_at_fpr(roc, 0.001)[0]


def run_audit(cfg, out_dir, jobs=1):
    """Challenger/adversary game repeated ``cfg.repetitions`` times.

    Writes per-attack score and ROC files for every repetition, ``summary.csv``
    (one row per attack and repetition), ``summary_agg.csv`` (mean and
    population std), ``targets.csv`` and ``manifest.txt``. Returns the
    aggregated rows.
    """
    from .config import config_fields

    os.makedirs(out_dir, exist_ok=True)
    g = build_graph(cfg)
    seed = cfg.seed
    pool_seed = derive_seed(seed, "pool")
    pool = train_shadow_pool(g, cfg.shadow.arch, cfg.shadow.train_config(pool_seed), cfg.k, pool_seed, jobs)
    need_offline = any(a.auto_alpha and a.config.mode == "offline" for a in cfg.attacks)
    pool_losses = query_losses(pool.models, g, cfg.signal_mode) if need_offline else None

    rep_seeds = [derive_seed(seed, "rep", r) for r in range(cfg.repetitions)]
    masks = [challenger_mask(g.n, cfg.train_fraction, s) for s in rep_seeds]
    jobs_list = [(cfg.target.arch, g, m, cfg.target.train_config(derive_seed(s, "target"))) for m, s in zip(masks, rep_seeds)]
    targets = train_many(jobs_list, jobs)

    rows, target_rows, alphas = [], [], {}
    for r, (s, m, tg) in enumerate(zip(rep_seeds, masks, targets)):
        tr, te, gap = generalization_gap(tg, g, m)
        target_rows.append((r, s, tr, te, gap))
        nodes = balanced_targets(m, cfg.eval_size, s)
        losses = query_losses([tg, *pool.models], g, cfg.signal_mode)
        sig = signal_matrix(tg, pool, g, nodes, m, cfg.signal_mode, losses=losses)
        probs = None
        for spec in cfg.attacks:
            ac = replace(spec.config, seed=s)
            if ac.method == "gbase" and ac.sampler == "zero_hop_mia" and probs is None:
                full = signal_matrix(tg, pool, g, range(g.n), m, "zero_hop",
                                     losses=losses if cfg.signal_mode == "zero_hop" else None)
                probs = attack_base(full, AttackConfig(lam=ac.lam)).scores
            if spec.auto_alpha and ac.mode == "offline":
                if spec.name not in alphas:
                    pp = None
                    if ac.sampler == "zero_hop_mia" and ac.method == "gbase":
                        pp = attack_base(_simulated_signal(pool, query_losses(pool.models, g, "zero_hop")),
                                         AttackConfig(lam=ac.lam)).scores
                    alphas[spec.name] = select_alpha(spec, pool, g, pool_losses, pp)
                ac = replace(ac, alpha=alphas[spec.name])
            if ac.method == "gbase":
                sv = attack_gbase(tg, pool, g, nodes, ac, probs=probs, member=m)
            else:
                sv = run_attack(sig, ac)
            roc, auc, t1, t01 = _metrics(sv)
            write_scores(sv, os.path.join(out_dir, f"scores_{spec.name}_rep{r}.csv"), label=spec.name)
            write_roc(roc, os.path.join(out_dir, f"roc_{spec.name}_rep{r}.csv"))
            rows.append((spec.name, ac.mode, auc, t1, t01, len(nodes), cfg.k, s))

    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["attack", "mode", "auc", "tpr_at_1pct", "tpr_at_0.1pct", "n", "k", "seed"], rows)
    agg = []
    for spec in cfg.attacks:
        sel = [r for r in rows if r[0] == spec.name]
        vals = np.array([r[2:5] for r in sel], dtype=np.float64)
        agg.append((spec.name, sel[0][1], *vals.mean(axis=0), *vals.std(axis=0), len(sel)))
    agg_rows = [(a[0], a[1], a[2], a[5], a[3], a[6], a[4], a[7], a[8]) for a in agg]
    _write_csv(os.path.join(out_dir, "summary_agg.csv"),
               ["attack", "mode", "auc_mean", "auc_std", "tpr_at_1pct_mean", "tpr_at_1pct_std",
                "tpr_at_0.1pct_mean", "tpr_at_0.1pct_std", "repetitions"], agg_rows)
    _write_csv(os.path.join(out_dir, "targets.csv"), ["rep", "seed", "train_acc", "test_acc", "gap"], target_rows)
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for k, v in config_fields(cfg):
            if k in ("out", "jobs"):
                continue
            fh.write(f"{k} = {v}\n")
        fh.write("eval_set = all nodes, balanced member/non-member subsample per repetition\n")
        for name, a in sorted(alphas.items()):
            fh.write(f"selected_alpha.{name} = {a}\n")
    return agg_rows


def run_mcmc_check(cfg, out_dir=None, jobs=1):
    """TV distance between the MCMC sample histogram and exact enumeration."""
    mc = cfg.mcmc
    seed = cfg.seed
    spec = SbmSpec(n=mc.n, num_classes=2, p_in=0.6, p_out=0.1, dim=4, radius=1.0, noise=1.0, seed=seed)
    g = gen_sbm_graph(spec)
    tcfg = replace(cfg.target, hidden=min(cfg.target.hidden, 8), lr=0.05, epochs=100)
    m = challenger_mask(g.n, 0.5, derive_seed(seed, "mcmc-target"))
    target = train(tcfg.arch, g, m, tcfg.train_config(derive_seed(seed, "mcmc-target")))
    if mc.identical:
        pool = [target] * mc.k
    else:
        k = mc.k + (mc.k % 2)
        pool = train_shadow_pool(g, tcfg.arch, tcfg.train_config(0), k, derive_seed(seed, "mcmc-pool"), jobs).models[: mc.k]
    v = mc.target_node
    exact = enumerate_exact(v, target, pool, g)
    sc = SamplerConfig(kind="mcmc", n_samples=mc.n_samples, flip_fraction=mc.flip_fraction,
                       burn_in=mc.burn_in, thinning=mc.thinning)
    masks, stats = sample_mcmc(sc, v, target, pool, g, stream(seed, "mcmc-chain"), return_stats=True)
    codes = np.array([mask_to_code(x, v) for x in masks])
    emp = np.bincount(codes, minlength=exact.size) / len(codes)
    tv = 0.5 * float(np.abs(emp - exact).sum())
    report = {
        "n": g.n, "k": len(pool), "target_node": v, "samples": len(codes), "burn_in": mc.burn_in,
        "thinning": mc.thinning, "accept_rate": stats["accept_rate"], "tv_distance": tv,
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "mcmc_report.txt"), "w") as fh:
            fh.writelines(f"{k} = {_fmt(x) if isinstance(x, float) else x}\n" for k, x in report.items())
        if mc.dump_masks:
            with open(os.path.join(out_dir, "mcmc_masks.txt"), "w") as fh:
                fh.write(format_masks(masks[: mc.dump_masks]) + "\n")
    return report


def run_threshold(cfg, out_dir=None, jobs=1):
    """Estimate low-FPR thresholds on simulated targets, then measure the
    realised FPR/TPR on freshly trained targets."""
    th = cfg.threshold
    g = build_graph(cfg)
    seed = cfg.seed
    pool_seed = derive_seed(seed, "threshold-pool")
    pool = train_shadow_pool(g, cfg.shadow.arch, cfg.shadow.train_config(pool_seed), th.k, pool_seed, jobs)
    pool_losses = query_losses(pool.models, g, "zero_hop")
    fresh_seeds = [derive_seed(seed, "fresh", r) for r in range(th.fresh_targets)]
    masks = [challenger_mask(g.n, cfg.train_fraction, s) for s in fresh_seeds]
    fresh = train_many(
        [(cfg.target.arch, g, m, cfg.target.train_config(derive_seed(s, "target"))) for m, s in zip(masks, fresh_seeds)],
        jobs,
    )
    fresh_sigs = [signal_matrix(t, pool, g, range(g.n), m) for t, m in zip(fresh, masks)]
    report, sims = [], []
    for method in th.attacks:
        ac = AttackConfig(method=method, seed=seed)
        est = estimate_threshold(pool, g, ac, th.fpr, th.simulated_targets, losses=pool_losses)
        sims.extend((method, i, t) for i, t in enumerate(est.thresholds.tolist()))
        for rule, tau in (("mean", est.mean), ("max", est.max)):
            rates = np.array([realized_rates(run_attack(sig, ac).scores, sig.member, tau) for sig in fresh_sigs])
            report.append((method, rule, tau, th.fpr, float(rates[:, 0].mean()), float(rates[:, 1].mean()),
                           float(est.thresholds.std())))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "threshold_report.csv"),
                   ["attack", "rule", "threshold", "target_fpr", "realized_fpr", "realized_tpr", "threshold_std"], report)
        _write_csv(os.path.join(out_dir, "simulated_thresholds.csv"), ["attack", "simulated_target", "threshold"], sims)
    return report


def run_attack_signals(path, attacks, out_dir):
    """Score an externally produced signals CSV with the i.i.d.-style attacks."""
    sig = read_signals(path)
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for spec in attacks:
        if spec.config.method == "gbase":
            raise ValueError("gbase needs a graph and models, not a signals file")
        sv = run_attack(sig, spec.config)
        write_scores(sv, os.path.join(out_dir, f"scores_{spec.name}.csv"), label=spec.name)
        results[spec.name] = sv
    return results
