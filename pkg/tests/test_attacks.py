import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from miaudit.attacks import (
    AttackConfig,
    _graph_signals,
    attack_base,
    attack_gbase,
    attack_lira,
    attack_mca,
    attack_rmia,
    base_score,
    graph_signal_S,
    log_mean_exp,
    mca_score,
    run_attack,
    write_scores,
)
from miaudit.graph import masked_adjacency, normalized_adjacency
from miaudit.metrics import check_equivalence
from miaudit.models import LossEvaluator, node_losses
from miaudit.shadow import SignalMatrix, signal_matrix, train_shadow_pool
from _helpers import random_signal
from conftest import FAST

finite_losses = st.floats(0.0, 50.0, allow_nan=False)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestBaseScore:
    def test_scalar_formula(self):
        tl, sl, lam, alpha = 0.3, np.array([0.1, 0.9, 2.0]), 0.3, 0.7
        expected = _sigmoid(-tl - alpha * math.log(np.mean(np.exp(-sl))) + math.log(lam / (1 - lam)))
        assert base_score(tl, sl, lam, alpha) == pytest.approx(expected, rel=1e-14)

    def test_equal_losses_give_prior(self):
        assert base_score(0.4, np.full(5, 0.4), lam=0.2) == pytest.approx(0.2, rel=1e-14)

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.1])
    def test_bad_lambda(self, lam):
        with pytest.raises(ValueError):
            base_score(0.1, [0.1], lam)

    def test_empty_shadows(self):
        with pytest.raises(ValueError):
            base_score(0.1, [])

    @given(finite_losses, finite_losses, st.lists(finite_losses, min_size=1, max_size=8))
    def test_monotone_in_target_loss(self, a, b, sl):
        lo, hi = sorted((a, b))
        sl = np.array(sl)
        assert base_score(lo, sl) >= base_score(hi, sl)

    def test_log_mean_exp_extreme(self):
        assert log_mean_exp(np.array([-1000.0, -1000.0]))[0] == pytest.approx(-1000.0)

    def test_log_mean_exp_mask(self):
        a = np.array([[0.0, 5.0, 1.0]])
        assert log_mean_exp(a, np.array([[True, False, True]]))[0] == pytest.approx(np.log((1 + np.e) / 2))
        with pytest.raises(ValueError):
            log_mean_exp(a, np.zeros((1, 3), bool))


class TestSignalAttacks:
    def test_attack_base_matches_scalar(self, rng):
        sig = random_signal(rng, n=30, k=6)
        sv = attack_base(sig, AttackConfig(lam=0.4))
        expected = [base_score(sig.target_loss[i], sig.shadow_loss[i], 0.4) for i in range(sig.n)]
        np.testing.assert_allclose(sv.scores, expected, rtol=1e-13)
        assert sv.is_probability

    def test_offline_uses_only_out_models(self, rng):
        sig = random_signal(rng, n=20, k=6)
        cfg = AttackConfig(mode="offline", alpha=0.6)
        a = attack_base(sig, cfg).scores
        noisy = np.where(sig.in_bits, sig.shadow_loss + 3.0, sig.shadow_loss)
        b = attack_base(SignalMatrix(sig.sample_ids, sig.member, sig.target_loss, noisy, sig.in_bits), cfg).scores
        np.testing.assert_array_equal(a, b)
        for i in range(sig.n):
            out = sig.shadow_loss[i][~sig.in_bits[i]]
            assert a[i] == pytest.approx(base_score(sig.target_loss[i], out, 0.5, 0.6), rel=1e-13)

    def test_offline_alpha_zero_is_loss_attack(self, rng):
        sig = random_signal(rng, n=20)
        s = attack_base(sig, AttackConfig(mode="offline", alpha=0.0)).scores
        np.testing.assert_allclose(s, 1 / (1 + np.exp(sig.target_loss)), rtol=1e-13)

    def test_online_ignores_alpha(self, rng):
        sig = random_signal(rng, n=20)
        np.testing.assert_array_equal(
            attack_base(sig, AttackConfig(alpha=0.2)).scores, attack_base(sig, AttackConfig(alpha=1.0)).scores
        )

    @pytest.mark.parametrize("lam", [0.5, 0.1])
    def test_mca_chain(self, rng, lam):
        sig = random_signal(rng, n=40)
        base = attack_base(sig, AttackConfig(lam=lam)).scores
        mca = attack_mca(sig, AttackConfig()).scores
        prior = math.log(lam / (1 - lam))
        np.testing.assert_allclose(np.log(base) - np.log1p(-base) - prior, np.log(mca), atol=1e-10)
        assert mca_score(0.2, [0.2, 0.2]) == pytest.approx(1.0)

    def test_rmia_pairwise_oracle(self, rng):
        sig = random_signal(rng, n=40, ties=True)
        for gamma in (0.5, 1.0, 2.0):
            sv = attack_rmia(sig, AttackConfig(method="rmia", gamma=gamma))
            mca = attack_mca(sig, AttackConfig()).scores
            expected = [(np.log(mca[i]) - np.log(mca) >= np.log(gamma) - 1e-12).mean() for i in range(sig.n)]
            np.testing.assert_allclose(sv.scores, expected)

    def test_rmia_gamma_zero(self, rng):
        sv = attack_rmia(random_signal(rng), AttackConfig(method="rmia", gamma=0.0))
        assert np.all(sv.scores == 1.0)

    def test_rmia_population(self, rng):
        sig = random_signal(rng, n=30)
        sv = attack_rmia(sig, AttackConfig(method="rmia"), population=[0])
        assert set(np.unique(sv.scores)) <= {0.0, 1.0}
        half = attack_rmia(sig, AttackConfig(method="rmia", population_fraction=0.5))
        assert half.info["population"] == 15
        with pytest.raises(ValueError):
            attack_rmia(sig, AttackConfig(method="rmia"), population=[])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_base_rmia_equivalence(self, seed):
        sig = random_signal(np.random.default_rng(seed), n=60, k=4, ties=True)
        ok, worst = check_equivalence(attack_base(sig, AttackConfig()), attack_rmia(sig, AttackConfig(method="rmia")))
        assert ok and worst == 0.0

    def test_lira_online_oracle(self, rng):
        sig = random_signal(rng, n=10, k=8)
        sv = attack_lira(sig, AttackConfig(method="lira"))

        def phi(loss):
            p = np.clip(np.exp(-loss), 1e-12, 1 - 1e-7)
            return np.log(p / (1 - p))

        for i in range(sig.n):
            ins, outs = phi(sig.shadow_loss[i][sig.in_bits[i]]), phi(sig.shadow_loss[i][~sig.in_bits[i]])
            t = phi(sig.target_loss[i])
            expected = norm.logpdf(t, ins.mean(), max(ins.std(), 1e-4)) - norm.logpdf(t, outs.mean(), max(outs.std(), 1e-4))
            assert sv.scores[i] == pytest.approx(expected, rel=1e-9)

    def test_lira_offline_higher_for_lower_loss(self, rng):
        sig = random_signal(rng, n=5, k=6)
        lo = SignalMatrix(sig.sample_ids, sig.member, np.full(5, 0.01), sig.shadow_loss, sig.in_bits)
        hi = SignalMatrix(sig.sample_ids, sig.member, np.full(5, 5.0), sig.shadow_loss, sig.in_bits)
        cfg = AttackConfig(method="lira", mode="offline")
        assert np.all(attack_lira(lo, cfg).scores > attack_lira(hi, cfg).scores)

    def test_lira_variance_floor(self):
        sig = SignalMatrix(np.arange(1), [True], [0.1], np.full((1, 4), 0.5), [[1, 1, 0, 0]])
        s = attack_lira(sig, AttackConfig(method="lira", lira_var_floor=1e-2)).scores
        assert np.isfinite(s).all()

    def test_lira_needs_two_out_models(self):
        sig = SignalMatrix(np.arange(1), [True], [0.1], np.full((1, 2), 0.5), [[1, 0]])
        with pytest.raises(ValueError):
            attack_lira(sig, AttackConfig(method="lira", mode="offline"))

    def test_run_attack_dispatch(self, rng):
        sig = random_signal(rng)
        for m in ("base", "rmia", "lira", "mca"):
            assert run_attack(sig, AttackConfig(method=m)).method == m
        with pytest.raises(ValueError):
            run_attack(sig, AttackConfig(method="gbase"))

    @pytest.mark.parametrize(
        "kwargs", [{"method": "x"}, {"mode": "semi"}, {"lam": 1.0}, {"alpha": 1.5}, {"gamma": -1}, {"n_masks": 0}]
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            AttackConfig(**kwargs).validate()

    def test_write_scores(self, tmp_path, rng):
        sig = random_signal(rng, n=3)
        write_scores(attack_base(sig, AttackConfig()), tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "sample_id,member,score,method,mode" and len(lines) == 4
        assert lines[1].endswith(",base,online")


class TestGraphSignal:
    def test_matches_dense_definition(self, small_setup):
        g, _, target, _ = small_setup
        rng = np.random.default_rng(1)
        for v in (0, 7, 21):
            mt = rng.random(g.n) < 0.6
            mt[v] = False
            m = mt.copy()
            m[v] = True
            lw = node_losses(target, g, normalized_adjacency(masked_adjacency(g, m)))
            lo = node_losses(target, g, normalized_adjacency(masked_adjacency(g, mt)))
            a = np.zeros((g.n, g.n), int)
            for u, w in masked_adjacency(g, m).edges:
                a[u, w] = a[w, u] = 1
            reach = (np.linalg.matrix_power(a + np.eye(g.n, dtype=int), 2)[v] > 0) & m
            reach[v] = False
            expected = lw[v] + (lw[reach] - lo[reach]).sum()
            assert graph_signal_S(target, g, v, mt) == pytest.approx(expected, rel=1e-12)

    def test_batched_matches_single(self, small_setup):
        g, _, target, pool = small_setup
        ev = LossEvaluator([target, *pool.models], g)
        mt = np.arange(g.n) % 3 == 0
        mt[4] = False
        got = _graph_signals(ev, g, 4, mt, 2)
        expected = [graph_signal_S(p, g, 4, mt) for p in [target, *pool.models]]
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_rejects_target_in_mask(self, small_setup):
        g, _, target, _ = small_setup
        with pytest.raises(ValueError):
            graph_signal_S(target, g, 0, np.ones(g.n, bool))


class TestGbase:
    @pytest.mark.parametrize("sampler", ["model_independent", "zero_hop_mia"])
    @pytest.mark.parametrize("mode", ["online", "offline"])
    def test_edgeless_reduces_to_base(self, small_iid, sampler, mode):
        g = small_iid
        mask = np.arange(g.n) < g.n // 2
        from miaudit.models import train

        target = train("mlp1", g, mask, FAST)
        pool = train_shadow_pool(g, "gcn2", FAST, 4, seed=2)
        sig = signal_matrix(target, pool, g, range(g.n), mask)
        cfg = AttackConfig(method="gbase", mode=mode, alpha=0.7, sampler=sampler, n_masks=2)
        probs = attack_base(sig, AttackConfig()).scores
        gb = attack_gbase(target, pool, g, range(g.n), cfg, probs=probs, member=mask)
        base = attack_base(sig, AttackConfig(mode=mode, alpha=0.7))
        np.testing.assert_allclose(gb.scores, base.scores, atol=1e-12)
        np.testing.assert_array_equal(gb.member, mask)

    def test_deterministic_and_bounded(self, small_setup):
        g, mask, target, pool = small_setup
        cfg = AttackConfig(method="gbase", n_masks=2, seed=5)
        a = attack_gbase(target, pool, g, [3, 1, 2], cfg)
        b = attack_gbase(target, pool, g, [1, 2, 3], cfg)
        np.testing.assert_array_equal(a.scores, b.scores)
        np.testing.assert_array_equal(a.sample_ids, [1, 2, 3])
        assert np.all((a.scores > 0) & (a.scores < 1))

    def test_mcmc_sampler_runs(self, tiny_setup):
        g, mask, target, pool = tiny_setup
        from miaudit.sampling import SamplerConfig

        sc = SamplerConfig(kind="mcmc", n_samples=2, burn_in=5, thinning=2)
        sv = attack_gbase(target, pool, g, [0, 1], AttackConfig(method="gbase", sampler="mcmc"), sampler=sc)
        assert sv.info["sampler"] == "mcmc" and len(sv) == 2

    def test_offline_needs_out_models(self, small_setup):
        g, _, target, pool = small_setup
        one = pool.subset([0])
        v = int(np.flatnonzero(one.in_bits[0])[0])
        with pytest.raises(ValueError):
            attack_gbase(target, one, g, [v], AttackConfig(method="gbase", mode="offline"))


def test_gbase_converges_to_enumerated_expectation(tiny_setup):
    """Model-independent sampling: the Monte Carlo mean approaches the exact mask-weighted average."""
    from scipy.special import expit

    from miaudit.sampling import code_to_mask

    g, _, target, pool = tiny_setup
    lam = 0.3
    ev = LossEvaluator([target, *pool.models], g)
    nodes = [0, 3, 6]
    exact = []
    for v in nodes:
        total = 0.0
        for code in range(1 << (g.n - 1)):
            mt = code_to_mask(code, g.n, v)
            s = _graph_signals(ev, g, v, mt, 2)
            logit = -s[0] - log_mean_exp(-s[1:])[0] + math.log(lam / (1 - lam))
            k = int(mt.sum())
            total += lam**k * (1 - lam) ** (g.n - 1 - k) * expit(logit)
        exact.append(total)
    cfg = AttackConfig(method="gbase", lam=lam, n_masks=10_000, seed=1)
    sampled = attack_gbase(target, pool, g, nodes, cfg).scores
    np.testing.assert_allclose(sampled, exact, atol=0.02)
