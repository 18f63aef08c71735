import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miaudit.graph import full_adjacency, normalized_adjacency
from miaudit.models import node_losses
from miaudit.shadow import (
    ShadowPool,
    SignalMatrix,
    SignalParseError,
    filter_out_models,
    half_splits,
    query_losses,
    read_signals,
    signal_matrix,
    train_many,
    train_shadow_pool,
    write_signals,
)
from _helpers import random_signal
from conftest import FAST


class TestHalfSplits:
    @given(st.integers(2, 60), st.sampled_from([2, 4, 6, 8, 16]), st.integers(0, 2**32))
    def test_each_node_in_exactly_half(self, n, k, seed):
        bits = half_splits(n, k, seed)
        assert bits.shape == (k, n)
        np.testing.assert_array_equal(bits.sum(axis=0), k // 2)

    def test_pairs_are_complements(self):
        bits = half_splits(11, 6, 0)
        for j in range(3):
            np.testing.assert_array_equal(bits[2 * j], ~bits[2 * j + 1])

    @pytest.mark.parametrize("k", [0, 1, 3, 7])
    def test_rejects_odd_or_small_k(self, k):
        with pytest.raises(ValueError):
            half_splits(10, k, 0)


class TestPool:
    def test_shape_and_balance(self, tiny_setup):
        g, _, _, pool = tiny_setup
        assert pool.k == 4 and pool.in_bits.shape == (4, g.n)
        np.testing.assert_array_equal(pool.in_bits.sum(0), 2)

    def test_deterministic(self, tiny_graph):
        a = train_shadow_pool(tiny_graph, "gcn2", FAST, 2, seed=5)
        b = train_shadow_pool(tiny_graph, "gcn2", FAST, 2, seed=5)
        assert all(x == y for x, y in zip(a.models, b.models))

    def test_parallel_matches_serial(self, tiny_graph):
        bits = half_splits(tiny_graph.n, 2, 0)
        jobs = [("mlp1", tiny_graph, b, FAST) for b in bits]
        assert all(x == y for x, y in zip(train_many(jobs, 1), train_many(jobs, 2)))

    def test_filter_out_models(self, tiny_setup):
        _, _, _, pool = tiny_setup
        for v in range(pool.in_bits.shape[1]):
            out = filter_out_models(pool, v)
            assert len(out) == 2 and all(not pool.in_bits[k, v] for k in out)
        with pytest.raises(IndexError):
            filter_out_models(pool, 99)

    def test_subset(self, tiny_setup):
        pool = tiny_setup[3].subset([1, 3])
        assert pool.k == 2 and pool.in_bits.shape[0] == 2

    def test_bad_bits(self):
        with pytest.raises(ValueError):
            ShadowPool([None], np.zeros((2, 3)))


class TestSignals:
    @pytest.mark.parametrize("mode", ["zero_hop", "graph"])
    def test_query_losses(self, tiny_setup, mode):
        g, _, target, pool = tiny_setup
        ahat = None if mode == "zero_hop" else normalized_adjacency(full_adjacency(g))
        got = query_losses([target, *pool.models], g, mode)
        expected = np.stack([node_losses(p, g, ahat) for p in [target, *pool.models]], axis=1)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_bad_mode(self, tiny_setup):
        with pytest.raises(ValueError):
            query_losses(tiny_setup[3].models, tiny_setup[0], "two_hop")

    def test_signal_matrix_columns(self, tiny_setup):
        g, mask, target, pool = tiny_setup
        sig = signal_matrix(target, pool, g, [5, 1, 3], mask)
        np.testing.assert_array_equal(sig.sample_ids, [1, 3, 5])
        np.testing.assert_array_equal(sig.member, mask[[1, 3, 5]])
        np.testing.assert_array_equal(sig.in_bits, pool.in_bits[:, [1, 3, 5]].T)
        np.testing.assert_allclose(sig.target_loss, node_losses(target, g)[[1, 3, 5]])

    def test_inconsistent_shapes(self):
        with pytest.raises(ValueError):
            SignalMatrix(np.arange(3), np.zeros(2, bool), np.zeros(3), np.zeros((3, 2)), np.zeros((3, 2)))

    def test_csv_round_trip(self, tmp_path, rng):
        sig = random_signal(rng, n=20, k=6)
        write_signals(sig, tmp_path / "s.csv")
        back = read_signals(tmp_path / "s.csv")
        for name in ("sample_ids", "member", "target_loss", "shadow_loss", "in_bits"):
            np.testing.assert_array_equal(getattr(back, name), getattr(sig, name))

    @pytest.mark.parametrize(
        "text,line",
        [
            ("", 1),
            ("sample_id,member,target_loss,sh0,in0\n0,1,0.5\n", 2),
            ("sample_id,member,target_loss,sh0,in0\n0,1,0.5,0.2,1\n1,2,0.5,0.2,1\n", 3),
            ("sample_id,member,target_loss,sh0,in0\n0,1,abc,0.2,1\n", 2),
            ("sample_id,member,loss,sh0,in0\n", 1),
        ],
    )
    def test_parse_errors_carry_line(self, tmp_path, text, line):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(SignalParseError, match=f":{line}:"):
            read_signals(path)
