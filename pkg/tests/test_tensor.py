import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gather_oracle, matmul_oracle, reduce_max_oracle

from edgeprof import Rng, gather_rows, matmul, reduce_max_axis, tensor
from edgeprof import _kernels
from edgeprof.errors import IndexRangeError, ShapeError


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        m = rng.uniform(-2, 2, (3, 3)).astype(np.float32)
        eye = np.eye(3, dtype=np.float32)
        assert np.array_equal(matmul(eye, m), m)
        assert np.array_equal(matmul(m, eye), m)

    def test_hand_example(self):
        a = tensor([[1, 2], [3, 4]])
        b = tensor([[1], [1]])
        assert matmul(a, b).tolist() == [[3], [7]]

    @pytest.mark.parametrize("shape", [(8, 8, 8), (5, 13, 7), (1, 9, 4),
                                       (19, 11, 300)])
    def test_matches_triple_loop_oracle(self, shape):
        # the last case exercises the row-blocked wide-output kernel
        m, p, q = shape
        rng = np.random.default_rng(m * 100 + p)
        a = rng.uniform(-3, 3, (m, p)).astype(np.float32)
        b = rng.uniform(-3, 3, (p, q)).astype(np.float32)
        assert matmul(a, b).tobytes() == matmul_oracle(a, b).tobytes()

    def test_shape_mismatch_names_both_shapes(self):
        a = tensor(np.zeros((2, 3)))
        b = tensor(np.zeros((4, 2)))
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            matmul(a, b)

    def test_rejects_wrong_dtype(self):
        with pytest.raises(ShapeError, match="float32"):
            matmul(np.zeros((2, 2)), np.zeros((2, 2), np.float32))

    @pytest.mark.parametrize("q", [21, 300])
    def test_parallel_mode_bit_identical(self, q):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (33, 17)).astype(np.float32)
        b = rng.uniform(-1, 1, (17, q)).astype(np.float32)
        serial = matmul(a, b)
        _kernels.set_thread_mode("parallel")
        try:
            parallel = matmul(a, b)
        finally:
            _kernels.set_thread_mode("single")
        assert serial.tobytes() == parallel.tobytes()

    def test_pure_and_reproducible(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(-1, 1, (6, 5)).astype(np.float32)
        b = rng.uniform(-1, 1, (5, 6)).astype(np.float32)
        a_copy, b_copy = a.copy(), b.copy()
        first = matmul(a, b)
        second = matmul(a, b)
        assert first.tobytes() == second.tobytes()
        assert np.array_equal(a, a_copy) and np.array_equal(b, b_copy)


class TestGatherRows:
    def test_hand_example(self):
        x = tensor([[5], [7]])
        idx = np.array([[1], [0]])
        assert gather_rows(x, idx).tolist() == [[[7]], [[5]]]

    def test_self_replication(self):
        x = tensor(np.arange(12).reshape(4, 3))
        idx = np.repeat(np.arange(4)[:, None], 5, axis=1)
        out = gather_rows(x, idx)
        for j in range(5):
            assert np.array_equal(out[:, j, :], x)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-1, 1, (10, 4)).astype(np.float32)
        idx = rng.integers(0, 10, (10, 6))
        assert gather_rows(x, idx).tobytes() == gather_oracle(x, idx).tobytes()

    def test_out_of_range_reports_position_and_value(self):
        x = tensor(np.zeros((3, 2)))
        idx = np.array([[0, 1], [2, 5]])
        with pytest.raises(IndexRangeError, match=r"\(1, 1\).*5.*\[0, 3\)"):
            gather_rows(x, idx)
        with pytest.raises(IndexRangeError):
            gather_rows(x, np.array([[-1]]))

    @settings(deadline=None, max_examples=25)
    @given(st.integers(min_value=1, max_value=12), st.randoms(use_true_random=False))
    def test_inverse_permutation_recovers_input(self, n, rnd):
        rng = np.random.default_rng(rnd.randrange(2**32))
        x = rng.uniform(-1, 1, (n, 3)).astype(np.float32)
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        gathered = gather_rows(x, perm[:, None])[:, 0, :]
        restored = gather_rows(gathered, inv[:, None])[:, 0, :]
        assert np.array_equal(restored, x)


class TestReduceMaxAxis:
    def test_hand_example(self):
        x = tensor([[1, 5], [3, 2]])
        assert reduce_max_axis(x, 0).tolist() == [3, 5]

    def test_single_element_axis_is_identity(self):
        x = tensor(np.arange(6).reshape(1, 6))
        assert np.array_equal(reduce_max_axis(x, 0), x[0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(-5, 5, (4, 7, 3)).astype(np.float32)
        assert reduce_max_axis(x, 1).tobytes() == reduce_max_oracle(x, 1).tobytes()

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_matches_numpy_on_3d(self, axis):
        rng = np.random.default_rng(60 + axis)
        x = rng.uniform(-5, 5, (6, 9, 4)).astype(np.float32)
        assert reduce_max_axis(x, axis).tobytes() == np.max(x, axis=axis).tobytes()

    def test_idempotent_over_replicated_axis(self):
        rng = np.random.default_rng(7)
        base = rng.uniform(-1, 1, (5, 4)).astype(np.float32)
        replicated = np.repeat(base[:, None, :], 6, axis=1)
        replicated = np.ascontiguousarray(replicated)
        assert np.array_equal(reduce_max_axis(replicated, 1), base)

    def test_empty_axis_is_an_error(self):
        x = np.zeros((3, 0, 2), np.float32)
        with pytest.raises(ShapeError, match="aggregate"):
            reduce_max_axis(x, 1)

    def test_invalid_axis(self):
        with pytest.raises(ShapeError, match="axis"):
            reduce_max_axis(tensor([[1.0]]), 2)


def test_ops_keep_values_finite():
    rng = np.random.default_rng(8)
    a = rng.uniform(-10, 10, (16, 16)).astype(np.float32)
    b = rng.uniform(-10, 10, (16, 16)).astype(np.float32)
    chained = reduce_max_axis(gather_rows(matmul(a, b), np.arange(16)[:, None]), 1)
    assert np.isfinite(chained).all()


class TestRng:
    def test_same_seed_same_stream(self):
        assert Rng(123).uniform(0, 1, (8,)).tolist() == Rng(123).uniform(0, 1, (8,)).tolist()

    def test_different_seeds_differ(self):
        assert Rng(1).uniform(0, 1, (8,)).tolist() != Rng(2).uniform(0, 1, (8,)).tolist()

    def test_golden_draws_seed_42(self):
        # Frozen stream values; a generator change would silently break
        # every committed fixture, so pin the first draws exactly.
        draws = Rng(42).uniform(-1.0, 1.0, (4,))
        expected = np.array([0.5479121208190918, -0.12224312126636505,
                             0.7171958684921265, 0.39473605155944824], np.float32)
        assert draws.tobytes() == expected.tobytes()

    def test_draws_are_float32_in_range(self):
        draws = Rng(9).uniform(-2.0, 3.0, (128,))
        assert draws.dtype == np.float32
        assert float(draws.min()) >= -2.0 and float(draws.max()) <= 3.0

    def test_seed_domain(self):
        with pytest.raises(ValueError):
            Rng(-1)
        with pytest.raises(ValueError):
            Rng(2**64)
        Rng(2**64 - 1)
