import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datacollab.errors import DimensionError, RankError
from datacollab.mappers import Mapper, apply, fit_mapper, fit_pca, fit_random_projection, linear_explicit


def captured_variance(p, x):
    xc = x - x.mean(axis=1, keepdims=True)
    return float(np.sum((p @ xc) ** 2))


class TestPca:
    def test_single_axis_gets_positive_e1(self):
        x = np.zeros((3, 6))
        x[0] = [-2.0, -1.0, 0.5, 1.0, 3.0, 4.0]
        x[1] = 7.0
        f = fit_pca(x, 1)
        np.testing.assert_allclose(f.projection, [[1.0, 0.0, 0.0]], atol=1e-12)

    def test_full_dimension_is_invertible(self):
        x = np.random.default_rng(3).standard_normal((3, 40))
        f = fit_pca(x, 3)
        p = f.projection
        np.testing.assert_allclose(p @ p.T, np.eye(3), atol=1e-10)
        xc = x - f.mean[:, None]
        np.testing.assert_allclose(p.T @ p @ xc, xc, atol=1e-8)

    def test_two_clusters_keep_their_distance(self):
        r = np.random.default_rng(21)
        a = r.normal(0.0, 0.3, (4, 30))
        b = r.normal(0.0, 0.3, (4, 30))
        b[0] += 5.0
        x = np.hstack([a, b])
        f = fit_pca(x, 1)
        original = np.linalg.norm(a.mean(axis=1) - b.mean(axis=1))
        fa, fb = apply(f, a), apply(f, b)
        projected = abs(fa.mean() - fb.mean())
        assert projected >= 0.9 * original

    def test_output_is_centred_on_training_data(self):
        x = np.random.default_rng(5).standard_normal((6, 25)) + 3.0
        f = fit_pca(x, 4)
        np.testing.assert_allclose(apply(f, x).mean(axis=1), 0.0, atol=1e-10)

    def test_orthonormal_rows(self, rng):
        f = fit_pca(rng.standard_normal((8, 30)), 5)
        np.testing.assert_allclose(f.projection @ f.projection.T, np.eye(5), atol=1e-10)

    def test_out_dim_too_large(self, rng):
        with pytest.raises(DimensionError):
            fit_pca(rng.standard_normal((3, 10)), 4)
        with pytest.raises(DimensionError):
            fit_pca(rng.standard_normal((5, 3)), 4)

    def test_needs_two_samples(self):
        with pytest.raises(DimensionError):
            fit_pca(np.ones((3, 1)), 1)

    def test_zero_variance(self):
        with pytest.raises(RankError):
            fit_pca(np.ones((3, 5)), 1)

    def test_rank_below_out_dim(self):
        x = np.zeros((4, 10))
        x[0] = np.arange(10.0)
        with pytest.raises(RankError):
            fit_pca(x, 2)

    @pytest.mark.parametrize("seed", range(5))
    def test_beats_random_projections(self, seed):
        r = np.random.default_rng(seed)
        m, n, k = 4, 20, 2
        x = r.standard_normal((m, n)) * np.array([[3.0], [1.5], [1.0], [0.2]])
        best = captured_variance(fit_pca(x, k).projection, x)
        for _ in range(1000):
            q, _ = np.linalg.qr(r.standard_normal((m, k)))
            assert best >= captured_variance(q.T, x) - 1e-12


class TestRandomProjection:
    def test_deterministic(self):
        assert fit_random_projection(7, 3, 99) == fit_random_projection(7, 3, 99)

    def test_full_dimension_preserves_distances(self, rng):
        f = fit_random_projection(5, 5, 4)
        x = rng.standard_normal((5, 8))
        y = apply(f, x)
        dx = np.linalg.norm(x[:, :, None] - x[:, None, :], axis=0)
        dy = np.linalg.norm(y[:, :, None] - y[:, None, :], axis=0)
        np.testing.assert_allclose(dy, dx, atol=1e-10)

    def test_seeds_differ(self):
        p1 = fit_random_projection(6, 3, 1).projection
        p2 = fit_random_projection(6, 3, 2).projection
        assert np.max(np.abs(p1 - p2)) > 1e-3

    def test_rows_orthonormal_and_uncentred(self):
        f = fit_random_projection(9, 4, 0)
        np.testing.assert_allclose(f.projection @ f.projection.T, np.eye(4), atol=1e-12)
        assert not f.mean.any()

    def test_out_dim_too_large(self):
        with pytest.raises(DimensionError):
            fit_random_projection(3, 4, 0)


class TestApply:
    def test_identity(self, rng):
        x = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(apply(linear_explicit(np.eye(4)), x), x)

    def test_single_column(self, rng):
        f = fit_random_projection(5, 2, 8)
        x = rng.standard_normal((5, 4))
        assert apply(f, x[:, 2]).tobytes() == apply(f, x[:, 2:3]).tobytes()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply(linear_explicit(np.eye(3)), np.ones((4, 2)))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30), split=st.integers(1, 29), kind=st.sampled_from(["pca", "random-projection"]))
    def test_column_split_is_exact(self, seed, n, split, kind):
        split = min(split, n - 1)
        r = np.random.default_rng(seed)
        x = r.standard_normal((6, n)) * 10.0 ** r.integers(-3, 4)
        f = fit_mapper(kind, r.standard_normal((6, 12)), 3, seed=seed)
        whole = apply(f, x)
        parts = np.hstack([apply(f, x[:, :split]), apply(f, x[:, split:])])
        assert whole.tobytes() == parts.tobytes()


def test_parties_produce_different_representations(rng):
    x = rng.standard_normal((6, 30))
    anc = rng.standard_normal((6, 10))
    f1 = fit_pca(x[:, :15], 3)
    f2 = fit_pca(x[:, 15:], 3)
    f3 = fit_random_projection(6, 3, 7)
    outs = [apply(f, anc) for f in (f1, f2, f3)]
    for i in range(3):
        for j in range(i + 1, 3):
            assert not np.allclose(outs[i], outs[j])


def test_array_roundtrip(tmp_path):
    f = fit_random_projection(5, 2, 3)
    np.savez(tmp_path / "m.npz", **f.to_arrays())
    with np.load(tmp_path / "m.npz") as data:
        assert Mapper.from_arrays(data) == f
