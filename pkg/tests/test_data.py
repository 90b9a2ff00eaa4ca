import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_admm.core import InvalidProblemError
from consensus_admm.data import (
    DataError,
    SyntheticDesign,
    gen_synthetic,
    load_csv,
    read_numeric_csv,
    split_train_test,
    standardize,
    true_coefficients,
)


class TestDesign:
    def test_decay_first_coefficient(self):
        beta = true_coefficients(SyntheticDesign(10, 5))
        # oracle: -exp(-1/20)
        assert beta[0] == pytest.approx(-0.951229424500714, abs=1e-12)
        assert beta[1] == pytest.approx(math.exp(-3 / 20))

    def test_fused_blocks(self):
        d = SyntheticDesign(50, 160, regime="fused_blocks", seed=3)
        beta = true_coefficients(d).reshape(80, 2)
        nonzero = np.any(beta != 0, axis=1)
        assert nonzero.sum() == 10
        np.testing.assert_array_equal(beta[:, 0], beta[:, 1])
        assert np.all(np.abs(beta[nonzero, 0]) <= 3)

    def test_group_sparse(self):
        d = SyntheticDesign(50, 160, regime="group_sparse", seed=4)
        beta = true_coefficients(d).reshape(80, 2)
        active = np.any(beta != 0, axis=1)
        assert active.sum() == 10
        assert np.all(np.abs(beta[active]) >= 1.0)

    def test_group_labels(self):
        d = SyntheticDesign(5, 6, regime="group_sparse", n_groups=3, n_active=1)
        np.testing.assert_array_equal(d.group_labels(), [1, 1, 2, 2, 3, 3])

    @pytest.mark.parametrize("kw", [dict(rho=1.5), dict(rho=-0.1), dict(rho=1.0), dict(snr=0.0),
                                    dict(regime="banana"), dict(n=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidProblemError):
            SyntheticDesign(**{"n": 10, "p": 80, **kw})

    def test_non_divisible_p(self):
        with pytest.raises(InvalidProblemError, match="divisible"):
            SyntheticDesign(10, 100, regime="fused_blocks")
        with pytest.raises(InvalidProblemError):
            SyntheticDesign(10, 160, regime="group_sparse", n_active=81)


class TestGenerate:
    def test_deterministic(self):
        d = SyntheticDesign(40, 80, regime="fused_blocks", seed=11)
        a, b = gen_synthetic(d), gen_synthetic(d)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        other = gen_synthetic(SyntheticDesign(40, 80, regime="fused_blocks", seed=12))
        assert not np.array_equal(a[0], other[0])

    def test_independent_columns(self):
        n = 4000
        X, _, _ = gen_synthetic(SyntheticDesign(n, 2, rho=0.0, seed=1))
        assert abs(np.corrcoef(X.T)[0, 1]) <= 3 / math.sqrt(n)

    def test_equicorrelation(self):
        X, _, _ = gen_synthetic(SyntheticDesign(10000, 20, rho=0.5, seed=2))
        C = np.corrcoef(X.T)
        off = C[~np.eye(20, dtype=bool)]
        assert abs(off.mean() - 0.5) <= 0.05

    @pytest.mark.parametrize("regime, p", [("elastic_net_decay", 20), ("group_sparse", 80)])
    def test_empirical_snr(self, regime, p):
        d = SyntheticDesign(20000, p, rho=0.5, regime=regime, seed=5)
        X, y, beta = gen_synthetic(d)
        signal = X @ beta
        noise = y - signal
        ratio = signal.var() / noise.var()
        assert 0.8 <= ratio <= 1.25

    def test_shapes(self):
        X, y, beta = gen_synthetic(SyntheticDesign(7, 3))
        assert X.shape == (7, 3) and y.shape == (7,) and beta.shape == (3,)


def _write(path, text):
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_response_last(self, tmp_path):
        p = _write(tmp_path / "d.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
        X, y, names = load_csv(p)
        assert X.shape == (3, 2)
        np.testing.assert_array_equal(y, [3, 6, 9])
        assert names == ["a", "b"]

    def test_response_by_name_and_delimiter(self, tmp_path):
        p = _write(tmp_path / "d.csv", "y;a\n1;2\n3;4\n")
        X, y, names = load_csv(p, "y", ";")
        np.testing.assert_array_equal(X, [[2], [4]])
        np.testing.assert_array_equal(y, [1, 3])

    def test_non_numeric_names_line(self, tmp_path):
        rows = ["a,y"] + [f"{i},{i}" for i in range(5)] + ["x,1"]
        p = _write(tmp_path / "d.csv", "\n".join(rows) + "\n")
        with pytest.raises(DataError, match="line 7"):
            load_csv(p)

    def test_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path / "d.csv", ""))
        with pytest.raises(DataError):
            load_csv(_write(tmp_path / "h.csv", "a,y\n"))

    def test_ragged(self, tmp_path):
        with pytest.raises(DataError, match="line 3"):
            load_csv(_write(tmp_path / "d.csv", "a,y\n1,2\n1,2,3\n"))

    def test_missing_response(self, tmp_path):
        p = _write(tmp_path / "d.csv", "a,y\n1,2\n")
        with pytest.raises(DataError, match="not found"):
            load_csv(p, "z")
        with pytest.raises(DataError, match="out of range"):
            load_csv(p, 5)

    def test_read_numeric_header(self, tmp_path):
        A, header = read_numeric_csv(_write(tmp_path / "d.csv", " a , b \n1,2\n"))
        assert header == ["a", "b"]
        np.testing.assert_array_equal(A, [[1, 2]])


class TestStandardize:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.X = rng.standard_normal((30, 4)) * [1, 2, 3, 4] + [1, -1, 5, 0]
        self.y = rng.standard_normal(30) + 3

    def test_none_is_identity(self):
        Xs, ys, rec = standardize(self.X, self.y)
        np.testing.assert_array_equal(Xs, self.X)
        np.testing.assert_array_equal(ys, self.y)

    def test_center(self):
        Xs, ys, _ = standardize(self.X, self.y, "center")
        np.testing.assert_allclose(Xs.mean(0), 0, atol=1e-12)
        assert abs(ys.mean()) < 1e-12

    def test_zscore_and_constant_column(self):
        X = self.X.copy()
        X[:, 2] = 7.0
        Xs, _, rec = standardize(X, self.y, "zscore")
        sd = Xs.std(0, ddof=1)
        np.testing.assert_allclose(sd[[0, 1, 3]], 1, atol=1e-10)
        assert rec.constant_columns == [2]
        assert rec.x_scale[2] == 1.0

    def test_back_mapping_preserves_predictions(self):
        Xs, ys, rec = standardize(self.X, self.y, "zscore")
        b = np.array([0.5, -1.0, 2.0, 0.1])
        beta, c = rec.coefficients_to_original(b)
        np.testing.assert_allclose(self.X @ beta + c, Xs @ b + rec.y_mean, atol=1e-10)

    def test_zscore_needs_two_rows(self):
        with pytest.raises(DataError):
            standardize(np.ones((1, 2)), np.ones(1), "zscore")

    def test_unknown_mode(self):
        with pytest.raises(InvalidProblemError):
            standardize(self.X, self.y, "robust")


class TestSplit:
    def test_prefix(self):
        X = np.arange(20.0).reshape(10, 2)
        y = np.arange(10.0)
        (Xa, ya), (Xb, yb) = split_train_test(X, y, 7)
        assert Xa.shape == (7, 2) and Xb.shape == (3, 2)
        np.testing.assert_array_equal(ya, np.arange(7))
        (_, _), (Xc, yc) = split_train_test(X, y, 9)
        assert yc.shape == (1,)

    @pytest.mark.parametrize("k", [0, 10, -1])
    def test_out_of_range(self, k):
        with pytest.raises(DataError):
            split_train_test(np.ones((10, 1)), np.ones(10), k)

    @given(n=st.integers(2, 40), data=st.data())
    @settings(max_examples=30)
    def test_round_trip(self, n, data):
        k = data.draw(st.integers(1, n - 1))
        X = np.arange(3.0 * n).reshape(n, 3)
        y = np.arange(float(n))
        (Xa, ya), (Xb, yb) = split_train_test(X, y, k)
        np.testing.assert_array_equal(np.vstack([Xa, Xb]), X)
        np.testing.assert_array_equal(np.concatenate([ya, yb]), y)
