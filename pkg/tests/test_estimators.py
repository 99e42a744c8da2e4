import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import kendalltau

from kspec.estimators import (
    HoeffdingDecomposition,
    KendallCorrelation,
    PearsonCorrelation,
    SpearmanCorrelation,
    frobenius_gap,
    hoeffding_pieces,
    kendall_matrix_fast,
    kendall_matrix_naive,
    pearson_matrix,
    read_kspc,
    read_matrix_csv,
    spearman_matrix,
    write_kspc,
    write_matrix_csv,
)
from kspec.models import ContractError, CorrelationModel, sigma_triple
from kspec.sampling import monotone_transform, sample_mvn


def test_fast_matches_naive_with_ties():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 4, size=(25, 6)).astype(float)
    np.testing.assert_array_equal(kendall_matrix_fast(x), kendall_matrix_naive(x))


def test_tau_a_against_scipy_without_ties():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 3))
    k = kendall_matrix_fast(x)
    for i in range(3):
        for j in range(3):
            assert k[i, j] == pytest.approx(kendalltau(x[:, i], x[:, j]).statistic, abs=1e-14)


def test_hand_example():
    # pairs (1,2),(1,3),(2,3): column 0 signs -,-,-; column 1 signs +,-,-
    x = np.array([[0.0, 0.0], [1.0, -1.0], [2.0, 5.0]])
    k = kendall_matrix_fast(x)
    assert k[0, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert k[0, 0] == k[1, 1] == 1.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.integers(1, 5)),
              elements=st.integers(-3, 3).map(float)))
def test_kendall_invariants(x):
    k = kendall_matrix_fast(x)
    np.testing.assert_array_equal(k, k.T)
    np.testing.assert_array_equal(k, kendall_matrix_naive(x))
    assert np.all(np.abs(k) <= 1.0)
    assert np.linalg.eigvalsh(k)[0] > -1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_diagonal_is_one_for_continuous_data(n, p, seed):
    x = np.random.default_rng(seed).standard_normal((n, p))
    k = kendall_matrix_fast(x)
    np.testing.assert_array_equal(np.diag(k), 1.0)
    assert np.trace(k) == p


def test_monotone_invariance():
    x = sample_mvn(CorrelationModel.ma1(8, 0.3), 40, seed=4)
    k = kendall_matrix_fast(x)
    for t in ("cube", "exp", "probit_rank"):
        np.testing.assert_array_equal(kendall_matrix_fast(monotone_transform(x, t)), k)


def test_hoeffding_identity_holds():
    model = CorrelationModel.ma1(15, 0.5)
    x = sample_mvn(model, 60, seed=9)
    pieces = hoeffding_pieces(x, sigma_triple(model))
    gap = np.max(np.abs(kendall_matrix_fast(x) - pieces.recombine()))
    assert gap < 1e-12
    np.testing.assert_allclose(pieces.w_n, pieces.m1 + sigma_triple(model).sigma3)


def test_hoeffding_rejects_transformed_data():
    model = CorrelationModel.identity(3)
    x = monotone_transform(sample_mvn(model, 10, seed=0), "exp")
    with pytest.raises(ContractError):
        hoeffding_pieces(x, sigma_triple(model))
    with pytest.raises(ContractError):
        frobenius_gap(x, sigma_triple(model))


def test_estimator_api():
    x = sample_mvn(CorrelationModel.identity(5), 30, seed=1).data
    est = KendallCorrelation().fit(x)
    assert est.n_features_in_ == 5 and est.n_samples_ == 30
    np.testing.assert_array_equal(est.correlation_, kendall_matrix_fast(x))
    assert est.eigenvalues().sum() == pytest.approx(5.0)
    assert KendallCorrelation(method="naive").get_params() == {"method": "naive"}
    np.testing.assert_allclose(PearsonCorrelation().fit(x).correlation_, pearson_matrix(x))
    np.testing.assert_allclose(SpearmanCorrelation().fit(x).correlation_, spearman_matrix(x))
    with pytest.raises(ValueError):
        KendallCorrelation(method="bogus").fit(x)


def test_hoeffding_estimator():
    model = CorrelationModel.identity(4)
    x = sample_mvn(model, 25, seed=2)
    est = HoeffdingDecomposition(sigma_triple(model)).fit(x)
    assert est.residual(kendall_matrix_fast(x)) < 1e-12


def test_constant_column_rejected():
    x = np.ones((10, 2))
    x[:, 1] = np.arange(10)
    with pytest.raises(ContractError):
        pearson_matrix(x)


def test_frobenius_gap_grows_with_dependence():
    lo = CorrelationModel.compound_symmetry(60, 0.0)
    hi = CorrelationModel.compound_symmetry(60, 0.8)
    g_lo = np.mean([frobenius_gap(sample_mvn(lo, 40, 0, r), sigma_triple(lo)) for r in range(5)])
    g_hi = np.mean([frobenius_gap(sample_mvn(hi, 40, 0, r), sigma_triple(hi)) for r in range(5)])
    assert g_hi > 3 * g_lo


def test_matrix_io_roundtrip(tmp_path):
    m = kendall_matrix_fast(np.random.default_rng(3).standard_normal((12, 4)))
    write_matrix_csv(tmp_path / "k.csv", m)
    np.testing.assert_array_equal(read_matrix_csv(tmp_path / "k.csv"), m)
    write_kspc(tmp_path / "k.kspc", m)
    np.testing.assert_array_equal(read_kspc(tmp_path / "k.kspc"), m)
    (tmp_path / "bad.kspc").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        read_kspc(tmp_path / "bad.kspc")
