"""Kendall, Spearman and Pearson correlation matrices and the Hoeffding pieces of K_n.

Kendall's matrix is

    K_n = 2/(n(n-1)) sum_{i<j} A_ij A_ij^T,   A_ij = sign(x_i - x_j),

so entry (k, l) is Kendall's tau-a of columns k and l with sign(0) = 0 for
ties. ``kendall_matrix_fast`` computes each entry by counting inversions
with a merge sort (Knight's algorithm); ``kendall_matrix_naive`` is the
literal outer-product sum and serves as the test oracle. Both reduce to
the same integer pair counts and share the final scaling, so they agree
bit for bit.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.special import erf
from scipy.stats import rankdata
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .models import ContractError, SigmaTriple
from .sampling import SampleMatrix

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


def _as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, SampleMatrix) else x
    data = check_array(data, dtype=np.float64, ensure_min_samples=2)
    return data


def _pair_scale(n: int) -> float:
    return 2.0 / (n * (n - 1.0))


# merge-sort kernel --------------------------------------------------------


@numba.njit(cache=True)
def _merge_count(y, buf):
    """Sort ``y`` in place; return the number of pairs i < j with y[i] > y[j]."""
    n = y.shape[0]
    swaps = 0
    width = 1
    while width < n:
        lo = 0
        while lo < n - width:
            mid = lo + width
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if y[j] < y[i]:
                    buf[k] = y[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = y[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = y[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = y[j]
                j += 1
                k += 1
            for t in range(lo, hi):
                y[t] = buf[t]
            lo += 2 * width
        width *= 2
    return swaps


@numba.njit(cache=True)
def _tied_pairs(sorted_vals):
    n = sorted_vals.shape[0]
    total = 0
    run = 1
    for i in range(1, n):
        if sorted_vals[i] == sorted_vals[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


@numba.njit(parallel=True, cache=True)
def _kendall_counts(ranks, order, ties):
    """Integer matrix of concordant-minus-discordant pair counts."""
    n, p = ranks.shape
    n0 = n * (n - 1) // 2
    out = np.empty((p, p), dtype=np.int64)
    for k in numba.prange(p):
        y = np.empty(n, dtype=np.int64)
        xs = np.empty(n, dtype=np.int64)
        buf = np.empty(n, dtype=np.int64)
        out[k, k] = n0 - ties[k]
        for l in range(k + 1, p):
            for t in range(n):
                xs[t] = ranks[order[t, k], k]
                y[t] = ranks[order[t, k], l]
            # within runs of tied x, order y ascending; count joint ties
            joint = 0
            start = 0
            while start < n:
                stop = start + 1
                while stop < n and xs[stop] == xs[start]:
                    stop += 1
                if stop - start > 1:
                    seg = np.sort(y[start:stop])
                    y[start:stop] = seg
                    joint += _tied_pairs(seg)
                start = stop
            discordant = _merge_count(y, buf)
            s = n0 - ties[k] - ties[l] + joint - 2 * discordant
            out[k, l] = s
            out[l, k] = s
    return out


def kendall_counts_fast(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    ranks = np.empty(data.shape, dtype=np.int64)
    order = np.empty(data.shape, dtype=np.int64)
    ties = np.empty(data.shape[1], dtype=np.int64)
    for j in range(data.shape[1]):
        ranks[:, j] = rankdata(data[:, j], method="dense")
        order[:, j] = np.argsort(data[:, j], kind="stable")
        ties[j] = _tied_pairs(ranks[order[:, j], j])
    return _kendall_counts(ranks, order, ties)


def kendall_matrix_fast(x) -> np.ndarray:
    """Kendall matrix via O(n log n) inversion counting per column pair."""
    data = _as_array(x)
    counts = kendall_counts_fast(data)
    return counts * _pair_scale(data.shape[0])


def kendall_matrix_naive(x) -> np.ndarray:
    """Kendall matrix by literally summing sign outer products over all pairs."""
    data = _as_array(x)
    n, p = data.shape
    acc = np.zeros((p, p))
    for i in range(n - 1):
        for j in range(i + 1, n):
            a = np.sign(data[i] - data[j])
            acc += np.outer(a, a)
    return acc * _pair_scale(n)


# Hoeffding decomposition ---------------------------------------------------


@dataclass(frozen=True)
class HoeffdingPieces:
    """Projection rows A_i and the pieces of K_n = M1 + M2 + M2^T + M3."""

    a_rows: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    w_n: np.ndarray

    def recombine(self) -> np.ndarray:
        return self.m1 + self.m2 + self.m2.T + self.m3


def projection_rows(data: np.ndarray) -> np.ndarray:
    """A_i = E[sign(x_i - x) | x_i] = 2 Phi(x_i) - 1 for N(0,1) marginals."""
    return erf(data / np.sqrt(2.0))


def _require_gaussian(x) -> None:
    if isinstance(x, SampleMatrix) and not x.is_gaussian:
        raise ContractError(
            f"projection A_i = 2 Phi(x_i) - 1 needs untransformed Gaussian data; "
            f"sample carries transforms {x.transforms}"
        )


def m1_matrix(a_rows: np.ndarray) -> np.ndarray:
    n = a_rows.shape[0]
    centered = a_rows - a_rows.mean(axis=0)
    return (2.0 / (n - 1)) * centered.T @ centered


def hoeffding_pieces(x, triple: SigmaTriple) -> HoeffdingPieces:
    """Split K_n into M1, M2, M3 with an O(n^2) pair loop (desk-scale only)."""
    _require_gaussian(x)
    data = _as_array(x)
    n, p = data.shape
    if triple.p != p:
        raise ContractError(f"triple has dimension {triple.p}, data has {p} columns")
    a = projection_rows(data)
    m2 = np.zeros((p, p))
    m3 = np.zeros((p, p))
    for i in range(n - 1):
        signs = np.sign(data[i] - data[i + 1 :])
        proj = a[i] - a[i + 1 :]
        eps = signs - proj
        m2 += proj.T @ eps
        m3 += eps.T @ eps
    scale = _pair_scale(n)
    m1 = m1_matrix(a)
    return HoeffdingPieces(a, m1, m2 * scale, m3 * scale, m1 + triple.sigma3)


def frobenius_gap(x, triple: SigmaTriple) -> float:
    """Scaled squared Frobenius distance (1/p) ||K_n - W_n||_F^2."""
    _require_gaussian(x)
    data = _as_array(x)
    k = kendall_matrix_fast(data)
    w = m1_matrix(projection_rows(data)) + triple.sigma3
    return float(np.sum((k - w) ** 2) / data.shape[1])


# baselines -----------------------------------------------------------------


def _check_constant_columns(data: np.ndarray) -> None:
    const = np.flatnonzero(np.ptp(data, axis=0) == 0)
    if const.size:
        raise ContractError(f"correlation undefined for constant column {int(const[0])}")


def pearson_matrix(x) -> np.ndarray:
    data = _as_array(x)
    _check_constant_columns(data)
    r = np.corrcoef(data, rowvar=False)
    r = np.atleast_2d(r)
    np.fill_diagonal(r, 1.0)
    return r


def spearman_matrix(x) -> np.ndarray:
    """Pearson correlation of the column rank vectors (average ranks for ties)."""
    data = _as_array(x)
    _check_constant_columns(data)
    return pearson_matrix(rankdata(data, axis=0))


# sklearn-style estimators ----------------------------------------------------


class _CorrelationEstimator(BaseEstimator):
    def fit(self, X, y=None):
        X = _as_array(X)
        self.correlation_ = self._compute(X)
        self.n_samples_, self.n_features_in_ = X.shape
        return self

    def eigenvalues(self) -> np.ndarray:
        check_is_fitted(self, "correlation_")
        return np.linalg.eigvalsh(self.correlation_)


class KendallCorrelation(_CorrelationEstimator):
    """Kendall tau-a correlation matrix.

    Parameters
    ----------
    method : {"fast", "naive"}
        ``"fast"`` counts inversions per column pair; ``"naive"`` sums sign
        outer products and is meant for small inputs.
    """

    def __init__(self, method: str = "fast"):
        self.method = method

    def _compute(self, X):
        if self.method == "fast":
            return kendall_matrix_fast(X)
        if self.method == "naive":
            return kendall_matrix_naive(X)
        raise ValueError(f"unknown method {self.method!r}")


class SpearmanCorrelation(_CorrelationEstimator):
    def _compute(self, X):
        return spearman_matrix(X)


class PearsonCorrelation(_CorrelationEstimator):
    def _compute(self, X):
        return pearson_matrix(X)


class HoeffdingDecomposition(BaseEstimator):
    """Fit the Hoeffding pieces of K_n for Gaussian data with a known triple.

    After ``fit`` the attributes ``m1_``, ``m2_``, ``m3_``, ``w_n_`` and
    ``a_rows_`` hold the decomposition.
    """

    def __init__(self, triple: SigmaTriple | None = None):
        self.triple = triple

    def fit(self, X, y=None):
        if self.triple is None:
            raise ValueError("HoeffdingDecomposition needs a SigmaTriple")
        pieces = hoeffding_pieces(X, self.triple)
        self.a_rows_ = pieces.a_rows
        self.m1_, self.m2_, self.m3_, self.w_n_ = pieces.m1, pieces.m2, pieces.m3, pieces.w_n
        return self

    def residual(self, kendall: np.ndarray) -> float:
        check_is_fitted(self, "m1_")
        return float(np.max(np.abs(kendall - self.m1_ - self.m2_ - self.m2_.T - self.m3_)))


# serialization ---------------------------------------------------------------

KSPC_MAGIC = b"KSPC"
KSPC_VERSION = 1


def write_matrix_csv(path: str | Path, m: np.ndarray) -> None:
    np.savetxt(path, np.asarray(m, dtype=float), delimiter=",", fmt="%.17g")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def write_kspc(path: str | Path, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype="<f8")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"KSPC stores square matrices, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(KSPC_MAGIC)
        fh.write(struct.pack("<II", KSPC_VERSION, m.shape[0]))
        fh.write(m.tobytes(order="C"))


def read_kspc(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != KSPC_MAGIC:
        raise ValueError(f"{path}: not a KSPC file")
    version, p = struct.unpack("<II", raw[4:12])
    if version != KSPC_VERSION:
        raise ValueError(f"{path}: unsupported KSPC version {version}")
    body = raw[12:]
    if len(body) != 8 * p * p:
        raise ValueError(f"{path}: expected {8 * p * p} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(p, p).copy()
