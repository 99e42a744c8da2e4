"""Population correlation structures and their Gaussian-ensemble sign covariances.

For Gaussian data with correlation matrix ``sigma`` the sign vectors used by
Kendall's tau have closed-form second moments, all obtained by entrywise
arcsine maps of ``sigma``::

    sigma1 = (2/pi) arcsin(sigma)          cov of sign(x_i - x_j)
    sigma2 = (2/pi) arcsin(sigma / 2)      cov of the projections A_i
    sigma3 = sigma1 - 2 sigma2             cov of the degenerate remainder

The arcsine is applied element by element; it is not a matrix function.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import toeplitz

PSD_TOL = 1e-10
ENTRY_TOL = 1e-12


class DomainError(ValueError):
    """A model parameter or matrix entry lies outside its admissible range."""


class ContractError(ValueError):
    """Input violates an operation's precondition."""


class ConstructionError(ValueError):
    """The realized correlation matrix is not positive semi-definite."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ModelKind(str, enum.Enum):
    IDENTITY = "identity"
    COMPOUND_SYMMETRY = "compound_symmetry"
    MA1 = "ma1"
    BAND_TOEPLITZ2 = "band_toeplitz2"
    GENERAL_TOEPLITZ = "general_toeplitz"
    FACTOR = "factor"


class FactorScale(str, enum.Enum):
    OVER_P = "over_p"
    OVER_SQRT_P = "over_sqrt_p"


TOEPLITZ_KINDS = (
    ModelKind.IDENTITY,
    ModelKind.MA1,
    ModelKind.BAND_TOEPLITZ2,
    ModelKind.GENERAL_TOEPLITZ,
)


@dataclass(frozen=True)
class CorrelationModel:
    """A structured population correlation matrix of dimension ``p``.

    Use the classmethod constructors rather than filling fields by hand.
    ``rho`` is the scalar correlation for compound symmetry, MA(1) and the
    two-band Toeplitz model; ``rho_seq`` holds the off-diagonal sequence
    for a general Toeplitz model; ``k``, ``scale`` and ``loadings_seed``
    describe the factor model.
    """

    kind: ModelKind
    p: int
    rho: float = 0.0
    rho_seq: tuple[float, ...] = ()
    k: int = 3
    scale: FactorScale = FactorScale.OVER_P
    loadings_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "scale", FactorScale(self.scale))
        object.__setattr__(self, "rho_seq", tuple(float(r) for r in self.rho_seq))
        if int(self.p) != self.p or self.p < 1:
            raise DomainError(f"p must be a positive integer, got {self.p!r}")
        kind = self.kind
        if kind is ModelKind.COMPOUND_SYMMETRY and not -1.0 < self.rho < 1.0:
            raise DomainError(f"compound symmetry needs -1 < rho < 1, got {self.rho}")
        # |rho| = 1/2 is admitted: eigenvalues 1 + 2 rho cos(k pi/(p+1)) stay positive for finite p
        if kind is ModelKind.MA1 and not -0.5 <= self.rho <= 0.5:
            raise DomainError(f"MA(1) needs -1/2 <= rho <= 1/2, got {self.rho}")
        if kind is ModelKind.BAND_TOEPLITZ2 and not -1.0 < self.rho < 1.0:
            raise DomainError(f"band Toeplitz needs -1 < rho < 1, got {self.rho}")
        if kind is ModelKind.GENERAL_TOEPLITZ:
            bad = [r for r in self.rho_seq if not -1.0 <= r <= 1.0]
            if bad:
                raise DomainError(f"Toeplitz correlations must lie in [-1, 1], got {bad}")
        if kind is ModelKind.FACTOR and (int(self.k) != self.k or self.k < 1):
            raise DomainError(f"factor rank k must be a positive integer, got {self.k}")

    # constructors -------------------------------------------------------

    @classmethod
    def identity(cls, p: int) -> "CorrelationModel":
        return cls(ModelKind.IDENTITY, p)

    @classmethod
    def compound_symmetry(cls, p: int, rho: float) -> "CorrelationModel":
        return cls(ModelKind.COMPOUND_SYMMETRY, p, rho=rho)

    @classmethod
    def ma1(cls, p: int, rho: float) -> "CorrelationModel":
        return cls(ModelKind.MA1, p, rho=rho)

    @classmethod
    def band_toeplitz2(cls, p: int, rho: float) -> "CorrelationModel":
        return cls(ModelKind.BAND_TOEPLITZ2, p, rho=rho)

    @classmethod
    def general_toeplitz(cls, p: int, rho_seq: Sequence[float]) -> "CorrelationModel":
        return cls(ModelKind.GENERAL_TOEPLITZ, p, rho_seq=tuple(rho_seq))

    @classmethod
    def factor(cls, p: int, k: int = 3, scale: str | FactorScale = FactorScale.OVER_P,
               loadings_seed: int = 0) -> "CorrelationModel":
        return cls(ModelKind.FACTOR, p, k=k, scale=scale, loadings_seed=loadings_seed)

    def with_p(self, p: int) -> "CorrelationModel":
        return CorrelationModel(self.kind, p, self.rho, self.rho_seq, self.k,
                                self.scale, self.loadings_seed)

    # properties ---------------------------------------------------------

    @property
    def is_toeplitz(self) -> bool:
        return self.kind in TOEPLITZ_KINDS

    @property
    def toeplitz_rhos(self) -> tuple[float, ...]:
        """Off-diagonal correlations rho_1, rho_2, ... of a Toeplitz model."""
        if self.kind is ModelKind.IDENTITY:
            return ()
        if self.kind is ModelKind.MA1:
            return (self.rho,)
        if self.kind is ModelKind.BAND_TOEPLITZ2:
            return (self.rho, self.rho)
        if self.kind is ModelKind.GENERAL_TOEPLITZ:
            return self.rho_seq
        raise DomainError(f"{self.kind.value} model has no Toeplitz structure")

    # JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value, "p": int(self.p)}
        if self.kind in (ModelKind.COMPOUND_SYMMETRY, ModelKind.MA1, ModelKind.BAND_TOEPLITZ2):
            d["rho"] = float(self.rho)
        elif self.kind is ModelKind.GENERAL_TOEPLITZ:
            d["rho_seq"] = list(self.rho_seq)
        elif self.kind is ModelKind.FACTOR:
            d.update(k=int(self.k), scale=self.scale.value, loadings_seed=int(self.loadings_seed))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationModel":
        d = dict(d)
        try:
            kind = ModelKind(d.pop("kind"))
            p = int(d.pop("p"))
        except KeyError as exc:
            raise DomainError(f"model description is missing {exc}") from None
        allowed = {"rho", "rho_seq", "k", "scale", "loadings_seed"}
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown model parameters: {sorted(unknown)}")
        if "rho_seq" in d:
            d["rho_seq"] = tuple(d["rho_seq"])
        return cls(kind, p, **d)


def factor_loadings(model: CorrelationModel) -> np.ndarray:
    """Scaled loading matrix ``A`` (k x p) with ``Sigma0 = I + A^T A``."""
    if model.kind is not ModelKind.FACTOR:
        raise DomainError("factor_loadings needs a factor model")
    rng = np.random.default_rng(model.loadings_seed)
    z = rng.standard_normal((model.k, model.p))
    if model.scale is FactorScale.OVER_P:
        return z / np.sqrt(model.p)
    return z / model.p ** 0.25


def _check_psd(sigma: np.ndarray, what: str) -> None:
    lam_min = float(np.linalg.eigvalsh(sigma)[0])
    if lam_min < -PSD_TOL:
        raise ConstructionError(
            f"{what} is not positive semi-definite (smallest eigenvalue {lam_min:.3e})",
            lam_min,
        )


def build_sigma(model: CorrelationModel) -> np.ndarray:
    """Realize the p x p population correlation matrix of ``model``."""
    p = model.p
    kind = model.kind
    if kind is ModelKind.IDENTITY:
        return np.eye(p)
    if kind is ModelKind.COMPOUND_SYMMETRY:
        sigma = np.full((p, p), model.rho)
        np.fill_diagonal(sigma, 1.0)
    elif kind is ModelKind.FACTOR:
        a = factor_loadings(model)
        sigma0 = np.eye(p) + a.T @ a
        d = 1.0 / np.sqrt(np.diag(sigma0))
        sigma = sigma0 * d[:, None] * d[None, :]
        sigma = 0.5 * (sigma + sigma.T)
        np.fill_diagonal(sigma, 1.0)
    else:
        first = np.zeros(p)
        first[0] = 1.0
        rhos = model.toeplitz_rhos[: p - 1]
        first[1 : 1 + len(rhos)] = rhos
        sigma = toeplitz(first)
    _check_psd(sigma, f"{kind.value} correlation matrix (p={p})")
    return sigma


def arcsin_map(sigma: np.ndarray, halved: bool = False) -> np.ndarray:
    """Entrywise ``(2/pi) arcsin(sigma)``, or ``(2/pi) arcsin(sigma/2)`` if halved."""
    sigma = np.asarray(sigma, dtype=float)
    worst = float(np.max(np.abs(sigma))) if sigma.size else 0.0
    if worst > 1.0 + ENTRY_TOL:
        raise DomainError(f"arcsin map needs entries in [-1, 1], largest |entry| is {worst!r}")
    arg = np.clip(sigma, -1.0, 1.0)
    if halved:
        arg = arg / 2.0
    return (2.0 / np.pi) * np.arcsin(arg)


@dataclass(frozen=True)
class SigmaTriple:
    """Covariances of the sign kernel, its projection and its remainder."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray

    @property
    def p(self) -> int:
        return self.sigma1.shape[0]

    @classmethod
    def from_sigma(cls, sigma: np.ndarray) -> "SigmaTriple":
        s1 = arcsin_map(sigma)
        s2 = arcsin_map(sigma, halved=True)
        return cls(s1, s2, s1 - 2.0 * s2)

    def corrupted(self, factor: float) -> "SigmaTriple":
        """Triple with ``sigma2`` scaled by ``factor``; used for sensitivity checks."""
        s2 = self.sigma2 * factor
        return SigmaTriple(self.sigma1, s2, self.sigma1 - 2.0 * s2)


def sigma_triple(model: CorrelationModel) -> SigmaTriple:
    return SigmaTriple.from_sigma(build_sigma(model))


@dataclass(frozen=True)
class ToeplitzSymbol:
    """Trigonometric symbol ``a0 + 2 sum_k coeffs[k-1] cos(k theta)``.

    Coefficients may be complex (the resolvent symbol depends on complex
    ``x`` and ``z``); with real coefficients the symbol is real.
    """

    a0: complex
    coeffs: tuple = field(default_factory=tuple)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.a0, dtype=complex if self._complex else float)
        for k, c in enumerate(self.coeffs, start=1):
            out = out + 2.0 * c * np.cos(k * theta)
        return out

    @property
    def _complex(self) -> bool:
        return any(isinstance(v, complex) or np.iscomplexobj(v) for v in (self.a0, *self.coeffs))


def toeplitz_symbols(model: CorrelationModel, x: complex, z: complex
                     ) -> tuple[ToeplitzSymbol, ToeplitzSymbol]:
    """Symbols of ``sigma3 + 2 x sigma2 - z I`` and of ``sigma2`` for a Toeplitz model."""
    if not model.is_toeplitz:
        raise DomainError(f"{model.kind.value} model has no Toeplitz symbol")
    rhos = np.asarray(model.toeplitz_rhos, dtype=float)
    full = (2.0 / np.pi) * np.arcsin(rhos)
    half = (2.0 / np.pi) * np.arcsin(rhos / 2.0)
    x = complex(x)
    z = complex(z)
    f1 = ToeplitzSymbol(
        1.0 / 3.0 + 2.0 * x / 3.0 - z,
        tuple(complex(v) for v in full + 2.0 * (x - 1.0) * half),
    )
    f2 = ToeplitzSymbol(1.0 / 3.0, tuple(float(v) for v in half))
    return f1, f2


def sigma_symbols(model: CorrelationModel) -> tuple[ToeplitzSymbol, ToeplitzSymbol]:
    """Real symbols of ``sigma2`` and ``sigma3`` for a Toeplitz model."""
    rhos = np.asarray(model.toeplitz_rhos, dtype=float)
    full = (2.0 / np.pi) * np.arcsin(rhos)
    half = (2.0 / np.pi) * np.arcsin(rhos / 2.0)
    return (ToeplitzSymbol(1.0 / 3.0, tuple(float(v) for v in half)),
            ToeplitzSymbol(1.0 / 3.0, tuple(float(v) for v in full - 2.0 * half)))


def ma1_eigen(p: int, diag: float, offdiag: float
              ) -> tuple[np.ndarray, Callable[[int], np.ndarray]]:
    """Closed-form spectrum of the symmetric tridiagonal Toeplitz matrix.

    Returns the eigenvalues ``diag + 2 offdiag cos(k pi/(p+1))`` for
    ``k = 1..p`` (in that order) and a function mapping ``k`` to the unit
    eigenvector with entries ``sqrt(2/(p+1)) sin(j k pi/(p+1))``.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    k = np.arange(1, p + 1)
    values = diag + 2.0 * offdiag * np.cos(k * np.pi / (p + 1))

    def vector(k: int) -> np.ndarray:
        if not 1 <= k <= p:
            raise DomainError(f"eigenvector index must be in 1..{p}, got {k}")
        j = np.arange(1, p + 1)
        return np.sqrt(2.0 / (p + 1)) * np.sin(j * k * np.pi / (p + 1))

    return values, vector


def band2_shift(rho: float) -> float:
    """``a = arcsin(rho)/arcsin(rho/2) - 2`` with its limit 0 at rho = 0."""
    if rho == 0.0:
        return 0.0
    return float(np.arcsin(rho) / np.arcsin(rho / 2.0) - 2.0)
