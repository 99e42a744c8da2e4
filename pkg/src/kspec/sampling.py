"""Reproducible Gaussian samples and strictly increasing componentwise maps.

Random streams come from numpy's counter-based Philox bit generator keyed
by a ``SeedSequence`` built from ``(seed, replication)``, so replication
``r`` of seed ``s`` draws the same numbers no matter which worker or how
many threads produce it.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .models import CorrelationModel, build_sigma

RNG_FAMILY = f"numpy.random.Philox (numpy {np.__version__})"


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Independent generator for stream ``(seed, replication)``."""
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication index must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


class Transform(str, enum.Enum):
    CUBE = "cube"
    EXP = "exp"
    # The name is kept from the experiment vocabulary; the map is x -> 2x + 1.
    PROBIT_RANK = "probit_rank"


_TRANSFORMS = {
    Transform.CUBE: lambda a: a ** 3,
    Transform.EXP: np.exp,
    Transform.PROBIT_RANK: lambda a: 2.0 * a + 1.0,
}


@dataclass(frozen=True)
class SampleMatrix:
    """n x p data (rows are observations) with provenance."""

    data: np.ndarray
    model: CorrelationModel
    seed: int
    replication: int = 0
    transforms: tuple[str, ...] = ()
    sqrt_fallback: bool = False

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"sample must be 2-d, got shape {self.data.shape}")
        n, p = self.data.shape
        if n < 2 or p < 1:
            raise ValueError(f"sample needs n >= 2 and p >= 1, got n={n}, p={p}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def is_gaussian(self) -> bool:
        """True when the rows are untransformed N(0, Sigma) draws."""
        return not self.transforms

    def to_csv(self, path: str | Path) -> None:
        header = ",".join(str(j) for j in range(self.p))
        np.savetxt(path, self.data, delimiter=",", header=header, comments="", fmt="%.17g")


def _sqrt_factor(sigma: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        return np.linalg.cholesky(sigma), False
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        return v * np.sqrt(np.clip(w, 0.0, None)), True


def sample_mvn(model: CorrelationModel, n: int, seed: int, replication: int = 0) -> SampleMatrix:
    """Draw ``n`` i.i.d. rows from N(0, Sigma) for the model's correlation Sigma."""
    if n < 2:
        raise ValueError(f"need n >= 2 observations, got {n}")
    sigma = build_sigma(model)
    factor, fallback = _sqrt_factor(sigma)
    if fallback:
        warnings.warn("Cholesky failed; using clamped eigenvalue square root", RuntimeWarning)
    z = make_rng(seed, replication).standard_normal((n, model.p))
    return SampleMatrix(z @ factor.T, model, seed, replication, sqrt_fallback=fallback)


def monotone_transform(x: SampleMatrix, transform: str | Transform) -> SampleMatrix:
    """Apply a strictly increasing map to every entry."""
    t = Transform(transform)
    return replace(x, data=_TRANSFORMS[t](x.data), transforms=x.transforms + (t.value,))
