"""Eigenvalues, empirical spectral distributions and distances between CDFs.

An empirical spectrum puts mass 1/p on each eigenvalue. A theoretical law
is carried as a :class:`DensityCurve`: a density sampled on an ascending
grid plus point masses. Its CDF is the cumulative trapezoid of the density
plus the atoms at or left of the argument.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .models import ContractError

SYMMETRY_TOL = 1e-10
MASS_BOUNDS = (0.97, 1.03)


class NormalizationError(ValueError):
    """A density curve does not integrate to one."""

    def __init__(self, message: str, total_mass: float):
        super().__init__(message)
        self.total_mass = total_mass


class MatrixKind(str, enum.Enum):
    KENDALL = "kendall"
    WN = "wn"
    M1 = "m1"
    SPEARMAN = "spearman"
    PEARSON = "pearson"


def eigenvalues_sym(m: np.ndarray, vectors: bool = False):
    """Ascending eigenvalues of a symmetric matrix (and eigenvectors if asked)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ContractError(f"matrix is not symmetric (max |m - m^T| = {asym:.3e})")
    if vectors:
        return np.linalg.eigh(m)
    return np.linalg.eigvalsh(m)


@dataclass(frozen=True)
class SpectrumSource:
    """Where an empirical spectrum came from."""

    kind: MatrixKind
    n: int
    p: int
    seed: int | None = None
    model: dict | None = None

    def to_dict(self) -> dict:
        return {"kind": MatrixKind(self.kind).value, "n": self.n, "p": self.p,
                "seed": self.seed, "model": self.model}


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """Sorted eigenvalues of one realized matrix."""

    eigenvalues: np.ndarray
    source: SpectrumSource | None = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size == 0:
            raise ContractError("a spectrum needs a non-empty 1-d array of eigenvalues")
        if np.any(np.diff(ev) < 0):
            ev = np.sort(ev)
        object.__setattr__(self, "eigenvalues", ev)
        if self.source is not None and MatrixKind(self.source.kind) is MatrixKind.KENDALL:
            if ev[0] < -1e-10:
                raise ContractError(f"Kendall spectrum has eigenvalue {ev[0]:.3e} < -1e-10")
            if abs(ev.sum() - ev.size) > 1e-8:
                raise ContractError(f"Kendall eigenvalues sum to {ev.sum()!r}, expected {ev.size}")

    @classmethod
    def from_matrix(cls, m: np.ndarray, source: SpectrumSource | None = None) -> "EmpiricalSpectrum":
        return cls(eigenvalues_sym(m), source)

    @property
    def p(self) -> int:
        return self.eigenvalues.size

    def cdf(self, x):
        """Right-continuous ESD, the fraction of eigenvalues <= x."""
        return np.searchsorted(self.eigenvalues, x, side="right") / self.p

    def cdf_left(self, x):
        """Left limit of the ESD, the fraction of eigenvalues < x."""
        return np.searchsorted(self.eigenvalues, x, side="left") / self.p


def esd_cdf(spec: EmpiricalSpectrum, x):
    return spec.cdf(x)


@dataclass(frozen=True)
class DensityCurve:
    """Sampled density with optional point masses ``atoms = ((loc, mass), ...)``."""

    grid: np.ndarray
    density: np.ndarray
    atoms: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if grid.shape != dens.shape or grid.ndim != 1:
            raise ContractError("grid and density must be 1-d arrays of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ContractError("density grid must be strictly increasing")
        if np.any(dens < 0):
            raise ContractError(f"density has negative values (min {dens.min():.3e})")
        atoms = tuple(sorted((float(a), float(m)) for a, m in self.atoms))
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", atoms)

    @property
    def atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    @property
    def continuous_mass(self) -> float:
        if self.grid.size < 2:
            return 0.0
        return float(np.trapezoid(self.density, self.grid))

    @property
    def total_mass(self) -> float:
        return self.continuous_mass + self.atom_mass

    def _cumulative(self) -> np.ndarray:
        if self.grid.size < 2:
            return np.zeros(self.grid.size)
        steps = 0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid)
        return np.concatenate(([0.0], np.cumsum(steps)))

    def _atoms_below(self, x, side: str):
        if not self.atoms:
            return np.zeros(np.shape(x))
        locs = np.array([a for a, _ in self.atoms])
        cum = np.concatenate(([0.0], np.cumsum([m for _, m in self.atoms])))
        return cum[np.searchsorted(locs, x, side=side)]

    def cdf(self, x):
        """Right-continuous CDF."""
        x = np.asarray(x, dtype=float)
        cont = np.interp(x, self.grid, self._cumulative(), left=0.0) if self.grid.size else 0.0
        return cont + self._atoms_below(x, "right")

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        cont = np.interp(x, self.grid, self._cumulative(), left=0.0) if self.grid.size else 0.0
        return cont + self._atoms_below(x, "left")

    def support(self, threshold: float = 0.0) -> tuple[float, float]:
        """Smallest interval holding all grid points with density above ``threshold`` and all atoms."""
        pts = list(self.grid[self.density > threshold]) + [a for a, m in self.atoms if m > 0]
        if not pts:
            raise ContractError("curve carries no mass")
        return float(min(pts)), float(max(pts))


def check_normalized(curve: DensityCurve, bounds: tuple[float, float] = MASS_BOUNDS) -> float:
    mass = curve.total_mass
    if not bounds[0] <= mass <= bounds[1]:
        raise NormalizationError(
            f"curve mass {mass:.6f} lies outside [{bounds[0]}, {bounds[1]}]", mass
        )
    return mass


def ks_distance(spec: EmpiricalSpectrum, curve: DensityCurve, atom_tol: float = 1e-9) -> float:
    """Kolmogorov-Smirnov distance between an ESD and a theoretical law.

    Both CDFs are monotone, so the supremum is attained as a one-sided limit
    at an eigenvalue, a grid point or an atom. Both limits are compared.
    Eigenvalues within ``atom_tol`` of an atom (eigensolver round-off, such
    as the -1e-15 "zeros" of a rank-deficient matrix) are placed on it.
    """
    check_normalized(curve)
    ev = spec.eigenvalues.copy()
    for loc, _ in curve.atoms:
        ev[np.abs(ev - loc) <= atom_tol] = loc
    esd = EmpiricalSpectrum(np.sort(ev))
    pts = np.unique(np.concatenate((ev, curve.grid, [a for a, _ in curve.atoms])))
    right = np.abs(esd.cdf(pts) - curve.cdf(pts))
    left = np.abs(esd.cdf_left(pts) - curve.cdf_left(pts))
    return float(max(right.max(), left.max()))


CDF = Callable[[np.ndarray], np.ndarray]


def levy_grid(*intervals: tuple[float, float], points: int = 4096, pad: float = 0.05) -> np.ndarray:
    """Uniform grid covering all ``(lo, hi)`` intervals, padded by ``pad`` of the span."""
    lo = min(a for a, _ in intervals)
    hi = max(b for _, b in intervals)
    span = hi - lo if hi > lo else 1.0
    return np.linspace(lo - pad * span, hi + pad * span, points)


def levy_distance(f: CDF, g: CDF, grid: Sequence[float], tol: float = 1e-6) -> float:
    """Grid version of the Levy distance between two CDFs.

    The smallest ``eps`` (to ``tol``, by bisection) such that
    ``g(x - eps) - eps <= f(x) <= g(x + eps) + eps`` and the same with ``f``
    and ``g`` swapped, at every grid point.
    """
    grid = np.asarray(grid, dtype=float)
    fx = np.asarray(f(grid), dtype=float)
    gx = np.asarray(g(grid), dtype=float)

    def ok(eps: float) -> bool:
        if np.any(np.asarray(g(grid - eps)) - eps > fx) or np.any(fx > np.asarray(g(grid + eps)) + eps):
            return False
        if np.any(np.asarray(f(grid - eps)) - eps > gx) or np.any(gx > np.asarray(f(grid + eps)) + eps):
            return False
        return True

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def spectrum_levy_distance(a: EmpiricalSpectrum, b: EmpiricalSpectrum, points: int = 4096) -> float:
    grid = levy_grid((a.eigenvalues[0], a.eigenvalues[-1]),
                     (b.eigenvalues[0], b.eigenvalues[-1]), points=points)
    return levy_distance(a.cdf, b.cdf, grid)


def histogram(spec: EmpiricalSpectrum | np.ndarray, bins: int | str = "auto"
              ) -> tuple[np.ndarray, np.ndarray]:
    """Density-normalized histogram of eigenvalues.

    ``bins="auto"`` uses the Freedman-Diaconis width, clipped to 20..100 bins.
    A spectrum with a single distinct value gives one unit-width bar.
    """
    ev = spec.eigenvalues if isinstance(spec, EmpiricalSpectrum) else np.sort(np.asarray(spec, float))
    lo, hi = float(ev[0]), float(ev[-1])
    if hi == lo:
        return np.array([lo - 0.5, lo + 0.5]), np.array([1.0])
    if bins == "auto":
        q75, q25 = np.percentile(ev, [75, 25])
        width = 2.0 * (q75 - q25) / ev.size ** (1.0 / 3.0)
        count = int(np.ceil((hi - lo) / width)) if width > 0 else 100
        bins = int(np.clip(count, 20, 100))
    elif int(bins) < 1:
        raise ContractError(f"bins must be >= 1, got {bins}")
    dens, edges = np.histogram(ev, bins=int(bins), range=(lo, hi), density=True)
    return edges, dens


# CSV output ----------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_histogram_csv(path: str | Path, edges: np.ndarray, density: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "density"])
        for a, b, d in zip(edges[:-1], edges[1:], density):
            w.writerow([_fmt(a), _fmt(b), _fmt(d)])


def write_curve_csv(path: str | Path, curve: DensityCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "density"])
        for x, d in zip(curve.grid, curve.density):
            w.writerow([_fmt(x), _fmt(d)])


def write_atoms_csv(path: str | Path, atoms: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location", "mass"])
        for loc, mass in atoms:
            w.writerow([_fmt(loc), _fmt(mass)])


def read_curve_csv(path: str | Path, atoms_path: str | Path | None = None) -> DensityCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    atoms: tuple = ()
    if atoms_path is not None:
        a = np.loadtxt(atoms_path, delimiter=",", skiprows=1, ndmin=2)
        atoms = tuple((float(r[0]), float(r[1])) for r in a)
    return DensityCurve(data[:, 0], data[:, 1], atoms)
