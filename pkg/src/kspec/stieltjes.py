"""Fixed-point solvers for the Stieltjes transform of the Kendall LSD.

For z in the upper half plane the subordination value x(z) in the closed
lower half plane solves

    1/x = 1 + 2c T(x, z),    T(x, z) = (1/p) tr[(sigma3 + 2x sigma2 - zI)^{-1} sigma2],

and the Stieltjes transform of the limit is

    s(z) = (1/p) tr[(sigma3 + 2x sigma2 - zI)^{-1}].

Each solver below supplies ``T`` and ``s`` in a different way:

* :class:`FinitePSolver` uses the traces of a finite-``p`` triple (plug-in);
* :class:`ToeplitzSolver` replaces traces by symbol averages over [0, 2 pi);
* :class:`MA1Solver` uses the closed form of the MA(1) symbol integrals;
* :class:`Band2Solver` handles the two-band Toeplitz model, whose sigma3
  is an affine function of sigma2.

All of them share :func:`_iterate`, a damped Picard iteration with Aitken
extrapolation. The map keeps the closed lower half plane invariant, so the
iterate never needs to be reflected.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .models import (
    CorrelationModel,
    DomainError,
    ModelKind,
    SigmaTriple,
    band2_shift,
    sigma_symbols,
    sigma_triple,
)
from .spectra import DensityCurve

DAMPING = 0.5
AITKEN_AFTER = 50
STEP_TOL = 1e-13
RESIDUAL_TOL = 1e-10
MAX_ITER = 10_000
IM_X_CLAMP = 1e-12
IM_X_BRANCH = 1e-6
SYMBOL_EPS = 1e-12


class SolverMode(str, enum.Enum):
    FINITE_P_TRACE = "FinitePTrace"
    TOEPLITZ_FOURIER = "ToeplitzFourier"
    CLOSED_FORM = "ClosedForm"


class ConvergenceError(RuntimeError):
    """The fixed-point iteration did not settle."""

    def __init__(self, message: str, z: complex, residual: float, iterations: int):
        super().__init__(message)
        self.z = z
        self.residual = residual
        self.iterations = iterations


class BranchError(RuntimeError):
    """The iterate or the density left the admissible half plane."""


class SingularSymbolError(ArithmeticError):
    """The resolvent symbol vanishes on the quadrature grid."""


class PoleError(ArithmeticError):
    """A closed-form expression hit its pole."""


class DegenerateError(ArithmeticError):
    """The subordination value collapsed to zero."""


@dataclass(frozen=True)
class SpectralGrid:
    """Energies E and imaginary offset eta; the evaluation points are E + i eta."""

    energies: np.ndarray
    eta: float = 1e-3

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or e.size == 0:
            raise ValueError("energies must be a non-empty 1-d array")
        if e.size > 1 and np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly increasing")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "energies", e)

    @classmethod
    def linspace(cls, lo: float, hi: float, points: int, eta: float = 1e-3) -> "SpectralGrid":
        return cls(np.linspace(lo, hi, points), eta)

    @property
    def z(self) -> np.ndarray:
        return self.energies + 1j * self.eta


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    x: complex
    s: complex
    iterations: int
    residual: float
    mode: SolverMode
    clamped: bool = False

    def to_dict(self) -> dict:
        return {"E": self.z.real, "eta": self.z.imag, "iterations": self.iterations,
                "residual": self.residual, "re_x": self.x.real, "im_x": self.x.imag,
                "re_s": self.s.real, "im_s": self.s.imag, "mode": self.mode.value,
                "clamped": self.clamped}


def _check_z(z: complex) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"z must lie in the upper half plane, got {z}")
    return z


def _iterate(trace_fn, c: float, z: complex, x0: complex, mode: SolverMode,
             s_fn=None, alpha: float = DAMPING, max_iter: int = MAX_ITER) -> StieltjesSolution:
    """Damped fixed point for ``1/x = 1 + 2c T(x, z)``.

    ``trace_fn(x, z)`` returns ``(T, s)``. ``s_fn(x, z)``, if given,
    overrides the Stieltjes value at the converged ``x``.
    """
    z = _check_z(z)
    x = complex(x0)
    if x.imag > 0:
        x = complex(x.real, 0.0)

    def g(v: complex) -> complex:
        t, _ = trace_fn(v, z)
        return (1.0 - alpha) * v + alpha / (1.0 + 2.0 * c * t)

    history: list[complex] = []
    it = 0
    step = math.inf
    while it < max_iter:
        it += 1
        x_new = g(x)
        step = abs(x_new - x)
        x = x_new
        if step < STEP_TOL * max(1.0, abs(x)):
            # residual ~ step / (alpha |x|^2), so small |x| needs extra steps
            t, _ = trace_fn(x, z)
            if abs(1.0 / x - 1.0 - 2.0 * c * t) <= 0.1 * RESIDUAL_TOL or step <= 1e-15 * abs(x):
                break
        history.append(x)
        if it > AITKEN_AFTER and len(history) >= 3 and it % 3 == 0:
            a0, a1, a2 = history[-3:]
            denom = a2 - 2.0 * a1 + a0
            if denom != 0:
                acc = a2 - (a2 - a1) ** 2 / denom
                # accept only if it stays in the closed lower half plane and improves the step
                if acc.imag <= 0 and math.isfinite(acc.real) and abs(g(acc) - acc) < abs(a2 - a1):
                    x = acc
                    history.clear()

    t, s = trace_fn(x, z)
    residual = abs(1.0 / x - 1.0 - 2.0 * c * t)
    settled = step < STEP_TOL * max(1.0, abs(x))
    if not settled or not residual <= RESIDUAL_TOL:
        raise ConvergenceError(
            f"no convergence at z={z} after {it} iterations (residual {residual:.3e})",
            z, residual, it,
        )
    if x.imag > IM_X_BRANCH:
        raise BranchError(f"converged x={x} at z={z} lies in the upper half plane")
    clamped = False
    if x.imag > IM_X_CLAMP:
        x = complex(x.real, 0.0)
        clamped = True
    if s_fn is not None:
        s = s_fn(x, z)
    return StieltjesSolution(z, x, complex(s), it, float(residual), mode, clamped)


# finite-p plug-in ----------------------------------------------------------


def _commute_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a @ b - b @ a)))


@dataclass(frozen=True)
class FinitePSolver:
    """Plug-in solver using the traces of a concrete triple.

    Parameters
    ----------
    triple : SigmaTriple
    c : float
        Aspect ratio p/n.
    backend : {"auto", "spectral", "eig", "direct"}
        ``"spectral"`` diagonalizes sigma2 and sigma3 jointly (they must
        commute) so each iteration costs O(p). ``"eig"`` diagonalizes the
        pencil ``sigma2^{-1/2}(sigma3 - zI)sigma2^{-1/2}`` once per ``z``.
        ``"direct"`` solves a dense complex system every iteration.
        ``"auto"`` takes the first that applies.
    """

    triple: SigmaTriple
    c: float
    backend: str = "auto"
    _d2: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _d3: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _s2_isqrt: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _s2_inv: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    mode = SolverMode.FINITE_P_TRACE

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.c}")
        s2, s3 = self.triple.sigma2, self.triple.sigma3
        backend = self.backend
        scale = max(1.0, float(np.max(np.abs(s3))))
        if backend in ("auto", "spectral") and _commute_gap(s2, s3) < 1e-12 * scale:
            # generic combination separates joint eigenspaces
            _, v = np.linalg.eigh(s3 + (math.sqrt(2.0) - 0.5) * s2)
            d2m = v.T @ s2 @ v
            d3m = v.T @ s3 @ v
            off = max(np.max(np.abs(d2m - np.diag(np.diag(d2m)))),
                      np.max(np.abs(d3m - np.diag(np.diag(d3m)))))
            if off < 1e-9:
                object.__setattr__(self, "_d2", np.diag(d2m).copy())
                object.__setattr__(self, "_d3", np.diag(d3m).copy())
                object.__setattr__(self, "backend", "spectral")
                return
        if backend == "spectral":
            raise ValueError("spectral backend needs commuting sigma2 and sigma3")
        if backend in ("auto", "eig"):
            w, v = np.linalg.eigh(s2)
            if w[0] > 1e-10:
                object.__setattr__(self, "_s2_isqrt", (v / np.sqrt(w)) @ v.T)
                object.__setattr__(self, "_s2_inv", (v / w) @ v.T)
                object.__setattr__(self, "backend", "eig")
                return
            if backend == "eig":
                raise ValueError("eig backend needs a positive definite sigma2")
        object.__setattr__(self, "backend", "direct")

    @property
    def p(self) -> int:
        return self.triple.p

    def _trace_fn(self, z: complex):
        if self.backend == "spectral":
            d2, d3 = self._d2, self._d3
            p = d2.size

            def fn(x, _z=None, z=z):
                inv = 1.0 / (d3 + 2.0 * x * d2 - z)
                return complex(np.dot(inv, d2)) / p, complex(inv.sum()) / p

            return fn
        if self.backend == "eig":
            q = self._s2_isqrt @ (self.triple.sigma3 - z * np.eye(self.p)) @ self._s2_isqrt
            lam, r = np.linalg.eig(q)
            weights = np.diag(np.linalg.solve(r, self._s2_inv @ r))
            p = lam.size

            def fn(x, _z=None, lam=lam, weights=weights):
                inv = 1.0 / (lam + 2.0 * x)
                return complex(inv.sum()) / p, complex(np.dot(inv, weights)) / p

            return fn
        s2, s3 = self.triple.sigma2, self.triple.sigma3
        eye = np.eye(self.p)

        def fn(x, _z=None, z=z):
            m = s3 + 2.0 * x * s2 - z * eye
            inv = np.linalg.inv(m)
            return complex(np.sum(inv * s2.T)) / self.p, complex(np.trace(inv)) / self.p

        return fn

    def traces(self, x: complex, z: complex) -> tuple[complex, complex]:
        return self._trace_fn(complex(z))(complex(x))

    def solve(self, z: complex, x0: complex = 1.0) -> StieltjesSolution:
        z = _check_z(z)
        return _iterate(self._trace_fn(z), self.c, z, x0, self.mode)

    def spectral_window(self) -> tuple[float, float]:
        return _window(np.linalg.eigvalsh(self.triple.sigma3),
                       float(np.linalg.eigvalsh(self.triple.sigma2)[-1]), self.c)

    def cluster(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.triple.sigma3)
        return float(ev[0]), float(ev[-1])


def _window(sigma3_eigs, sigma2_norm: float, c: float) -> tuple[float, float]:
    """Interval holding the LSD: [lambda_min(sigma3), ||sigma3|| + 2||sigma2||(1+sqrt c)^2]."""
    lo = min(0.0, float(np.min(sigma3_eigs)))
    hi = float(np.max(sigma3_eigs)) + 2.0 * sigma2_norm * (1.0 + math.sqrt(c)) ** 2
    return lo, hi


def solve_x_finite_p(triple: SigmaTriple, c: float, z: complex, x0: complex = 1.0,
                     backend: str = "auto") -> StieltjesSolution:
    return FinitePSolver(triple, c, backend).solve(z, x0)


# Toeplitz symbols ----------------------------------------------------------


@lru_cache(maxsize=64)
def _half_period(points: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on [0, pi] and weights equal to the full-period trapezoid for even integrands."""
    half = points // 2
    theta = np.pi * np.arange(half + 1) / half
    w = np.full(half + 1, 2.0 / points)
    w[0] = w[-1] = 1.0 / points
    return theta, w


@lru_cache(maxsize=64)
def _symbol_table(a0: float, coeffs: tuple[float, ...], points: int) -> np.ndarray:
    theta, _ = _half_period(points)
    out = np.full(theta.shape, a0)
    for k, ck in enumerate(coeffs, start=1):
        out = out + 2.0 * ck * np.cos(k * theta)
    return out


@numba.njit(cache=True)
def _symbol_means(f2, f3, w, x, z):
    t = 0j
    s = 0j
    smallest = np.inf
    for j in range(f2.shape[0]):
        f1 = f3[j] + 2.0 * x * f2[j] - z
        a = abs(f1)
        if a < smallest:
            smallest = a
        inv = 1.0 / f1
        t += w[j] * f2[j] * inv
        s += w[j] * inv
    return t, s, smallest


@dataclass(frozen=True)
class _Symbols:
    """Real Fourier data of sigma2 and sigma3 (constant term, cosine coefficients)."""

    f2_a0: float
    f2_c: tuple[float, ...]
    f3_a0: float
    f3_c: tuple[float, ...]

    @classmethod
    def from_model(cls, model: CorrelationModel) -> "_Symbols":
        f2, f3 = sigma_symbols(model)
        return cls(float(f2.a0), tuple(float(v) for v in f2.coeffs),
                   float(f3.a0), tuple(float(v) for v in f3.coeffs))

    def slope_bound(self, x: complex) -> float:
        """Upper bound on |d/dtheta f1| for f1 = f3 + 2 x f2 - z."""
        total = 0.0
        for k, (a, b) in enumerate(zip(self.f3_c, self.f2_c), start=1):
            total += 2.0 * k * abs(a + 2.0 * x * b)
        return total

    def points_for(self, x: complex, z: complex, floor: int) -> int:
        # trapezoid error decays like exp(-N d), d ~ Im z / max|f1'|
        need = 40.0 * self.slope_bound(x) / z.imag
        n = max(floor, 8)
        while n < need and n < 2 ** 21:
            n *= 2
        return n

    def tables(self, points: int):
        _, w = _half_period(points)
        return (_symbol_table(self.f2_a0, self.f2_c, points),
                _symbol_table(self.f3_a0, self.f3_c, points), w)

    def extremes(self, points: int = 4096) -> tuple[float, float, float, float]:
        f2, f3, _ = self.tables(points)
        return float(f2.min()), float(f2.max()), float(f3.min()), float(f3.max())


def _fourier_trace_fn(sym: _Symbols, z: complex, floor: int):
    def fn(x):
        n = sym.points_for(x, z, floor)
        f2, f3, w = sym.tables(n)
        t, s, smallest = _symbol_means(f2, f3, w, complex(x), complex(z))
        if smallest < SYMBOL_EPS:
            raise SingularSymbolError(f"resolvent symbol vanishes (|f1| = {smallest:.2e}) at z={z}")
        return t, s

    return fn


@dataclass(frozen=True)
class ToeplitzSolver:
    """Solver for Toeplitz models with symbol integrals over [0, 2 pi).

    ``quad_points`` is the minimum number of trapezoid nodes on the full
    period. It is doubled automatically when Im z is small compared with
    the symbol's slope, because the integrand then has nearly real poles.
    """

    model: CorrelationModel
    c: float
    quad_points: int = 512
    _sym: _Symbols | None = field(default=None, init=False, repr=False, compare=False)

    mode = SolverMode.TOEPLITZ_FOURIER

    def __post_init__(self):
        if not self.model.is_toeplitz:
            raise DomainError(f"{self.model.kind.value} model has no Toeplitz symbol")
        if self.quad_points < 512:
            raise ValueError(f"quad_points must be >= 512, got {self.quad_points}")
        if not self.c > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.c}")
        object.__setattr__(self, "_sym", _Symbols.from_model(self.model))

    def traces(self, x: complex, z: complex) -> tuple[complex, complex]:
        z = complex(z)
        return _fourier_trace_fn(self._sym, z, self.quad_points)(complex(x))

    def solve(self, z: complex, x0: complex = 1.0) -> StieltjesSolution:
        z = _check_z(z)
        fn = _fourier_trace_fn(self._sym, z, self.quad_points)
        return _iterate(lambda x, _z: fn(x), self.c, z, x0, self.mode)

    def spectral_window(self) -> tuple[float, float]:
        _, f2_max, f3_min, f3_max = self._sym.extremes()
        return _window(np.array([f3_min, f3_max]), f2_max, self.c)

    def cluster(self) -> tuple[float, float]:
        _, _, f3_min, f3_max = self._sym.extremes()
        return f3_min, f3_max


def solve_x_toeplitz(model: CorrelationModel, c: float, z: complex, x0: complex = 1.0,
                     quad_points: int = 512) -> StieltjesSolution:
    return ToeplitzSolver(model, c, quad_points).solve(z, x0)


# MA(1) closed form ---------------------------------------------------------


def _upper_root(w: complex) -> complex:
    """Pick between +-w the value with positive imaginary part."""
    return w if w.imag >= 0 else -w


def ma1_coupling(x: complex, rho: float) -> complex:
    """``c(x, rho) = arcsin(rho/2) / (arcsin(rho) + 2(x-1) arcsin(rho/2))``, zero at rho = 0."""
    if rho == 0.0:
        return 0j
    den = math.asin(rho) + 2.0 * (x - 1.0) * math.asin(rho / 2.0)
    # relative test: both terms scale with rho
    if abs(den) < 1e-12 * abs(math.asin(rho)):
        raise PoleError(f"c(x, rho) has a pole at x={x}, rho={rho}")
    return math.asin(rho / 2.0) / den


def ma1_stieltjes(x: complex, z: complex, rho: float) -> complex:
    """``s = 1/sqrt((1/3 + 2x/3 - z)^2 - 4 b^2)`` on the branch with Im s > 0."""
    a = 1.0 / 3.0 + 2.0 * x / 3.0 - z
    b = (2.0 / math.pi) * math.asin(rho) + (4.0 * (x - 1.0) / math.pi) * math.asin(rho / 2.0)
    # product of principal roots keeps the cut away from the support
    w = np.sqrt(complex(a - 2.0 * b)) * np.sqrt(complex(a + 2.0 * b))
    if w == 0:
        raise SingularSymbolError(f"MA(1) symbol has a double root at z={z}")
    return _upper_root(1.0 / w)


def ma1_trace(x: complex, z: complex, rho: float) -> tuple[complex, complex]:
    s = ma1_stieltjes(x, z, rho)
    k = ma1_coupling(x, rho)
    return k + (1.0 - k * (1.0 + 2.0 * x - 3.0 * z)) / 3.0 * s, s


@dataclass(frozen=True)
class MA1Solver:
    """Closed-form MA(1) solver."""

    rho: float
    c: float

    mode = SolverMode.CLOSED_FORM

    def __post_init__(self):
        if not -0.5 <= self.rho <= 0.5:
            raise DomainError(f"MA(1) needs -1/2 <= rho <= 1/2, got {self.rho}")
        if not self.c > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.c}")

    def traces(self, x: complex, z: complex) -> tuple[complex, complex]:
        return ma1_trace(complex(x), complex(z), self.rho)

    def solve(self, z: complex, x0: complex = 1.0) -> StieltjesSolution:
        rho = self.rho
        return _iterate(lambda x, z: ma1_trace(x, z, rho), self.c, z, x0, self.mode)

    def _symbols(self) -> tuple[float, float, float]:
        h = (2.0 / math.pi) * math.asin(self.rho / 2.0)
        g = (2.0 / math.pi) * math.asin(self.rho) - 2.0 * h
        return h, g, 1.0 / 3.0

    def spectral_window(self) -> tuple[float, float]:
        h, g, d = self._symbols()
        return _window(np.array([d - 2 * abs(g), d + 2 * abs(g)]), d + 2 * abs(h), self.c)

    def cluster(self) -> tuple[float, float]:
        _, g, d = self._symbols()
        return d - 2 * abs(g), d + 2 * abs(g)


def solve_x_ma1(rho: float, c: float, z: complex, x0: complex = 1.0) -> StieltjesSolution:
    return MA1Solver(rho, c).solve(z, x0)


def ma1_equation_residual(rho: float, c: float, z: complex, x: complex, s: complex) -> float:
    """``|(1/2c)(1/x - 1) - (1 - c(x,rho)(1 + 2x - 3z))/3 s - c(x,rho)|``."""
    k = ma1_coupling(x, rho)
    return abs((1.0 / x - 1.0) / (2.0 * c) - (1.0 - k * (1.0 + 2.0 * x - 3.0 * z)) / 3.0 * s - k)


# two-band Toeplitz ---------------------------------------------------------


def _cos_resolvent(w: complex) -> complex:
    """``(1/pi) int_0^pi d theta / (cos theta - w)`` for w off [-1, 1]."""
    # product of principal roots: cut on [-1, 1] only, ~ w at infinity
    return -1.0 / (np.sqrt(w - 1.0) * np.sqrt(w + 1.0))


def band2_means(k: complex, z1: complex, h: float) -> tuple[complex, complex] | None:
    """Symbol means for ``f2 = 1/3 + 2h(cos t + cos 2t)`` by residues.

    Returns ``(mean f2/(k f2 - z1), mean 1/(k f2 - z1))``, or None when the
    two roots in ``u = cos t`` nearly coincide and cancellation would set in.
    """
    if h == 0.0:
        return None
    # k f2 - z1 = A u^2 + B u + C with u = cos t
    a2, a1 = 4.0 * h * k, 2.0 * h * k
    a0 = k * (1.0 / 3.0 - 2.0 * h) - z1
    d = np.sqrt(complex(a1 * a1 - 4.0 * a2 * a0))
    r1, r2 = (-a1 + d) / (2.0 * a2), (-a1 - d) / (2.0 * a2)
    if abs(r1 - r2) < 1e-6 * (1.0 + abs(r1)):
        return None
    m = (_cos_resolvent(r1) - _cos_resolvent(r2)) / (a2 * (r1 - r2))
    return complex((1.0 + z1 * m) / k), complex(m)


@dataclass(frozen=True)
class Band2Solver:
    """Two-band Toeplitz model, where sigma3 = a sigma2 + (1 - a)/3 I.

    With ``z1 = z - (1 - a)/3`` the equation reads

        (1 - x)/(2 c x) = (1/2 pi) int f2 / ((2x + a) f2 - z1) d theta,

    and the Stieltjes transform has the closed form
    ``s = ((2x + a)(1 - x) - 2 c x) / (2 c z1 x)``.

    The symbol is quadratic in cos(theta), so the integral is evaluated
    exactly by partial fractions and residues. Trapezoid quadrature with
    ``quad_points`` nodes is the fallback near a double root.
    """

    rho: float
    c: float
    quad_points: int = 512
    _sym: _Symbols | None = field(default=None, init=False, repr=False, compare=False)

    mode = SolverMode.CLOSED_FORM

    def __post_init__(self):
        model = CorrelationModel.band_toeplitz2(2, self.rho)
        if self.quad_points < 512:
            raise ValueError(f"quad_points must be >= 512, got {self.quad_points}")
        if not self.c > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.c}")
        a = self.shift
        f2, _ = sigma_symbols(model)
        coeffs = tuple(float(v) for v in f2.coeffs)
        sym = _Symbols(1.0 / 3.0, coeffs, a / 3.0 + (1.0 - a) / 3.0, tuple(a * v for v in coeffs))
        if sym.extremes()[0] <= 0:
            raise DomainError(f"band Toeplitz symbol is not positive for rho={self.rho}")
        object.__setattr__(self, "_sym", sym)

    @property
    def shift(self) -> float:
        return band2_shift(self.rho)

    def _trace_fn(self, z: complex):
        a = self.shift
        h = (2.0 / math.pi) * math.asin(self.rho / 2.0)
        z1 = z - (1.0 - a) / 3.0
        quad = _fourier_trace_fn(self._sym, z, self.quad_points)

        def fn(x, _z=None):
            k = 2.0 * x + a
            if k == 0:
                return quad(x)
            out = band2_means(k, z1, h)
            return out if out is not None else quad(x)

        return fn

    def traces(self, x: complex, z: complex) -> tuple[complex, complex]:
        return self._trace_fn(complex(z))(complex(x))

    def closed_s(self, x: complex, z: complex) -> complex:
        if abs(x) < 1e-12:
            raise DegenerateError(f"x collapsed to 0 at z={z}")
        a = self.shift
        z1 = z - (1.0 - a) / 3.0
        return ((2.0 * x + a) * (1.0 - x) - 2.0 * self.c * x) / (2.0 * self.c * z1 * x)

    def solve(self, z: complex, x0: complex = 1.0) -> StieltjesSolution:
        z = _check_z(z)
        return _iterate(self._trace_fn(z), self.c, z, x0, self.mode, s_fn=self.closed_s)

    def spectral_window(self) -> tuple[float, float]:
        _, f2_max, f3_min, f3_max = self._sym.extremes()
        return _window(np.array([f3_min, f3_max]), f2_max, self.c)

    def cluster(self) -> tuple[float, float]:
        _, _, f3_min, f3_max = self._sym.extremes()
        return f3_min, f3_max


def solve_x_band2(rho: float, c: float, z: complex, x0: complex = 1.0,
                  quad_points: int = 512) -> StieltjesSolution:
    return Band2Solver(rho, c, quad_points).solve(z, x0)


def solver_for(model: CorrelationModel, c: float, prefer: str = "closed", quad_points: int = 512):
    """Pick a solver for ``model``; ``prefer="closed"`` uses closed forms where they exist."""
    if prefer == "closed":
        if model.kind is ModelKind.MA1:
            return MA1Solver(model.rho, c)
        if model.kind is ModelKind.BAND_TOEPLITZ2:
            return Band2Solver(model.rho, c, quad_points)
        if model.kind is ModelKind.IDENTITY:
            return MA1Solver(0.0, c)
    if prefer in ("closed", "fourier") and model.is_toeplitz:
        return ToeplitzSolver(model, c, quad_points)
    return FinitePSolver(sigma_triple(model), c)


# independent case ----------------------------------------------------------


def mp_affine_support(c: float) -> tuple[float, float]:
    r = math.sqrt(c)
    return 1.0 / 3.0 + (2.0 / 3.0) * (1.0 - r) ** 2, 1.0 / 3.0 + (2.0 / 3.0) * (1.0 + r) ** 2


def mp_affine_atoms(c: float) -> tuple[tuple[float, float], ...]:
    return ((1.0 / 3.0, 1.0 - 1.0 / c),) if c > 1 else ()


def mp_affine_density(c: float, x):
    """Density of (2/3) MP(c) + 1/3, the Kendall LSD under independence.

    The atom of mass 1 - 1/c at 1/3 (c > 1) is not part of the density;
    see :func:`mp_affine_atoms`.
    """
    if not c > 0:
        raise ValueError(f"aspect ratio must be positive, got {c}")
    lo, hi = mp_affine_support(c)
    x = np.asarray(x, dtype=float)
    inside = (x > lo) & (x < hi)
    xi = np.where(inside, x, 0.5 * (lo + hi))
    val = 9.0 / (4.0 * math.pi * c * (3.0 * xi - 1.0)) * np.sqrt((hi - xi) * (xi - lo))
    out = np.where(inside, val, 0.0)
    return out if out.ndim else float(out)


def mp_density(c: float, x, var: float = 1.0):
    """Standard Marchenko-Pastur density (atom of mass 1 - 1/c at 0 omitted)."""
    lo, hi = var * (1 - math.sqrt(c)) ** 2, var * (1 + math.sqrt(c)) ** 2
    x = np.asarray(x, dtype=float)
    inside = (x > lo) & (x < hi)
    xi = np.where(inside, x, 0.5 * (lo + hi))
    out = np.where(inside, np.sqrt((hi - xi) * (xi - lo)) / (2 * math.pi * var * c * xi), 0.0)
    return out if out.ndim else float(out)


def _cos_grid(lo: float, hi: float, points: int) -> np.ndarray:
    t = np.linspace(math.pi, 0.0, points)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(t)


def mp_affine_curve(c: float, points: int = 2001) -> DensityCurve:
    """Affine-MP law on a Chebyshev-spaced grid, atoms included."""
    lo, hi = mp_affine_support(c)
    grid = _cos_grid(lo, hi, points)
    return DensityCurve(grid, mp_affine_density(c, grid), mp_affine_atoms(c))


def mp_curve(c: float, points: int = 2001) -> DensityCurve:
    lo, hi = (1 - math.sqrt(c)) ** 2, (1 + math.sqrt(c)) ** 2
    grid = _cos_grid(lo, hi, points)
    atoms = ((0.0, 1.0 - 1.0 / c),) if c > 1 else ()
    if atoms and grid[0] <= 0.0:
        grid = grid[1:]
    return DensityCurve(grid, mp_density(c, grid), atoms)


def identity_stieltjes(c: float, z: complex) -> complex:
    """Explicit root of the independent-case quadratic with Im s > 0.

    ``s = [1 - 2c/3 - z + sqrt((z - 1 - 2c/3)^2 - 16c/9)] / ((4/3) c (z - 1/3))``
    for the square-root sign that gives a Stieltjes transform.
    """
    z = _check_z(z)
    root = np.sqrt(complex((z - 1.0 - 2.0 * c / 3.0) ** 2 - 16.0 * c / 9.0))
    den = (4.0 / 3.0) * c * (z - 1.0 / 3.0)
    cands = [(1.0 - 2.0 * c / 3.0 - z + sg * root) / den for sg in (1.0, -1.0)]
    good = [s for s in cands if s.imag > 0 and abs(s) <= 1.0 / z.imag * (1 + 1e-12)]
    if not good:
        good = [max(cands, key=lambda s: s.imag)]
    return complex(min(good, key=abs))


def stieltjes_quadratic_check(c: float, z: complex, s: complex) -> float:
    """``|(2/3) c (z - 1/3) s^2 + (z - 1 + 2c/3) s + 1|``."""
    return abs((2.0 / 3.0) * c * (z - 1.0 / 3.0) * s * s + (z - 1.0 + 2.0 * c / 3.0) * s + 1.0)


def identity_x_residual(c: float, z: complex, x: complex) -> float:
    """``|1/x - 1 - 2c/(1 + 2x - 3z)|``."""
    return abs(1.0 / x - 1.0 - 2.0 * c / (1.0 + 2.0 * x - 3.0 * z))


# densities -----------------------------------------------------------------


@dataclass(frozen=True)
class Sweep:
    """Result of :func:`density_from_stieltjes`: curve plus per-point diagnostics."""

    curve: DensityCurve
    solutions: tuple[StieltjesSolution, ...]

    def diagnostics(self) -> list[dict]:
        return [s.to_dict() for s in self.solutions]


def _sweep(solver, energies: np.ndarray, eta: float) -> list[StieltjesSolution]:
    out = []
    x0: complex = 1.0
    for e in energies:
        try:
            sol = solver.solve(complex(e, eta), x0)
        except ConvergenceError as exc:
            raise ConvergenceError(f"solver failed at energy E={e}: {exc}", exc.z,
                                   exc.residual, exc.iterations) from exc
        out.append(sol)
        x0 = sol.x
    return out


def atom_mass(solver, location: float, eta: float = 1e-5) -> float:
    """Mass of a point mass at ``location`` estimated as eta * Im s(location + i eta)."""
    sol = solver.solve(complex(location, eta))
    return float(eta * sol.s.imag)


def density_from_stieltjes(solver, grid: SpectralGrid, richardson: bool = False,
                           atoms: tuple[float, ...] = ()) -> Sweep:
    """Invert the Stieltjes transform on ``grid`` by continuation in E.

    Parameters
    ----------
    solver
        Any of the solver objects in this module.
    grid : SpectralGrid
        Energies and offset; ``grid.eta`` must lie in [1e-4, 1e-1].
    richardson : bool
        Also solve at ``eta/2`` and extrapolate linearly to ``eta -> 0``.
    atoms : tuple of float
        Known point-mass locations. Each mass is estimated from
        ``eta * Im s`` at a tiny offset and its Lorentzian image is removed
        from the sampled density.
    """
    eta = grid.eta
    if not 1e-4 <= eta <= 1e-1:
        raise ValueError(f"eta must lie in [1e-4, 1e-1], got {eta}")
    sols = _sweep(solver, grid.energies, eta)
    dens = np.array([s.s.imag for s in sols]) / math.pi
    if richardson:
        half = _sweep(solver, grid.energies, eta / 2.0)
        dens = 2.0 * np.array([s.s.imag for s in half]) / math.pi - dens
        sols = sols + half
    found = []
    for loc in atoms:
        m = atom_mass(solver, loc)
        if m > 1e-6:
            lor = m * eta / (math.pi * ((grid.energies - loc) ** 2 + eta ** 2))
            if richardson:
                half_lor = m * (eta / 2) / (math.pi * ((grid.energies - loc) ** 2 + eta ** 2 / 4))
                lor = 2.0 * half_lor - lor
            dens = dens - lor
            found.append((float(loc), m))
    worst = float(dens.min())
    if worst < -1e-6 and not found and not richardson:
        bad = float(grid.energies[int(np.argmin(dens))])
        raise BranchError(f"negative density {worst:.3e} at E={bad}")
    dens = np.clip(dens, 0.0, None)
    return Sweep(DensityCurve(grid.energies, dens, tuple(found)), tuple(sols))


def lsd_energies(solver, points: int = 2000, eta: float = 1e-3, margin: float | None = None
                 ) -> np.ndarray:
    """Energies covering the LSD window, refined to spacing eta/2 over sigma3's spectrum.

    For c > 1 a share 1 - 1/c of the mass sits on the spectrum of sigma3,
    which can be much narrower than the bulk; the refinement resolves it.
    """
    lo, hi = solver.spectral_window()
    if margin is None:
        margin = max(0.25, 50 * eta)
    base = np.linspace(lo - margin, hi + margin, points)
    c_lo, c_hi = solver.cluster()
    pad = 10 * eta
    fine = np.arange(c_lo - pad, c_hi + pad, eta / 2.0)
    return np.unique(np.concatenate((base, fine)))


def lsd_curve(solver, points: int = 2000, eta: float = 1e-3, richardson: bool = False,
              atoms: tuple[float, ...] = ()) -> Sweep:
    return density_from_stieltjes(solver, SpectralGrid(lsd_energies(solver, points, eta), eta),
                                  richardson, atoms)


def uniqueness_spread(solver, z: complex, starts: tuple[complex, ...] | None = None) -> float:
    """Largest distance between fixed points reached from different initial values.

    The default uses eight starting points in the closed lower half plane.
    """
    if starts is None:
        starts = (1.0, 0.5, 2.0, 0.1 - 0.5j, 1.0 - 1.0j, 3.0 - 0.1j, 0.2 - 2.0j, 5.0 - 5.0j)
    xs = [solver.solve(z, x0).x for x0 in starts]
    return max(abs(a - b) for a in xs for b in xs)
