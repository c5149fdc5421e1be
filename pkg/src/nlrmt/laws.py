"""Tabulated spectral laws and the closed-form Marchenko-Pastur law."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


@dataclass
class SpectralDensity:
    """A law on [0, inf): absolutely continuous part on a grid plus an atom at 0.

    ``cumulative`` is the integral of ``rho`` from the first grid point; when
    omitted it is built by the trapezoid rule.
    """

    grid: np.ndarray
    rho: np.ndarray
    eta: float = 0.0
    atom_at_zero: float = 0.0
    support: tuple[float, float] = (math.nan, math.nan)
    params: dict = field(default_factory=dict)
    cumulative: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.grid.shape != self.rho.shape or self.grid.ndim != 1:
            raise ValueError("grid and rho must be 1-d arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.cumulative is None:
            self.cumulative = integrate.cumulative_trapezoid(self.rho, self.grid, initial=0.0)
        if not 0.0 <= self.atom_at_zero <= 1.0 + 1e-12:
            raise ValueError(f"atom mass {self.atom_at_zero} outside [0, 1]")

    @property
    def total_mass_check(self) -> float:
        """atom + integral of rho; 1 up to discretization error."""
        return self.atom_at_zero + float(self.cumulative[-1])

    def moment(self, q: int) -> float:
        cont = float(integrate.trapezoid(self.grid**q * self.rho, self.grid))
        return cont + (self.atom_at_zero if q == 0 else 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cont = np.interp(x, self.grid, self.cumulative, left=0.0, right=float(self.cumulative[-1]))
        return cont + self.atom_at_zero * (x >= 0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws (the continuous part is renormalized to 1 - atom)."""
        u = rng.random(n)
        cont_mass = float(self.cumulative[-1])
        out = np.zeros(n)
        cont = u >= self.atom_at_zero
        v = (u[cont] - self.atom_at_zero) / (1.0 - self.atom_at_zero) * cont_mass
        # cumulative may have flat stretches (gaps); keep the strictly increasing points
        keep = np.concatenate([[True], np.diff(self.cumulative) > 0])
        out[cont] = np.interp(v, self.cumulative[keep], self.grid[keep])
        return out


# --------------------------------------------------------------------------
# Marchenko-Pastur
# --------------------------------------------------------------------------


def mp_edges(shape: float, scale: float = 1.0) -> tuple[float, float]:
    r = math.sqrt(shape)
    return scale * (1.0 - r) ** 2, scale * (1.0 + r) ** 2


def mp_atom(shape: float) -> float:
    return max(0.0, 1.0 - 1.0 / shape)


def mp_density(x, shape: float, scale: float = 1.0):
    """Density of the continuous part (mass min(1, 1/shape))."""
    a, b = mp_edges(shape, scale)
    x = np.asarray(x, dtype=float)
    inside = (x > a) & (x < b)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((b - xi) * (xi - a)) / (2.0 * math.pi * scale * shape * xi)
    return out


def mp_stieltjes(z, shape: float, scale: float = 1.0):
    """G(z) = int dmu(x) / (x - z), the root of shape*s*z G^2 + (z - s(1 - shape)) G + 1 = 0 with Im G Im z > 0."""
    z = np.asarray(z, dtype=complex)
    A = shape * scale * z
    B = z - scale * (1.0 - shape)
    disc = np.sqrt(B * B - 4.0 * A)
    r1 = (-B + disc) / (2.0 * A)
    r2 = (-B - disc) / (2.0 * A)
    good1 = r1.imag * z.imag > 0
    return np.where(good1, r1, r2)


def mp_law(shape: float, scale: float = 1.0, n_points: int = 4001) -> SpectralDensity:
    """Closed-form MP on a Chebyshev-like grid, CDF integrated in the angle variable.

    With x = c - h cos t the density element is smooth in t, so the trapezoid
    rule in t is spectrally accurate despite the square-root edges.
    """
    a, b = mp_edges(shape, scale)
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    t = np.linspace(0.0, math.pi, n_points)
    x = c - h * np.cos(t)
    # rho(x) dx/dt, with sqrt((b-x)(x-a)) = h sin t
    x_safe = np.where(x > 0, x, 1.0)
    # at x = a = 0 (shape 1) the element tends to 2h / (2 pi s shape)
    dens_t = np.where(x > 0, (h * np.sin(t)) ** 2 / x_safe, 2.0 * h) / (2.0 * math.pi * scale * shape)
    cum = integrate.cumulative_trapezoid(dens_t, t, initial=0.0)
    # x is strictly increasing on t in [0, pi]
    rho = mp_density(x, shape, scale)
    return SpectralDensity(
        grid=x,
        rho=rho,
        eta=0.0,
        atom_at_zero=mp_atom(shape),
        support=(a, b),
        params={"law": "marchenko-pastur", "shape": shape, "scale": scale},
        cumulative=cum,
    )
