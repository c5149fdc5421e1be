"""Stieltjes transform of the limiting law via its quartic fixed-point equation.

The transform G of mu satisfies

    H/z = 1/z + G Gt (theta1 - theta2)/psi + G Gt theta2 / (psi - z G Gt theta2)

with H = (psi - 1)/psi - z G/psi. The companion transform Gt of the law of
Y*Y/m is eliminated through mu_tilde = (1 - lam) delta_0 + lam mu, where
lam = phi/psi = lim n1/m. Writing u = z G Gt (a quadratic in G) and clearing
denominators gives

    E(G) = (-1 - zG)(psi - theta2 u) - (theta1 - theta2) u (psi - theta2 u) - psi theta2 u = 0,

a quartic in G (cubic for linear f, quadratic when theta2 = 0).

The physical root is followed from the large-|z| region, where G ~ -1/z,
down a vertical path to the target point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .activation import ThetaParams
from .cactus import MomentSeries
from .laws import SpectralDensity

DEFLATE_TOL = 1e-13
MAX_SERIES_ORDER = 12


class SolverError(RuntimeError):
    """Root tracking failed."""


class EdgeDegenerateError(SolverError):
    """No root with the required sign of Im G."""

    def __init__(self, message: str, roots):
        super().__init__(message)
        self.roots = roots


@dataclass(frozen=True)
class LawParams:
    theta1: float
    theta2: float
    phi: float
    psi: float

    def __post_init__(self):
        if not self.theta1 > 0:
            raise ValueError("theta1 must be positive")
        if not 0 <= self.theta2 <= self.theta1:
            raise ValueError("need 0 <= theta2 <= theta1")
        if not (self.phi > 0 and self.psi > 0):
            raise ValueError("phi and psi must be positive")

    @classmethod
    def from_thetas(cls, thetas: ThetaParams, phi, psi) -> "LawParams":
        return cls(thetas.theta1, thetas.theta2, phi, psi)

    @property
    def shape(self):
        """lim n1/m, the MP ratio of the theta2 = 0 law."""
        return self.phi / self.psi

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("theta1", "theta2", "phi", "psi")}


def _as_params(params) -> LawParams:
    if isinstance(params, LawParams):
        return params
    return LawParams(**params)


def companion_transform(G, z, phi, psi):
    """Transform of the Y*Y/m law: -(1 - lam)/z + lam G."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ValueError("companion_transform needs z off the real axis")
    lam = phi / psi
    out = -(1.0 - lam) / z + lam * np.asarray(G, dtype=complex)
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Polynomial form
# --------------------------------------------------------------------------


def _pmul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] = out[i + j] + a * b
    return out


def _padd(*ps):
    out = [0] * max(len(p) for p in ps)
    for p in ps:
        for i, a in enumerate(p):
            out[i] = out[i] + a
    return out


def _pscale(c, p):
    return [c * a for a in p]


def quartic_coefficients(z, theta1, theta2, phi, psi) -> np.ndarray:
    """Coefficients c_0..c_4 (ascending in G) of the cleared equation; shape z.shape + (5,)."""
    z = np.asarray(z, dtype=complex)
    lam = phi / psi
    a = theta1 - theta2
    t = theta2
    u = [0.0, -(1.0 - lam), lam * z]
    A = [-1.0, -z]
    B = _padd([psi], _pscale(-t, u))
    E = _padd(_pmul(A, B), _pscale(-a, _pmul(u, B)), _pscale(-psi * t, u))
    out = np.zeros(z.shape + (5,), dtype=complex)
    for k, c in enumerate(E):
        out[..., k] = c
    return out


def transcendental_residual(G, z, params) -> np.ndarray:
    """|H/z - 1/z - P(theta1 - theta2)/psi - P theta2 / (psi - z P theta2)|, P = G Gt."""
    p = _as_params(params)
    G = np.asarray(G, dtype=complex)
    z = np.asarray(z, dtype=complex)
    lam = p.shape
    Gt = lam * G - (1.0 - lam) / z
    P = G * Gt
    H = (p.psi - 1.0) / p.psi - z * G / p.psi
    rhs = 1.0 / z + P * (p.theta1 - p.theta2) / p.psi + P * p.theta2 / (p.psi - z * P * p.theta2)
    return np.abs(H / z - rhs)


def _deflated_degree(coeffs: np.ndarray) -> np.ndarray:
    mag = np.abs(coeffs)
    norm = np.sqrt((mag**2).sum(axis=-1, keepdims=True))
    significant = mag >= DEFLATE_TOL * norm
    # index of highest significant coefficient
    idx = np.arange(coeffs.shape[-1])
    return np.max(np.where(significant, idx, -1), axis=-1)


def polynomial_roots(coeffs: np.ndarray, newton_steps: int = 2) -> np.ndarray:
    """Roots of a batch of ascending-coefficient polynomials, padded with nan to width 4.

    Leading coefficients below DEFLATE_TOL times the coefficient norm are
    dropped first. Roots come from companion-matrix eigenvalues and are then
    polished by Newton steps on the full polynomial.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    n, width = coeffs.shape
    out = np.full((n, width - 1), np.nan + 1j * np.nan, dtype=complex)
    deg = _deflated_degree(coeffs)
    for d in np.unique(deg):
        if d < 1:
            continue
        rows = np.nonzero(deg == d)[0]
        c = coeffs[rows, : d + 1]
        comp = np.zeros((rows.size, d, d), dtype=complex)
        if d > 1:
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        comp[:, :, -1] = -c[:, :d] / c[:, d : d + 1]
        r = np.linalg.eigvals(comp)
        dc = c[:, 1:] * np.arange(1, d + 1)
        for _ in range(newton_steps):
            val = _horner(c, r)
            der = _horner(dc, r)
            step = np.where(der != 0, val / np.where(der != 0, der, 1.0), 0.0)
            r = r - step
        out[rows, :d] = r
    return out


def _horner(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate ascending-coefficient rows c (n, d+1) at points x (n, k)."""
    acc = np.zeros_like(x)
    for k in range(c.shape[1] - 1, -1, -1):
        acc = acc * x + c[:, k : k + 1]
    return acc


# --------------------------------------------------------------------------
# Moments at infinity
# --------------------------------------------------------------------------


def moments_from_equation(params, Q: int = 8) -> MomentSeries:
    """m_1..m_Q from the expansion -G = 1/z + sum m_q z^(-q-1).

    With w = 1/z and S = zG = -(1 + sum m_q w^q), the cleared equation is a
    power series in w whose w^q coefficient is psi m_q plus terms in lower
    moments, so the moments follow one at a time. Fractions in, Fractions out.
    """
    if not 1 <= Q <= MAX_SERIES_ORDER:
        raise ValueError(f"Q must be in 1..{MAX_SERIES_ORDER}")
    p = _as_params(params)
    th1, th2, phi, psi = p.theta1, p.theta2, p.phi, p.psi
    exact = all(isinstance(v, (int, Fraction)) for v in (th1, th2, phi, psi))
    one = Fraction(1) if exact else 1.0
    lam = Fraction(phi) / psi if exact else phi / psi
    a = th1 - th2
    t = th2
    n = Q + 1

    def mul(x, y):
        r = [0 * one] * n
        for i, xi in enumerate(x):
            if xi == 0:
                continue
            for j in range(n - i):
                r[i + j] += xi * y[j]
        return r

    m = [one] + [0 * one] * Q
    for q in range(1, Q + 1):
        m[q] = 0 * one
        S = [-v for v in m]
        inner = [lam * s for s in S]
        inner[0] += lam - one
        u = [0 * one] + mul(S, inner)[: n - 1]  # w S (lam S - 1 + lam)
        neg1_minus_S = [-one - S[0]] + [-s for s in S[1:]]
        B = [-t * v for v in u]
        B[0] += psi
        E_q = mul(neg1_minus_S, B)[q] - a * mul(u, B)[q] - psi * t * u[q]
        m[q] = -E_q / psi
    return MomentSeries(tuple(m[1:]), {"theta1": th1, "theta2": th2, "phi": phi, "psi": psi})


# --------------------------------------------------------------------------
# Root tracking
# --------------------------------------------------------------------------


def _float_params(p: LawParams) -> LawParams:
    return LawParams(float(p.theta1), float(p.theta2), float(p.phi), float(p.psi))


def support_radius_estimate(params) -> float:
    """Generous upper bound for the support, from the growth of the moments."""
    ms = moments_from_equation(_float_params(_as_params(params)), MAX_SERIES_ORDER)
    return 1.5 * ms.growth_constant() * MAX_SERIES_ORDER ** (1.5 / MAX_SERIES_ORDER)


def _series_hint(z: np.ndarray, moments: tuple) -> np.ndarray:
    w = 1.0 / z
    acc = np.zeros_like(z)
    for mq in reversed((1.0,) + tuple(float(v) for v in moments)):
        acc = acc * w + mq
    return -w * acc


def _roots_at(z: np.ndarray, p: LawParams) -> np.ndarray:
    return polynomial_roots(quartic_coefficients(z, p.theta1, p.theta2, p.phi, p.psi))


def _pick_nearest(roots: np.ndarray, ref: np.ndarray, sign: np.ndarray):
    """Nearest admissible root to ref; also returns the ratio best/second-best distance."""
    d = np.abs(roots - ref[:, None])
    bad = ~np.isfinite(d) | (roots.imag * sign[:, None] < 0)
    d = np.where(bad, np.inf, d)
    order = np.argsort(d, axis=1)
    best = np.take_along_axis(d, order[:, :1], axis=1)[:, 0]
    second = np.take_along_axis(d, order[:, 1:2], axis=1)[:, 0]
    chosen = np.take_along_axis(roots, order[:, :1], axis=1)[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.isfinite(second), best / second, 0.0)
    return chosen, ratio, np.isfinite(best)


def _tangent(z: np.ndarray, G: np.ndarray, p: LawParams) -> np.ndarray:
    """dG/dz = -E_z / E_G along the root branch (E_z by central difference in z)."""
    c = quartic_coefficients(z, p.theta1, p.theta2, p.phi, p.psi)
    dc = c[:, 1:] * np.arange(1, 5)
    e_g = _horner(dc, G[:, None])[:, 0]
    dz = 1e-6 * np.maximum(np.abs(z), 1.0)
    cp = quartic_coefficients(z + dz, p.theta1, p.theta2, p.phi, p.psi)
    cm = quartic_coefficients(z - dz, p.theta1, p.theta2, p.phi, p.psi)
    e_z = (_horner(cp, G[:, None])[:, 0] - _horner(cm, G[:, None])[:, 0]) / (2.0 * dz)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = -e_z / e_g
    return np.where(np.isfinite(slope), slope, 0.0)


def _advance(x, y0, y1, G, p, sign, depth=0):
    """Move the tracked roots from x + i y0 to x + i y1 (arrays over points, y signed)."""
    z0 = x + 1j * y0
    z1 = x + 1j * y1
    predicted = G + _tangent(z0, G, p) * (z1 - z0)
    roots = _roots_at(z1, p)
    chosen, ratio, ok = _pick_nearest(roots, predicted, sign)
    # near-tie between candidates: split the step geometrically
    ambiguous = (ratio > 0.25) | ~ok
    if np.any(ambiguous) and depth < 10:
        idx = np.nonzero(ambiguous)[0]
        ym = np.sqrt(y0[idx] * y1[idx]) * np.sign(y1[idx])
        Gm = _advance(x[idx], y0[idx], ym, G[idx], p, sign[idx], depth + 1)
        chosen[idx] = _advance(x[idx], ym, y1[idx], Gm, p, sign[idx], depth + 1)
    elif np.any(~ok):
        raise EdgeDegenerateError("lost the physical root during tracking", roots[~ok])
    return chosen


def track(z, params, ratio: float = 0.8) -> np.ndarray:
    """G at each z (array, Im z != 0) by continuation from x + i Y, Y far above the support."""
    p = _float_params(_as_params(params))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(z.imag == 0):
        raise ValueError("track needs Im z != 0")
    x = z.real
    sign = np.sign(z.imag)
    yt = np.abs(z.imag)
    radius = support_radius_estimate(p)
    y_top = max(10.0, 4.0 * radius, float(np.max(np.abs(x))) * 2.0)
    moments = moments_from_equation(p, 8).values
    start = x + 1j * sign * np.maximum(y_top, yt)
    roots = _roots_at(start, p)
    G, _, ok = _pick_nearest(roots, _series_hint(start, moments), sign)
    if not np.all(ok):
        raise EdgeDegenerateError("no admissible root at the seeding height", roots[~ok])
    n_steps = int(math.ceil(math.log(y_top / max(float(yt.min()), 1e-300)) / math.log(1.0 / ratio)))
    y_prev = np.maximum(y_top, yt)
    for k in range(1, n_steps + 1):
        y_next = np.maximum(y_top * ratio**k, yt)
        moving = y_next < y_prev
        if np.any(moving):
            G[moving] = _advance(x[moving], sign[moving] * y_prev[moving], sign[moving] * y_next[moving], G[moving], p, sign[moving])
        y_prev = y_next
    return G


@dataclass(frozen=True)
class StieltjesPoint:
    z: complex
    G: complex
    Gtilde: complex
    H: complex
    residual: float


def _point(z: complex, G: complex, p: LawParams) -> StieltjesPoint:
    lam = p.shape
    return StieltjesPoint(
        z=z,
        G=G,
        Gtilde=complex(-(1.0 - lam) / z + lam * G),
        H=complex((p.psi - 1.0) / p.psi - z * G / p.psi),
        residual=float(transcendental_residual(G, z, p)),
    )


def solve_G(z: complex, params, hint: complex | None = None) -> StieltjesPoint:
    """Physical root at one point; ``hint`` short-circuits tracking with a nearest-root pick."""
    p = _float_params(_as_params(params))
    z = complex(z)
    if z.imag == 0:
        raise ValueError("solve_G needs Im z != 0")
    if hint is None:
        G = complex(track(np.array([z]), p)[0])
    else:
        roots = _roots_at(np.array([z]), p)
        G_arr, _, ok = _pick_nearest(roots, np.array([complex(hint)]), np.array([np.sign(z.imag)]))
        if not ok[0]:
            raise EdgeDegenerateError(f"no root with Im G of the sign of Im z at z={z}", roots[0])
        G = complex(G_arr[0])
    return _point(z, G, p)


def solve_many(z, params) -> list[StieltjesPoint]:
    p = _float_params(_as_params(params))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    G = track(z, p)
    return [_point(complex(zi), complex(gi), p) for zi, gi in zip(z, G)]


# --------------------------------------------------------------------------
# Density by inversion
# --------------------------------------------------------------------------


def atom_at_zero(params) -> float:
    """Mass of mu at 0.

    Balancing the leading 1/z terms of the cleared equation as z -> 0 with
    zG -> -atom leaves the candidates 0 and 1 - 1/lam, plus 1 - psi when
    theta1 = theta2 (linear f, where rank Y <= n0). The law carries the
    largest admissible one, matching the rank of Y.
    """
    p = _as_params(params)
    lam = float(p.shape)
    cands = [0.0, 1.0 - 1.0 / lam]
    if p.theta1 == p.theta2:
        cands.append(1.0 - float(p.psi))
    return max(cands)


@dataclass(frozen=True)
class GridConfig:
    n_points: int = 4000
    x_min: float | None = None
    x_max: float | None = None
    eta: float | None = None  # None: max(1e-4, spacing / 2)
    richardson: bool = True
    edge_threshold: float = 1e-6
    edge_eta: float = 1e-10


def _boundary_density(x: np.ndarray, p: LawParams, eta: float, atom: float) -> np.ndarray:
    z = x + 1j * eta
    G = track(z, p)
    return np.imag(G + atom / z) / math.pi


def _edges_from(x: np.ndarray, rho: np.ndarray, threshold: float) -> tuple[float, float]:
    above = np.nonzero(rho > threshold)[0]
    if above.size == 0:
        raise SolverError("density vanishes on the whole grid")
    return float(x[above[0]]), float(x[above[-1]])


def _bisect_edge(lo: float, hi: float, inside_is_hi: bool, p, atom, cfg: GridConfig, iters: int = 40) -> float:
    """Locate where rho (at tiny eta) crosses the threshold between lo and hi."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        r = _boundary_density(np.array([mid]), p, cfg.edge_eta, atom)[0]
        if (r > cfg.edge_threshold) == inside_is_hi:
            hi = mid
        else:
            lo = mid
        if abs(hi - lo) < 1e-12 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _graded_grid(x_min: float, x_max: float, edges, n_points: int) -> np.ndarray:
    """Uniform grid plus points clustered geometrically on both sides of each edge."""
    x = [np.linspace(x_min, x_max, n_points)]
    width = x_max - x_min
    offsets = np.geomspace(1e-7 * width, 0.02 * width, 60)
    for e in edges:
        x.append(e - offsets)
        x.append(e + offsets)
        x.append([e])
    x = np.concatenate(x)
    return np.unique(x[(x >= x_min) & (x <= x_max)])


def density(params, grid_config: GridConfig | None = None) -> SpectralDensity:
    """Limiting density rho(x) = Im G(x + i eta)/pi with one Richardson step in eta.

    Support edges come from a near-boundary pass (eta = edge_eta) followed by
    bisection; the reported grid then covers the support with a small margin.
    The atom at zero is removed from G analytically before inversion.
    """
    cfg = grid_config or GridConfig()
    p = _float_params(_as_params(params))
    atom = atom_at_zero(p)
    radius = support_radius_estimate(p)

    # coarse pass near the boundary to find the support
    coarse = np.linspace(0.0, radius, max(cfg.n_points // 4, 400))
    rho0 = _boundary_density(coarse, p, cfg.edge_eta, atom)
    lo_i, hi_i = _edges_from(coarse, rho0, cfg.edge_threshold)
    h0 = coarse[1] - coarse[0]
    if rho0[-1] > cfg.edge_threshold:
        raise SolverError(f"support extends beyond the radius estimate {radius:g}")
    left = 0.0 if lo_i <= coarse[0] else _bisect_edge(lo_i - h0, lo_i, True, p, atom, cfg)
    right = _bisect_edge(hi_i + h0, hi_i, True, p, atom, cfg)

    width = right - left
    x_min = cfg.x_min if cfg.x_min is not None else left - 0.02 * width
    x_max = cfg.x_max if cfg.x_max is not None else right + 0.02 * width
    x = _graded_grid(x_min, x_max, [left, right], cfg.n_points)
    spacing = (x_max - x_min) / (cfg.n_points - 1)
    if cfg.eta is not None:
        eta = np.full_like(x, cfg.eta)
    else:
        local = np.gradient(x)
        eta = np.maximum(1e-4, 0.5 * local)

    rho = _boundary_density(x, p, eta, atom)
    if cfg.richardson:
        rho = 2.0 * rho - _boundary_density(x, p, 2.0 * eta, atom)
    rho = np.clip(rho, 0.0, None)
    eta = float(cfg.eta) if cfg.eta is not None else max(1e-4, 0.5 * spacing)
    return SpectralDensity(
        grid=x,
        rho=rho,
        eta=eta,
        atom_at_zero=atom,
        support=(left, right),
        params=p.as_dict(),
    )


# --------------------------------------------------------------------------
# Ridge regression functional
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RidgeEval:
    gamma: float
    trace_per_m: float
    expected_loss_scaled: float


def _companion_at_negative(gamma: float, p: LawParams) -> float:
    """Gt(-gamma) = lam G(-gamma) + (1 - lam)/gamma, G taken on the real axis."""
    eps = 1e-9 * (1.0 + gamma)
    approach = complex(track(np.array([-gamma + 1j * eps]), p)[0])
    roots = polynomial_roots(quartic_coefficients(np.array([-gamma + 0j]), p.theta1, p.theta2, p.phi, p.psi))[0]
    roots = roots[np.isfinite(roots)]
    G = roots[np.argmin(np.abs(roots - approach))]
    if abs(G.imag) > 1e-8 * max(1.0, abs(G)):
        raise SolverError(f"G(-{gamma}) is not real: {G}")
    return p.shape * G.real + (1.0 - p.shape) / gamma


def ridge_trace(params, gamma: float) -> RidgeEval:
    """(1/m) E Tr (Y*Y/m + gamma)^-1 in the limit, and -gamma^2 times its gamma-derivative."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    p = _float_params(_as_params(params))
    t = _companion_at_negative(gamma, p)
    h = 1e-4 * gamma
    slope = (_companion_at_negative(gamma + h, p) - _companion_at_negative(gamma - h, p)) / (2.0 * h)
    return RidgeEval(gamma=gamma, trace_per_m=t, expected_loss_scaled=-gamma * gamma * slope)
