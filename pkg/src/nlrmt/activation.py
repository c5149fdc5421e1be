"""Activation functions and their Gaussian functionals.

Everything the limiting spectrum needs from an activation ``f`` is a pair of
Gaussian integrals (``theta1`` and ``theta2``) taken at the input scale
``sigma = sigma_w * sigma_x``. This module evaluates them by Gauss-Hermite
quadrature with order doubling, plus two independent cross-checks: the Stein
identity ``E[Z g(sZ)] = s E[g'(sZ)]`` and a projection onto orthonormal
Hermite polynomials.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, interpolate
from scipy.special import roots_hermitenorm

KINDS = (
    "linear",
    "tanh",
    "shifted-cos",
    "softplus",
    "monomial",
    "polynomial",
    "tabulated",
    "relu",
)

_ALIASES = {
    "cos": "shifted-cos",
    "smooth-relu": "softplus",
    "identity": "linear",
}

# kinds whose derivatives are not trusted pointwise
_NON_SMOOTH = {"tabulated", "relu"}

GH_ORDERS = (63, 127, 255, 511, 1023)
QUAD_RTOL = 1e-12


class QuadratureError(RuntimeError):
    """Gaussian quadrature failed to converge."""


class ActivationOverflowError(OverflowError):
    """Activation output is not finite (typically large monomials)."""


@dataclass(frozen=True)
class ActivationSpec:
    """An activation ``x -> scale * (raw_f(x) - center)``.

    ``params`` holds kind-specific parameters: ``beta`` for softplus, ``k``
    for monomials, ``coefficients`` (a_1..a_K, no constant term) for
    polynomials, ``x``/``y`` knots for tabulated functions. ``relu`` is the
    non-analytic ``max(x, 0)`` and must be requested with
    ``experimental=True``.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    center: float = 0.0
    scale: float = 1.0
    experimental: bool = False

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "relu" and not self.experimental:
            raise ValueError("relu is outside the analytic class; pass experimental=True")
        if kind == "monomial" and int(self.params.get("k", 0)) < 1:
            raise ValueError("monomial needs params['k'] >= 1")
        if kind == "polynomial" and not self.params.get("coefficients"):
            raise ValueError("polynomial needs params['coefficients'] = [a_1, ..., a_K]")
        if kind == "tabulated":
            x = np.asarray(self.params.get("x", ()), dtype=float)
            y = np.asarray(self.params.get("y", ()), dtype=float)
            if x.ndim != 1 or x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0):
                raise ValueError("tabulated needs strictly increasing params['x'] and matching params['y']")
        if not (math.isfinite(self.center) and math.isfinite(self.scale)):
            raise ValueError("center and scale must be finite")

    @property
    def degree(self) -> int | None:
        """Polynomial degree K, or None for non-polynomial kinds."""
        if self.kind == "linear":
            return 1
        if self.kind == "monomial":
            return int(self.params["k"])
        if self.kind == "polynomial":
            return len(self.params["coefficients"])
        return None

    @property
    def is_smooth(self) -> bool:
        return self.kind not in _NON_SMOOTH

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x, order: int = 1):
        """Pointwise derivative of the (scaled) activation, ``order`` in {1, 2}."""
        x = np.asarray(x, dtype=float)
        return self.scale * _raw_derivative(self, x, order)


def _tabulated_interpolant(spec: ActivationSpec):
    return _pchip(tuple(spec.params["x"]), tuple(spec.params["y"]))


@functools.lru_cache(maxsize=64)
def _pchip(xs: tuple, ys: tuple):
    return interpolate.PchipInterpolator(np.asarray(xs), np.asarray(ys), extrapolate=True)


def _poly_coefficients(spec: ActivationSpec) -> np.ndarray:
    """Ascending power-basis coefficients including the zero constant term."""
    if spec.kind == "monomial":
        c = np.zeros(int(spec.params["k"]) + 1)
        c[-1] = 1.0
        return c
    return np.concatenate([[0.0], np.asarray(spec.params["coefficients"], dtype=float)])


def _raw(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    kind = spec.kind
    if kind == "linear":
        return x.copy()
    if kind == "tanh":
        return np.tanh(x)
    if kind == "shifted-cos":
        return np.cos(x)
    if kind == "softplus":
        beta = float(spec.params.get("beta", 1.0))
        return np.logaddexp(0.0, beta * x) / beta
    if kind in ("monomial", "polynomial"):
        return np.polynomial.polynomial.polyval(x, _poly_coefficients(spec))
    if kind == "tabulated":
        return _tabulated_interpolant(spec)(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    raise AssertionError(kind)


def _raw_derivative(spec: ActivationSpec, x: np.ndarray, order: int) -> np.ndarray:
    kind = spec.kind
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if kind == "linear":
        return np.ones_like(x) if order == 1 else np.zeros_like(x)
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t if order == 1 else -2.0 * t * (1.0 - t * t)
    if kind == "shifted-cos":
        return -np.sin(x) if order == 1 else -np.cos(x)
    if kind == "softplus":
        beta = float(spec.params.get("beta", 1.0))
        s = 0.5 * (1.0 + np.tanh(0.5 * beta * x))
        return s if order == 1 else beta * s * (1.0 - s)
    if kind in ("monomial", "polynomial"):
        c = np.polynomial.polynomial.polyder(_poly_coefficients(spec), order)
        return np.polynomial.polynomial.polyval(x, c)
    if kind == "tabulated":
        return _tabulated_interpolant(spec).derivative(order)(x)
    if kind == "relu":
        return (x > 0).astype(float) if order == 1 else np.zeros_like(x)
    raise AssertionError(kind)


def evaluate(f: ActivationSpec, x):
    """Return ``scale * (raw_f(x) - center)``; scalar in, scalar out."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("activation input must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        out = f.scale * (_raw(f, arr) - f.center)
    if not np.all(np.isfinite(out)):
        raise ActivationOverflowError(
            f"{f.kind} activation overflowed for inputs up to |x| = {np.max(np.abs(arr)):.3g}"
        )
    return float(out) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------
# Gaussian quadrature
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def gauss_hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[g(Z)], Z ~ N(0, 1), exact for degree < 2n."""
    x, w = roots_hermitenorm(n)
    w = w / math.sqrt(2.0 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gaussian_expectation(g: Callable[[np.ndarray], np.ndarray], rtol: float = QUAD_RTOL) -> float:
    """E[g(Z)] for standard normal Z by Gauss-Hermite with order doubling.

    Convergence is declared when successive orders differ by less than
    ``rtol`` relative to ``E|g(Z)|`` (so zero-mean integrands are handled).
    """
    prev = None
    history = []
    for n in GH_ORDERS:
        x, w = gauss_hermite_rule(n)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(g(x), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError(f"integrand not finite on the {n}-point rule")
        value = float(w @ vals)
        scale = max(float(w @ np.abs(vals)), np.finfo(float).tiny)
        history.append(value)
        if prev is not None and abs(value - prev) <= rtol * scale:
            return value
        prev = value
    raise QuadratureError(
        f"Gauss-Hermite did not reach rtol={rtol:g} by {GH_ORDERS[-1]} points; last values {history[-3:]}"
    )


def _gaussian_expectation_piecewise(g, sigma: float, knots: Sequence[float]) -> float:
    """E[g(sigma Z)] by adaptive quadrature split at the kinks of g."""
    pdf = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    breaks = sorted({float(k) / sigma for k in knots})
    edges = [-math.inf, *breaks, math.inf]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(
            lambda t: float(g(np.asarray(sigma * t))) * pdf(t), a, b, epsabs=1e-14, epsrel=1e-13, limit=400
        )
        total += val
        err += e
    if err > 1e-10 * max(1.0, abs(total)):
        raise QuadratureError(f"adaptive quadrature error estimate {err:.2e} too large")
    return total


def _kinks(f: ActivationSpec) -> list[float]:
    if f.kind == "relu":
        return [0.0]
    if f.kind == "tabulated":
        return list(np.asarray(f.params["x"], dtype=float))
    return []


def gaussian_mean(f: ActivationSpec, sigma: float, g: Callable | None = None) -> float:
    """E[h(sigma Z)] where ``h = g`` (defaults to ``f`` itself)."""
    h = f if g is None else g
    if f.is_smooth:
        try:
            return gaussian_expectation(lambda x: h(sigma * x))
        except QuadratureError:
            # nearly non-smooth integrands (softplus with large beta) converge slowly
            return _gaussian_expectation_piecewise(h, sigma, [])
    return _gaussian_expectation_piecewise(h, sigma, _kinks(f))


def _stein_mean(f: ActivationSpec, sigma: float, order: int) -> float:
    """E[He_order(Z) f(sigma Z)], which equals sigma**order E[f^(order)(sigma Z)]."""
    poly = {1: lambda z: z, 2: lambda z: z * z - 1.0}[order]
    if f.is_smooth:
        try:
            return gaussian_expectation(lambda z: poly(z) * f(sigma * z))
        except QuadratureError:
            pass
    # piecewise routine integrates over sigma*Z; rewrite He(Z) in terms of x = sigma Z
    return _gaussian_expectation_piecewise(lambda x: poly(np.asarray(x) / sigma) * f(x), sigma, _kinks(f))


# --------------------------------------------------------------------------
# Centering and functionals
# --------------------------------------------------------------------------


def center_gaussian(f: ActivationSpec, sigma: float = 1.0) -> ActivationSpec:
    """Shift ``f`` so that E[f(sigma Z)] = 0.

    The new center absorbs the current one, so the operation is idempotent.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    raw_mean = gaussian_mean(replace(f, center=0.0, scale=1.0), sigma)
    return replace(f, center=raw_mean)


@dataclass(frozen=True)
class ThetaParams:
    """theta1 = E f(sZ)^2, theta2 = (s E f'(sZ))^2, theta3 = (s^2/2 E f''(sZ))^2, s = sigma_w sigma_x."""

    theta1: float
    theta2: float
    theta3: float = 0.0
    sigma_product: float = 1.0

    def __post_init__(self):
        vals = (self.theta1, self.theta2, self.theta3, self.sigma_product)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"theta parameters must be finite and non-negative, got {vals}")
        # Hermite expansion: theta1 = sum c_k^2 >= c_1^2 = theta2
        if self.theta2 > self.theta1 * (1 + 1e-9) + 1e-14:
            raise ValueError(f"theta2={self.theta2} exceeds theta1={self.theta1}")


def compute_thetas(
    f: ActivationSpec,
    sigma_w: float = 1.0,
    sigma_x: float = 1.0,
    method: str = "auto",
    center_tol: float = 1e-8,
) -> ThetaParams:
    """Gaussian functionals of a centered activation.

    ``method`` picks how derivatives enter: ``"derivative"`` integrates f' and
    f'' directly, ``"stein"`` uses E[Z f] and E[(Z^2-1) f]. ``"auto"`` uses
    derivatives for smooth kinds and Stein otherwise.
    """
    s = float(sigma_w) * float(sigma_x)
    if not s > 0:
        raise ValueError("sigma_w and sigma_x must be positive")
    mean = gaussian_mean(f, s)
    theta1 = gaussian_mean(f, s, g=lambda x: f(x) ** 2)
    if abs(mean) > center_tol * max(1.0, math.sqrt(theta1)):
        raise ValueError(f"activation is not Gaussian-centered at sigma={s:g} (mean {mean:.3e}); use center_gaussian")
    if method == "auto":
        method = "derivative" if f.is_smooth else "stein"
    if method == "derivative":
        d1 = s * gaussian_mean(f, s, g=lambda x: f.derivative(x, 1))
        d2 = s * s * gaussian_mean(f, s, g=lambda x: f.derivative(x, 2))
    elif method == "stein":
        d1 = _stein_mean(f, s, 1)
        d2 = _stein_mean(f, s, 2)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ThetaParams(theta1=theta1, theta2=d1 * d1, theta3=(0.5 * d2) ** 2, sigma_product=s)


def stein_gap(f: ActivationSpec, sigma: float) -> float:
    """|sigma E f'(sigma Z) - E[Z f(sigma Z)]|, zero for any smooth f."""
    direct = sigma * gaussian_mean(f, sigma, g=lambda x: f.derivative(x, 1))
    return abs(direct - _stein_mean(f, sigma, 1))


@dataclass(frozen=True)
class HermiteProjection:
    coefficients: np.ndarray  # c_0 .. c_max in the orthonormal basis He_k / sqrt(k!)
    second_moment: float  # E f(sZ)^2, the Parseval total
    tail: float  # second_moment - sum c_k^2
    converged: bool


def hermite_projection(f: ActivationSpec, sigma: float = 1.0, max_order: int = 120, tail_tol: float = 1e-6) -> HermiteProjection:
    x, w = gauss_hermite_rule(GH_ORDERS[-1])
    fx = np.asarray(f(sigma * x), dtype=float) * w
    coeffs = np.empty(max_order + 1)
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    for k in range(max_order + 1):
        coeffs[k] = fx @ h
        # orthonormal recurrence: h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)
        h_prev, h = h, (x * h - math.sqrt(k) * h_prev) / math.sqrt(k + 1)
    total = gaussian_mean(f, sigma, g=lambda t: f(t) ** 2)
    tail = total - float(coeffs @ coeffs)
    converged = tail <= tail_tol * max(1.0, total)
    if not converged:
        warnings.warn(f"Hermite tail {tail:.2e} above {tail_tol:g} at order {max_order}", RuntimeWarning, stacklevel=2)
    return HermiteProjection(coefficients=coeffs, second_moment=total, tail=tail, converged=converged)


def with_unit_theta1(f: ActivationSpec, sigma: float = 1.0) -> ActivationSpec:
    """Rescale a centered activation so that theta1 = 1 at ``sigma``."""
    theta1 = gaussian_mean(f, sigma, g=lambda x: f(x) ** 2)
    return replace(f, scale=f.scale / math.sqrt(theta1))


# --------------------------------------------------------------------------
# Construction helpers
# --------------------------------------------------------------------------


def make(kind: str, sigma: float = 1.0, auto_center: bool = True, unit_theta1: bool = False, **params) -> ActivationSpec:
    """Build a built-in activation, centered and optionally normalized at ``sigma``.

    >>> make("hermite3").params["coefficients"]
    (-3.0, 0.0, 1.0)
    """
    experimental = bool(params.pop("experimental", False))
    if kind == "hermite3":
        kind, params = "polynomial", {"coefficients": (-3.0, 0.0, 1.0)}
    if kind == "polynomial" and "coefficients" in params:
        params["coefficients"] = tuple(float(c) for c in params["coefficients"])
    if kind == "tabulated":
        params = {"x": tuple(float(v) for v in params["x"]), "y": tuple(float(v) for v in params["y"])}
    f = ActivationSpec(kind, params, experimental=experimental)
    if auto_center:
        f = center_gaussian(f, sigma)
    if unit_theta1:
        f = with_unit_theta1(f, sigma)
    return f


def from_json(obj: Mapping[str, Any], sigma: float = 1.0) -> ActivationSpec:
    """Parse ``{"kind", "params", "scale", "auto_center"}``.

    ``scale`` may be a number or the string ``"unit-theta1"``. An explicit
    ``center`` (as written by ``to_json``) is used as is, without recentering.
    """
    allowed = {"kind", "params", "scale", "auto_center", "experimental", "center"}
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown activation fields: {sorted(unknown)}")
    if "kind" not in obj:
        raise ValueError("activation needs a 'kind'")
    params = dict(obj.get("params") or {})
    if obj.get("experimental"):
        params["experimental"] = True
    scale = obj.get("scale", 1.0)
    explicit_center = "center" in obj
    f = make(
        obj["kind"],
        sigma=sigma,
        auto_center=bool(obj.get("auto_center", True)) and not explicit_center,
        **params,
    )
    if explicit_center:
        f = replace(f, center=float(obj["center"]))
    if scale == "unit-theta1":
        f = with_unit_theta1(f, sigma)
    else:
        f = replace(f, scale=float(scale))
    return f


def to_json(f: ActivationSpec) -> dict:
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in f.params.items()}
    out = {"kind": f.kind, "params": params, "center": f.center, "scale": f.scale}
    if f.experimental:
        out["experimental"] = True
    return out
