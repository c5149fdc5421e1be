"""Finite-size simulation of M = (1/m) Y Y*, Y = f(W X / sqrt(n0)), and its multilayer variant.

Every matrix is drawn from its own counter-based stream keyed by
``(seed, trial, role)``, and BLAS is pinned to ``blas_threads`` inside a trial,
so a run is a pure function of its config no matter how many worker
processes execute the trials.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import activation as act
from .activation import ActivationSpec
from .cactus import MomentSeries
from .laws import SpectralDensity

MEMORY_BUDGET_BYTES = 2 * 1024**3
DISTRIBUTIONS = ("gaussian", "rademacher", "uniform", "centered-bernoulli")


class MemoryBudgetError(MemoryError):
    pass


# --------------------------------------------------------------------------
# Shapes and entry laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelShape:
    """Simulation sizes and the ratios they approximate.

    ``layer_widths`` lists n_1..n_L; for one layer it is ``(n1,)``.
    """

    n0: int
    m: int
    layer_widths: tuple[int, ...]
    phi: float
    psi_list: tuple[float, ...]
    sigma_w: float = 1.0
    sigma_x: float = 1.0

    def __post_init__(self):
        if self.n0 < 1 or self.m < 1 or any(n < 1 for n in self.layer_widths):
            raise ValueError("dimensions must be positive")
        if len(self.layer_widths) != len(self.psi_list):
            raise ValueError("need one psi per layer")
        if not (self.phi > 0 and all(p > 0 for p in self.psi_list)):
            raise ValueError("phi and psi must be positive")
        if not (self.sigma_w > 0 and self.sigma_x > 0):
            raise ValueError("sigma_w and sigma_x must be positive")
        widths = (self.n0, *self.layer_widths)
        tol = 1.0 / min(widths)
        if abs(self.n0 / self.m - self.phi) > max(tol, self.phi * tol):
            raise ValueError(f"n0/m = {self.n0 / self.m:.6g} does not match phi = {self.phi}")
        for a, b, psi in zip(widths[:-1], widths[1:], self.psi_list):
            if abs(a / b - psi) > max(tol, psi * tol):
                raise ValueError(f"width ratio {a}/{b} does not match psi = {psi}")

    @classmethod
    def from_ratios(cls, n0: int, phi: float, psi: float | Sequence[float] = 1.0, sigma_w=1.0, sigma_x=1.0):
        psi_list = tuple(float(p) for p in (psi if isinstance(psi, (list, tuple)) else [psi]))
        widths = []
        prev = n0
        for p in psi_list:
            prev = max(1, round(prev / p))
            widths.append(prev)
        return cls(n0, max(1, round(n0 / phi)), tuple(widths), float(phi), psi_list, float(sigma_w), float(sigma_x))

    @property
    def n1(self) -> int:
        return self.layer_widths[0]

    @property
    def psi(self) -> float:
        return self.psi_list[0]

    @property
    def layers(self) -> int:
        return len(self.layer_widths)

    def final_shape(self) -> float:
        """phi / prod(psi_p): the MP ratio of the last layer."""
        return self.phi / math.prod(self.psi_list)


@dataclass(frozen=True)
class DistributionSpec:
    kind: str = "gaussian"
    variance: float = 1.0
    p: float = 0.5  # centered-bernoulli only

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.kind!r}")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if self.kind == "centered-bernoulli" and not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


def _generator(seed, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_matrix(rows: int, cols: int, dist: DistributionSpec, seed, *key: int, budget: int = MEMORY_BUDGET_BYTES) -> np.ndarray:
    """i.i.d. centered entries of the given variance; same (seed, key) gives the same matrix."""
    if rows * cols * 8 > budget:
        raise MemoryBudgetError(f"{rows}x{cols} float64 exceeds the {budget / 2**30:.1f} GiB budget")
    rng = _generator(seed, *key)
    s = dist.sigma
    if dist.kind == "gaussian":
        return s * rng.standard_normal((rows, cols))
    if dist.kind == "rademacher":
        return s * (2.0 * rng.integers(0, 2, size=(rows, cols)) - 1.0)
    if dist.kind == "uniform":
        return rng.uniform(-math.sqrt(3.0) * s, math.sqrt(3.0) * s, size=(rows, cols))
    # centered Bernoulli: 1 - p with prob p, -p otherwise, rescaled to the variance
    p = dist.p
    b = (rng.random((rows, cols)) < p).astype(float) - p
    return b * (s / math.sqrt(p * (1.0 - p)))


# --------------------------------------------------------------------------
# Ensemble
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    shape: ModelShape
    activation: ActivationSpec
    dist_w: DistributionSpec = DistributionSpec()
    dist_x: DistributionSpec = DistributionSpec()
    trials: int = 10
    seed: int = 0
    multilayer: bool = False
    gamma_list: tuple[float, ...] = ()
    blas_threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.multilayer and self.shape.layers != 1:
            raise ValueError("a single-layer config takes exactly one psi; set multilayer=True")
        if abs(self.dist_w.variance - self.shape.sigma_w**2) > 1e-12 or abs(self.dist_x.variance - self.shape.sigma_x**2) > 1e-12:
            raise ValueError("distribution variances must equal sigma_w^2 and sigma_x^2")

    @property
    def sigma_product(self) -> float:
        return self.shape.sigma_w * self.shape.sigma_x

    def thetas(self) -> act.ThetaParams:
        return act.compute_thetas(self.activation, self.shape.sigma_w, self.shape.sigma_x)


def forward_layer(W: np.ndarray, Y_prev: np.ndarray, f: ActivationSpec, n_prev: int, renorm: float = 1.0) -> np.ndarray:
    """f(renorm * W Y_prev / sqrt(n_prev)) entrywise."""
    if W.shape[1] != Y_prev.shape[0]:
        raise ValueError(f"cannot multiply {W.shape} by {Y_prev.shape}")
    if Y_prev.shape[0] != n_prev:
        raise ValueError(f"n_prev={n_prev} but Y_prev has {Y_prev.shape[0]} rows")
    pre = W @ Y_prev
    pre *= renorm / math.sqrt(n_prev)
    return act.evaluate(f, pre)


def gram_eigenvalues(Y: np.ndarray, m: int, divisor: float = 1.0) -> np.ndarray:
    """Sorted eigenvalues of Y Y* / (m divisor), diagonalizing the smaller Gram side."""
    n = Y.shape[0]
    if n <= Y.shape[1]:
        gram = Y @ Y.T
    else:
        gram = Y.T @ Y
    gram /= m * divisor
    ev = np.linalg.eigvalsh(gram)
    if n > ev.size:
        ev = np.concatenate([np.zeros(n - ev.size), ev])
    return np.sort(ev)


@dataclass
class EmpiricalSpectrum:
    eigenvalues: np.ndarray
    shape: ModelShape
    layers: int
    layer: int
    seed: int
    trial: int
    distribution_w: DistributionSpec
    distribution_x: DistributionSpec
    activation: ActivationSpec

    def __post_init__(self):
        ev = self.eigenvalues
        if ev.size and ev[0] < -1e-8 * max(ev[-1], 1.0):
            raise ArithmeticError(f"Gram matrix not PSD to tolerance: min eigenvalue {ev[0]:.3e}")


def _renorm(config: EnsembleConfig, theta1: float, layer_index: int) -> float:
    # the first layer already sees variance sigma_w^2 sigma_x^2; later layers carry theta1
    return 1.0 if layer_index == 0 else config.shape.sigma_x / math.sqrt(theta1)


def simulate_trial(config: EnsembleConfig, trial: int, keep_y: bool = False):
    """Spectra of every layer for one trial (a list; single-layer runs have one entry).

    With ``keep_y`` the final Y is returned too, as ``(spectra, Y)``.
    """
    shape = config.shape
    theta1 = config.thetas().theta1 if config.multilayer else 1.0
    with threadpool_limits(limits=config.blas_threads):
        Y = sample_matrix(shape.n0, shape.m, config.dist_x, config.seed, trial, 0)
        widths = (shape.n0, *shape.layer_widths)
        spectra = []
        for p in range(shape.layers):
            W = sample_matrix(widths[p + 1], widths[p], config.dist_w, config.seed, trial, 1 + p)
            Y = forward_layer(W, Y, config.activation, widths[p], _renorm(config, theta1, p))
            del W
            ev = gram_eigenvalues(Y, shape.m, theta1 if config.multilayer else 1.0)
            spectra.append(
                EmpiricalSpectrum(
                    eigenvalues=ev,
                    shape=shape,
                    layers=shape.layers,
                    layer=p + 1,
                    seed=config.seed,
                    trial=trial,
                    distribution_w=config.dist_w,
                    distribution_x=config.dist_x,
                    activation=config.activation,
                )
            )
    return (spectra, Y) if keep_y else spectra


def empirical_spectrum(config: EnsembleConfig, trial: int = 0) -> EmpiricalSpectrum:
    """Final-layer spectrum of one trial."""
    return simulate_trial(config, trial)[-1]


def _run_one(args):
    config, trial = args
    return simulate_trial(config, trial)


def run_trials(config: EnsembleConfig, workers: int = 1) -> list[list[EmpiricalSpectrum]]:
    """All trials, indexed [trial][layer]; output does not depend on ``workers``."""
    jobs = [(config, t) for t in range(config.trials)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def final_layer(trials: list[list[EmpiricalSpectrum]]) -> list[EmpiricalSpectrum]:
    return [t[-1] for t in trials]


def layer(trials: list[list[EmpiricalSpectrum]], index: int) -> list[EmpiricalSpectrum]:
    """Spectra of layer ``index`` (1-based) across trials."""
    return [t[index - 1] for t in trials]


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------


def empirical_moments(spec: EmpiricalSpectrum | np.ndarray, q_max: int = 4) -> MomentSeries:
    if q_max > 8:
        raise ValueError("q_max must be <= 8")
    ev = spec.eigenvalues if isinstance(spec, EmpiricalSpectrum) else np.asarray(spec, dtype=float)
    vals = tuple(math.fsum(ev**q) / ev.size for q in range(1, q_max + 1))
    return MomentSeries(vals, {"n": int(ev.size)})


def moment_statistics(spectra: Sequence[EmpiricalSpectrum], q_max: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Across-trial mean and standard error of m_1..m_q_max."""
    per_trial = np.array([empirical_moments(s, q_max).values for s in spectra])
    means = np.array([math.fsum(col) / len(col) for col in per_trial.T])
    if len(spectra) > 1:
        se = per_trial.std(axis=0, ddof=1) / math.sqrt(len(spectra))
    else:
        se = np.full(q_max, np.nan)
    return means, se


def pooled(spectra: Sequence[EmpiricalSpectrum] | EmpiricalSpectrum) -> np.ndarray:
    if isinstance(spectra, EmpiricalSpectrum):
        spectra = [spectra]
    ev = np.sort(np.concatenate([s.eigenvalues for s in spectra]))
    # numerical zero modes are snapped onto the atom
    return np.where(np.abs(ev) <= 1e-9 * max(float(ev[-1]), 1.0), 0.0, ev)


@dataclass
class ComparisonReport:
    ks_distance: float
    l1_cdf_distance: float
    moment_gaps: list[tuple[int, float, float, float]]  # (q, empirical, theoretical, z)
    trials: int
    mass_outside: float = 0.0

    def as_dict(self) -> dict:
        return {
            "ks_distance": self.ks_distance,
            "l1_cdf_distance": self.l1_cdf_distance,
            "moment_gaps": [dict(q=q, empirical=e, theoretical=t, z=z) for q, e, t, z in self.moment_gaps],
            "trials": self.trials,
            "mass_outside": self.mass_outside,
        }


def ks_distance(sample: np.ndarray, law: SpectralDensity) -> float:
    """sup |F_n - F| for a law whose CDF jumps at 0.

    scipy's one-sample KS assumes a continuous CDF and overstates the distance
    when many eigenvalues sit exactly on the atom, so both one-sided limits
    are compared at every distinct sample value.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    u = np.unique(x)
    n = x.size
    fn_right = np.searchsorted(x, u, side="right") / n
    fn_left = np.searchsorted(x, u, side="left") / n
    f_right = law.cdf(u)
    f_left = f_right - law.atom_at_zero * (u == 0.0)
    return float(max(np.max(np.abs(fn_right - f_right)), np.max(np.abs(fn_left - f_left))))


def l1_cdf_distance(sample: np.ndarray, law: SpectralDensity) -> float:
    """Integral of |F_emp - F_law| over the joint range, divided by the range length."""
    sample = np.sort(sample)
    lo = min(float(sample[0]), float(law.grid[0]))
    hi = max(float(sample[-1]), float(law.grid[-1]))
    x = np.union1d(sample, law.grid[(law.grid >= lo) & (law.grid <= hi)])
    f_emp = np.searchsorted(sample, x, side="right") / sample.size
    diff = np.abs(f_emp - law.cdf(x))
    return float(np.sum(diff[:-1] * np.diff(x)) / (hi - lo))


def compare(
    spectra: Sequence[EmpiricalSpectrum] | EmpiricalSpectrum,
    law: SpectralDensity,
    q_max: int = 4,
    theory_moments: Sequence[float] | None = None,
) -> ComparisonReport:
    """KS and L1 CDF distances of the pooled spectrum to ``law``, plus moment z-scores."""
    if isinstance(spectra, EmpiricalSpectrum):
        spectra = [spectra]
    sample = pooled(spectra)
    if theory_moments is None:
        theory_moments = [law.moment(q) for q in range(1, q_max + 1)]
    means, se = moment_statistics(spectra, q_max)
    gaps = []
    for q in range(1, q_max + 1):
        th = float(theory_moments[q - 1])
        z = (means[q - 1] - th) / se[q - 1] if se[q - 1] > 0 else math.nan
        gaps.append((q, float(means[q - 1]), th, float(z)))
    lo, hi = law.support
    outside = float(np.mean((sample > hi * (1 + 1e-3) + 1e-9) | ((sample < lo * (1 - 1e-3) - 1e-9) & (sample != 0.0))))
    return ComparisonReport(
        ks_distance=ks_distance(sample, law),
        l1_cdf_distance=l1_cdf_distance(sample, law),
        moment_gaps=gaps,
        trials=len(spectra),
        mass_outside=outside,
    )


def ks_two_sample(a: Sequence[EmpiricalSpectrum], b: Sequence[EmpiricalSpectrum]) -> float:
    return float(stats.ks_2samp(pooled(a), pooled(b)).statistic)


def histogram(spectra: Sequence[EmpiricalSpectrum]) -> tuple[np.ndarray, np.ndarray]:
    """Density-normalized histogram of pooled eigenvalues, Freedman-Diaconis bins."""
    return np.histogram(pooled(spectra), bins="fd", density=True)


# --------------------------------------------------------------------------
# Ridge functional
# --------------------------------------------------------------------------


def ridge_trace_from_eigenvalues(eigenvalues: np.ndarray, m: int, gamma: float) -> float:
    """(1/m) Tr (Y*Y/m + gamma)^-1 from the n1 eigenvalues of Y Y*/m."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    ev = np.asarray(eigenvalues, dtype=float)
    return (math.fsum(1.0 / (ev + gamma)) + (m - ev.size) / gamma) / m


def ridge_trace_empirical(Y: np.ndarray, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    m = Y.shape[1]
    return ridge_trace_from_eigenvalues(gram_eigenvalues(Y, m), m, gamma)


# --------------------------------------------------------------------------
# JSON config
# --------------------------------------------------------------------------

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["shape", "activation"],
    "properties": {
        "shape": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n0"],
            "properties": {
                "n0": {"type": "integer", "minimum": 1},
                "n1": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "phi": {"type": "number", "exclusiveMinimum": 0},
                "psi": {"type": "number", "exclusiveMinimum": 0},
                "psi_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "sigma_w": {"type": "number", "exclusiveMinimum": 0},
                "sigma_x": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "activation": {"type": "object"},
        "dist_w": {"$ref": "#/$defs/dist"},
        "dist_x": {"$ref": "#/$defs/dist"},
        "layers": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "gamma_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "blas_threads": {"type": "integer", "minimum": 1},
    },
    "$defs": {
        "dist": {
            "oneOf": [
                {"type": "string", "enum": list(DISTRIBUTIONS)},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"type": "string", "enum": list(DISTRIBUTIONS)},
                        "variance": {"type": "number", "exclusiveMinimum": 0},
                        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    },
                },
            ]
        }
    },
}


def _dist(obj, variance: float) -> DistributionSpec:
    if obj is None:
        return DistributionSpec("gaussian", variance)
    if isinstance(obj, str):
        return DistributionSpec(obj, variance)
    return DistributionSpec(obj["kind"], obj.get("variance", variance), obj.get("p", 0.5))


def config_from_json(obj: Mapping[str, Any]) -> EnsembleConfig:
    """Validate a run config against CONFIG_SCHEMA and build it (unknown fields are rejected)."""
    import jsonschema

    jsonschema.validate(obj, CONFIG_SCHEMA)
    sh = obj["shape"]
    sigma_w = float(sh.get("sigma_w", 1.0))
    sigma_x = float(sh.get("sigma_x", 1.0))
    n0 = int(sh["n0"])
    multilayer = "psi_list" in sh
    if multilayer:
        psi = [float(v) for v in sh["psi_list"]]
    elif "n1" in sh:
        psi = [n0 / int(sh["n1"])]
    else:
        psi = [float(sh.get("psi", 1.0))]
    phi = n0 / int(sh["m"]) if "m" in sh else float(sh.get("phi", 1.0))
    layers = int(obj.get("layers", len(psi)))
    if multilayer and layers != len(psi):
        raise ValueError(f"layers={layers} but psi_list has {len(psi)} entries")
    if not multilayer and layers > 1:
        psi = psi * layers
        multilayer = True
    shape = ModelShape.from_ratios(n0, phi, psi, sigma_w, sigma_x)
    if "m" in sh or "n1" in sh:
        widths = (int(sh["n1"]),) + shape.layer_widths[1:] if "n1" in sh else shape.layer_widths
        shape = replace(shape, m=int(sh.get("m", shape.m)), layer_widths=widths)
    f = act.from_json(obj["activation"], sigma=sigma_w * sigma_x)
    return EnsembleConfig(
        shape=shape,
        activation=f,
        dist_w=_dist(obj.get("dist_w"), sigma_w**2),
        dist_x=_dist(obj.get("dist_x"), sigma_x**2),
        trials=int(obj.get("trials", 10)),
        seed=int(obj.get("seed", 0)),
        multilayer=multilayer,
        gamma_list=tuple(float(g) for g in obj.get("gamma_list", ())),
        blas_threads=int(obj.get("blas_threads", 1)),
    )


def config_to_json(config: EnsembleConfig) -> dict:
    sh = config.shape
    shape: dict[str, Any] = {"n0": sh.n0, "m": sh.m, "sigma_w": sh.sigma_w, "sigma_x": sh.sigma_x}
    if config.multilayer:
        shape["psi_list"] = list(sh.psi_list)
    else:
        shape["n1"] = sh.n1
    return {
        "shape": shape,
        "activation": act.to_json(config.activation),
        "dist_w": {"kind": config.dist_w.kind, "variance": config.dist_w.variance, "p": config.dist_w.p},
        "dist_x": {"kind": config.dist_x.kind, "variance": config.dist_x.variance, "p": config.dist_x.p},
        "layers": sh.layers,
        "trials": config.trials,
        "seed": config.seed,
        "gamma_list": list(config.gamma_list),
        "blas_threads": config.blas_threads,
    }
