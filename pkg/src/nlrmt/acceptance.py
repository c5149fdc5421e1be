"""The ten acceptance criteria, each a function returning a CriterionResult.

``run_all`` is what ``nlrmt verify`` executes; tests/test_acceptance.py calls
the same functions one by one.
"""
from __future__ import annotations

import functools
import inspect
import math
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction as F
from pathlib import Path
from typing import Callable

import numpy as np

from . import activation as act
from . import cactus, laws, montecarlo as mc, stieltjes as st

DEFAULT_SEED = 0

EXACT_TUPLES = (
    (F(1), F(0), F(1), F(1)),
    (F(1), F(1), F(1), F(1)),
    (F(2), F(1, 2), F(1, 2), F(2)),
    (F(3, 2), F(1, 3), F(2), F(1, 2)),
    (F(1), F(3, 4), F(1, 3), F(5, 2)),
)

FLOAT_TUPLES = (
    (1.0, 0.0, 1.0, 1.0),
    (1.0, 1.0, 1.0, 1.0),
    (2.0, 0.5, 0.5, 2.0),
    (1.0, 0.93, 1.0, 1.0),
    (1.0, 0.6, 3.0, 0.7),
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        summary = ", ".join(f"{k}={_short(v)}" for k, v in self.detail.items() if not isinstance(v, (list, dict)))
        return f"criterion {self.number:2d} [{status}] {self.name} ({self.seconds:.1f}s) {summary}"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "seconds": self.seconds, "detail": self.detail}


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return v


def _timed(number: int, name: str):
    def wrap(fn: Callable[..., tuple[bool, dict]]):
        @functools.wraps(fn)
        def run(*args, **kwargs) -> CriterionResult:
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)

        run.number = number
        return run

    return wrap


# --------------------------------------------------------------------------
# Shared ensembles
# --------------------------------------------------------------------------


def tanh_unit() -> act.ActivationSpec:
    return act.make("tanh", sigma=1.0, auto_center=True, unit_theta1=True)


def _config(f, n0, psi=1.0, phi=1.0, trials=10, seed=DEFAULT_SEED, dist="gaussian") -> mc.EnsembleConfig:
    psi_list = psi if isinstance(psi, tuple) else (psi,)
    shape = mc.ModelShape.from_ratios(n0, phi, list(psi_list))
    return mc.EnsembleConfig(
        shape,
        f,
        dist_w=mc.DistributionSpec(dist),
        dist_x=mc.DistributionSpec(dist),
        trials=trials,
        seed=seed,
        multilayer=len(psi_list) > 1,
    )


@functools.lru_cache(maxsize=None)
def _trials(kind: str, n0: int, dist: str, trials: int, seed: int, workers: int):
    f = tanh_unit() if kind == "tanh" else act.make(kind, sigma=1.0, auto_center=True)
    return mc.final_layer(mc.run_trials(_config(f, n0, trials=trials, seed=seed, dist=dist), workers))


@functools.lru_cache(maxsize=None)
def _density(theta1: float, theta2: float, phi: float, psi: float) -> laws.SpectralDensity:
    return st.density(st.LawParams(theta1, theta2, phi, psi))


# --------------------------------------------------------------------------
# Criteria
# --------------------------------------------------------------------------


@_timed(1, "moment triangle: cactus counts vs fixed-point series, exact")
def criterion_1(q_max: int = 6):
    mismatches = []
    for tup in EXACT_TUPLES:
        series = st.moments_from_equation(st.LawParams(*tup), q_max)
        for q in range(1, q_max + 1):
            c = cactus.moment(q, *tup)
            if c != series[q]:
                mismatches.append({"params": [str(v) for v in tup], "q": q, "cactus": str(c), "series": str(series[q])})
    return not mismatches, {"tuples": len(EXACT_TUPLES), "q_max": q_max, "mismatches": mismatches}


@_timed(2, "Narayana counts at b = q")
def criterion_2(q_max: int = 7):
    bad = []
    for q in range(1, q_max + 1):
        table = cactus.count_table(q)
        for k in range(q):
            got = table[(q - k - 1, k, q)]
            if got != cactus.narayana(q, k):
                bad.append({"q": q, "k": k, "count": got, "narayana": cactus.narayana(q, k)})
    return not bad, {"q_max": q_max, "mismatches": bad}


@_timed(3, "theta2 = 0 density equals Marchenko-Pastur")
def criterion_3(edge_margin: float = 0.0125):
    rows = []
    ok = True
    for phi, psi in ((1.0, 1.0), (1.0, 2.0), (2.0, 1.0)):
        law = _density(1.0, 0.0, phi, psi)
        shape = phi / psi
        a, b = laws.mp_edges(shape)
        margin = edge_margin * (b - a)
        inside = (law.grid > a + margin) & (law.grid < b - margin)
        sup = float(np.max(np.abs(law.rho[inside] - laws.mp_density(law.grid[inside], shape))))
        mass = law.total_mass_check
        m1 = law.moment(1)
        edge_err = max(abs(law.support[0] - a), abs(law.support[1] - b))
        good = sup < 1e-3 and abs(mass - 1) < 2e-3 and abs(m1 - 1) < 2e-3
        ok &= good
        rows.append({"shape": shape, "sup_error": sup, "mass": mass, "m1": m1, "edge_error": edge_err, "pass": good})
    worst = max(r["sup_error"] for r in rows)
    return ok, {"worst_sup_error": worst, "worst_mass_error": max(abs(r["mass"] - 1) for r in rows), "cases": rows}


@_timed(4, "solver residual, Nevanlinna sign and conjugate symmetry on a 20x20 grid")
def criterion_4():
    re = np.linspace(-2.0, 6.0, 20)
    im = np.geomspace(1e-2, 10.0, 20)
    z = (re[:, None] + 1j * im[None, :]).ravel()
    worst_res = worst_sym = 0.0
    min_im = math.inf
    for tup in FLOAT_TUPLES:
        p = st.LawParams(*tup)
        G = st.track(z, p)
        Gc = st.track(np.conj(z), p)
        res = np.abs(st.transcendental_residual(G, z, p))
        worst_res = max(worst_res, float(np.max(res)))
        min_im = min(min_im, float(np.min(G.imag)))
        worst_sym = max(worst_sym, float(np.max(np.abs(Gc - np.conj(G)))))
    ok = worst_res < 1e-9 and min_im > 0 and worst_sym < 1e-12
    return ok, {"max_residual": worst_res, "min_imag_G": min_im, "max_conjugate_gap": worst_sym, "points": z.size * len(FLOAT_TUPLES)}


@_timed(5, "simulated spectra match the limit law (tanh, cos, x^3 - 3x)")
def criterion_5(n0: int = 2000, trials: int = 10, seed: int = DEFAULT_SEED, workers: int = 1):
    detail = {}
    ok = True
    th = act.compute_thetas(tanh_unit(), 1.0, 1.0)
    law = _density(th.theta1, th.theta2, 1.0, 1.0)
    theory = [float(cactus.moment(q, th.theta1, th.theta2, 1.0, 1.0)) for q in range(1, 5)]
    rep = mc.compare(_trials("tanh", n0, "gaussian", trials, seed, workers), law, 4, theory)
    detail["ks_tanh"] = rep.ks_distance
    detail["tanh_max_moment_z"] = max(abs(g[3]) for g in rep.moment_gaps)
    ok &= rep.ks_distance < 0.05
    for kind in ("cos", "hermite3"):
        f = act.make(kind, sigma=1.0, auto_center=True)
        t1 = act.compute_thetas(f, 1.0, 1.0).theta1
        rep = mc.compare(_trials(kind, n0, "gaussian", trials, seed, workers), laws.mp_law(1.0, t1), 4)
        detail[f"ks_{kind}"] = rep.ks_distance
        ok &= rep.ks_distance < 0.05
    return ok, detail


def moment_consistency(spectra, theta1, theta2, phi, psi, q_max: int = 4, n_se: float = 4.0) -> tuple[bool, list[float]]:
    """Pooled empirical m_q within ``n_se`` across-trial standard errors of the limit, q <= q_max."""
    theory = [float(cactus.moment(q, theta1, theta2, phi, psi)) for q in range(1, q_max + 1)]
    means, se = mc.moment_statistics(spectra, q_max)
    z = [float((m - t) / s) for m, t, s in zip(means, theory, se)]
    return all(abs(v) <= n_se for v in z), z


@_timed(6, "universality across entry laws (rademacher, uniform vs gaussian)")
def criterion_6(n0: int = 2000, trials: int = 10, seed: int = DEFAULT_SEED, workers: int = 1):
    ref = _trials("tanh", n0, "gaussian", trials, seed, workers)
    detail = {}
    for dist in ("rademacher", "uniform"):
        detail[f"ks_{dist}"] = mc.ks_two_sample(_trials("tanh", n0, dist, trials, seed, workers), ref)
    return all(v < 0.05 for v in detail.values()), detail


@_timed(7, "multilayer cos spectra are Marchenko-Pastur at every layer")
def criterion_7(n0: int = 1000, trials: int = 10, seed: int = DEFAULT_SEED, workers: int = 1):
    f = act.make("cos", sigma=1.0, auto_center=True)
    detail = {}
    ok = True
    runs = mc.run_trials(_config(f, n0, psi=(1.0, 1.0, 1.0), trials=trials, seed=seed), workers)
    mp1 = laws.mp_law(1.0)
    for p in range(1, 4):
        ks = mc.compare(mc.layer(runs, p), mp1, 2).ks_distance
        detail[f"ks_L3_layer{p}"] = ks
        ok &= ks < 0.06
    runs = mc.run_trials(_config(f, n0, psi=(1.0, 2.0), trials=trials, seed=seed), workers)
    ks = mc.compare(mc.final_layer(runs), laws.mp_law(0.5), 2).ks_distance
    detail["ks_psi_1_2_final"] = ks
    ok &= ks < 0.06
    return ok, detail


def moment_variance(n: int, trials: int, seed: int, q: int = 2, workers: int = 1) -> float:
    """Across-trial variance of m_q for the tanh ensemble with n0 = n1 = m = n."""
    spectra = _trials("tanh", n, "gaussian", trials, seed, workers)
    vals = np.array([mc.empirical_moments(s, q)[q] for s in spectra])
    return float(np.var(vals, ddof=1))


@_timed(8, "variance of m_2 shrinks like 1/n1^2")
def criterion_8(trials: int = 30, seed: int = DEFAULT_SEED, workers: int = 1):
    v500 = moment_variance(500, trials, seed, workers=workers)
    v1000 = moment_variance(1000, trials, seed, workers=workers)
    ratio = v500 / v1000
    return 2.5 <= ratio <= 6.5, {"var_n500": v500, "var_n1000": v1000, "ratio": ratio}


@_timed(9, "ridge trace: simulation vs solver within 2%")
def criterion_9(n0: int = 1000, trials: int = 10, seed: int = DEFAULT_SEED, workers: int = 1):
    f = act.make("linear")
    spectra = mc.final_layer(mc.run_trials(_config(f, n0, trials=trials, seed=seed), workers))
    params = st.LawParams(1.0, 1.0, 1.0, 1.0)
    detail = {}
    ok = True
    for gamma in (0.1, 1.0, 10.0):
        emp = float(np.mean([mc.ridge_trace_from_eigenvalues(s.eigenvalues, s.shape.m, gamma) for s in spectra]))
        theory = st.ridge_trace(params, gamma).trace_per_m
        rel = abs(emp - theory) / theory
        detail[f"rel_err_gamma_{gamma:g}"] = rel
        ok &= rel < 0.02
    return ok, detail


@_timed(10, "simulate output is byte-identical across reruns and worker counts")
def criterion_10(seed: int = 1234):
    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        digests = []
        for run, n_workers in enumerate((1, 2, 1)):
            out = Path(tmp) / f"run{run}"
            code = cli.main(
                ["simulate", "--f", "tanh", "--n0", "400", "--phi", "1", "--psi", "1", "--trials", "3",
                 "--seed", str(seed), "--workers", str(n_workers), "--no-compare", "--out", str(out)]
            )
            if code != 0:
                return False, {"exit_code": code}
            digests.append((out / "eigenvalues.csv").read_bytes())
    same = all(d == digests[0] for d in digests)
    return same, {"runs": len(digests), "identical": same, "bytes": len(digests[0])}


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_all(selected=None, workers: int = 1, log: Callable[[str], None] | None = print) -> list[CriterionResult]:
    results = []
    for crit in CRITERIA:
        if selected and crit.number not in selected:
            continue
        kwargs = {"workers": workers} if "workers" in inspect.signature(crit.__wrapped__).parameters else {}
        r = crit(**kwargs)
        if log:
            log(r.line())
        results.append(r)
    return results
