import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs
from scipy import integrate

from nlrmt import cactus, laws, stieltjes as st

MP1 = st.LawParams(1.0, 0.0, 1.0, 1.0)
TUPLES = [
    (1.0, 0.0, 1.0, 1.0),
    (1.0, 1.0, 1.0, 1.0),
    (2.0, 0.5, 0.5, 2.0),
    (1.0, 0.93, 1.0, 1.0),
    (1.0, 0.6, 3.0, 0.7),
]


def test_companion_square_case_is_identity():
    assert st.companion_transform(0.3 + 0.7j, 1j, 2.0, 2.0) == pytest.approx(0.3 + 0.7j)


def test_companion_point_mass_at_zero():
    z = 0.4 + 1.1j
    assert st.companion_transform(-1 / z, z, 0.3, 1.7) == pytest.approx(-1 / z)


def test_companion_fixture():
    assert st.companion_transform(1j, 1j, 0.5, 1.0) == pytest.approx(1j, abs=1e-15)


def test_companion_rejects_real_z():
    with pytest.raises(ValueError):
        st.companion_transform(1.0, 2.0, 1.0, 1.0)


def test_mp_root_at_i():
    G = st.solve_G(1j, MP1).G
    assert G == pytest.approx(complex(laws.mp_stieltjes(1j, 1.0)), abs=1e-10)
    # roots of z G^2 + z G + 1 = 0; the physical one has Im G > 0
    z = 1j
    cands = [(-1 + s * np.sqrt(1 - 4 / z)) / 2 for s in (1, -1)]
    phys = [c for c in cands if c.imag > 0]
    assert len(phys) == 1 and abs(G - phys[0]) < 1e-10


def test_linear_case_is_cubic():
    c = st.quartic_coefficients(np.array([1 + 1j]), 1.0, 1.0, 1.0, 1.0)[0]
    assert c[4] == 0
    assert st._deflated_degree(c[None, :])[0] <= 3


def test_theta2_zero_deflates_to_quadratic():
    c = st.quartic_coefficients(np.array([1 + 1j]), 1.0, 0.0, 1.0, 1.0)[0]
    assert st._deflated_degree(c[None, :])[0] == 2


@pytest.mark.parametrize("tup", TUPLES)
def test_far_field_decay(tup):
    p = st.LawParams(*tup)
    z = np.array([1e6j, 3e5 + 8e5j, -7e5 + 7e5j])
    G = st.track(z, p)
    assert np.max(np.abs(G + 1 / z)) < 1e-11
    for x in (-3.0, 0.0, 5.0):
        z1 = complex(x, 1e4)
        assert abs(st.solve_G(z1, p).G + 1 / z1) < 1e-7


def test_mp_near_axis():
    z = 2 + 0.01j
    assert st.solve_G(z, MP1).G == pytest.approx(complex(laws.mp_stieltjes(z, 1.0)), abs=1e-6)


@pytest.mark.parametrize("tup", TUPLES)
def test_residual_sign_and_symmetry_on_grid(tup):
    p = st.LawParams(*tup)
    re = np.linspace(-2, 6, 20)
    im = np.geomspace(1e-2, 10, 20)
    z = (re[:, None] + 1j * im[None, :]).ravel()
    G = st.track(z, p)
    assert np.max(np.abs(st.transcendental_residual(G, z, p))) < 1e-9
    assert np.all(G.imag > 0)
    assert np.max(np.abs(st.track(np.conj(z), p) - np.conj(G))) < 1e-12


@pytest.mark.parametrize("tup", TUPLES)
def test_nevanlinna_for_zG(tup):
    # mu lives on [0, inf): Im(z G) >= 0 in the upper half plane
    p = st.LawParams(*tup)
    z = np.array([0.5 + 0.3j, 2 + 0.1j, -1 + 1j, 4 + 2j])
    G = st.track(z, p)
    assert np.all((z * G).imag >= -1e-12)


def test_hint_path_agrees_with_tracking():
    p = st.LawParams(*TUPLES[4])
    z = 1.3 + 0.2j
    tracked = st.solve_G(z, p)
    hinted = st.solve_G(z, p, hint=tracked.G + 1e-3)
    assert hinted.G == pytest.approx(tracked.G, abs=1e-14)
    assert tracked.residual < 1e-12


def test_real_z_is_rejected():
    with pytest.raises(ValueError):
        st.solve_G(2 + 0.0j, MP1)


def test_lower_half_plane_is_conjugate():
    z = 1.5 - 0.2j
    assert st.solve_G(z, MP1).G == pytest.approx(np.conj(st.solve_G(np.conj(z), MP1).G), abs=1e-14)


@pytest.mark.parametrize(
    "tup",
    [(F(1), F(0), F(1), F(1)), (F(1), F(1), F(1), F(1)), (F(2), F(1, 2), F(1, 2), F(2)), (F(3, 2), F(1, 3), F(2), F(1, 2))],
)
def test_series_moments_equal_cactus_exactly(tup):
    ms = st.moments_from_equation(st.LawParams(*tup), 6)
    for q in range(1, 7):
        assert ms[q] == cactus.moment(q, *tup)


def test_series_first_two_moments():
    t1, t2, phi, psi = F(5, 3), F(2, 3), F(3, 4), F(6, 5)
    ms = st.moments_from_equation(st.LawParams(t1, t2, phi, psi), 2)
    assert ms[1] == t1
    assert ms[2] == t2**2 / psi + t1**2 * (1 + phi / psi)


def test_series_theta2_zero_is_mp_to_order_8():
    ms = st.moments_from_equation(st.LawParams(F(3), F(0), F(2), F(5)), 8)
    for q in range(1, 9):
        assert ms[q] == cactus.mp_moment(q, F(2, 5), F(3))


@settings(max_examples=20, deadline=None)
@given(
    t1=hs.fractions(F(1, 4), F(4), max_denominator=7),
    r=hs.fractions(F(0), F(1), max_denominator=5),
    phi=hs.fractions(F(1, 4), F(4), max_denominator=5),
    psi=hs.fractions(F(1, 4), F(4), max_denominator=5),
)
def test_series_matches_cactus_property(t1, r, phi, psi):
    p = st.LawParams(t1, t1 * r, phi, psi)
    ms = st.moments_from_equation(p, 4)
    for q in range(1, 5):
        assert ms[q] == cactus.moment(q, t1, t1 * r, phi, psi)


def test_atom():
    assert st.atom_at_zero(st.LawParams(1.0, 0.5, 2.0, 1.0)) == pytest.approx(0.5)
    assert st.atom_at_zero(st.LawParams(1.0, 0.5, 1.0, 2.0)) == 0.0
    # linear f: rank Y <= n0 = psi n1
    assert st.atom_at_zero(st.LawParams(1.0, 1.0, 1.0, 0.5)) == pytest.approx(0.5)


@pytest.fixture(scope="module")
def mp_half():
    return st.density(st.LawParams(1.0, 0.0, 1.0, 2.0))


def test_density_mp_square():
    law = st.density(MP1)
    inside = (law.grid > 0.05) & (law.grid < 3.95)
    err = np.max(np.abs(law.rho[inside] - laws.mp_density(law.grid[inside], 1.0)))
    assert err < 1e-3


def test_density_mp_half_support(mp_half):
    a, b = laws.mp_edges(0.5)
    assert mp_half.support[0] == pytest.approx(a, abs=1e-4)
    assert mp_half.support[1] == pytest.approx(b, abs=1e-4)


@pytest.mark.parametrize("tup", [(1.0, 1.0, 1.0, 1.0), (2.0, 0.5, 0.5, 2.0), (1.0, 0.6, 3.0, 0.7), (1.5, 0.3, 2.0, 1.0)])
def test_density_mass_and_mean(tup):
    law = st.density(st.LawParams(*tup))
    assert law.total_mass_check == pytest.approx(1.0, abs=2e-3)
    assert law.moment(1) == pytest.approx(tup[0], abs=2e-3)
    assert np.all(law.rho >= 0)


def test_density_moments_match_cactus(mp_half):
    p = st.LawParams(2.0, 0.5, 0.5, 2.0)
    law = st.density(p)
    for q in range(1, 5):
        assert law.moment(q) == pytest.approx(float(cactus.moment(q, *(F(v) for v in (2, F(1, 2), F(1, 2), 2)))), rel=5e-3)


def test_ridge_large_gamma():
    p = st.LawParams(1.0, 0.4, 1.0, 2.0)
    r = st.ridge_trace(p, 1e4)
    assert r.trace_per_m * 1e4 == pytest.approx(1.0, abs=1e-3)


def test_ridge_matches_mp_quadrature():
    val, _ = integrate.quad(lambda x: float(laws.mp_density(np.array([x]), 1.0)[0]) / (x + 1), 0, 4, limit=200)
    assert st.ridge_trace(MP1, 1.0).trace_per_m == pytest.approx(val, abs=1e-8)


def test_ridge_monotone_and_loss_positive():
    p = st.LawParams(1.0, 0.7, 1.0, 1.0)
    vals = [st.ridge_trace(p, g) for g in (0.1, 0.3, 1, 3, 10)]
    traces = [v.trace_per_m for v in vals]
    assert all(a > b for a, b in zip(traces, traces[1:]))
    assert all(v.expected_loss_scaled > 0 for v in vals)


def test_ridge_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        st.ridge_trace(MP1, 0.0)


def test_law_params_validation():
    with pytest.raises(ValueError):
        st.LawParams(1.0, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        st.LawParams(1.0, 0.5, 0.0, 1.0)


@pytest.mark.parametrize("tup", TUPLES)
def test_point_invariants(tup):
    p = st.LawParams(*tup)
    for z in (0.7 + 0.05j, 2.5 + 1j, -0.5 + 0.3j):
        pt = st.solve_G(z, p)
        assert pt.G.imag > 0 and pt.Gtilde.imag > 0
        assert pt.residual < 1e-9
        assert abs(pt.H - ((p.psi - 1) / p.psi - z * pt.G / p.psi)) < 1e-12


@pytest.mark.parametrize("phi,psi", [(1.0, 2.0), (2.0, 1.0), (1.0, 0.7)])
def test_shape_inverse_quadratic_is_companion_moment_series(phi, psi):
    # w m^2 + ((1 - psi/phi) w - 1) m + psi/phi = 0 in the moment variable w = 1/z,
    # solved by m(w) = -Gt(lam / w) / w with lam = phi/psi
    lam, r = phi / psi, psi / phi
    p = st.LawParams(1.0, 0.0, phi, psi)
    for w in (0.05 + 0.03j, 0.4 - 0.3j, 2.0 - 1.5j):
        m = -st.solve_G(lam / w, p).Gtilde / w
        assert abs(w * m * m + ((1 - r) * w - 1) * m + r) < 1e-12


@pytest.mark.parametrize("gamma", [0.05, 0.5, 5.0])
def test_ridge_trace_bounds(gamma):
    r = st.ridge_trace(st.LawParams(1.0, 0.6, 3.0, 0.7), gamma)
    assert 0 < r.trace_per_m <= 1 / gamma
