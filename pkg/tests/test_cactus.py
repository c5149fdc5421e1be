import csv
import math
from collections import Counter
from fractions import Fraction as F
from pathlib import Path

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from nlrmt import cactus
from nlrmt.cactus import CoincidenceGraph

DATA = Path(__file__).parent / "data"


def nx_classify(ip, jp):
    """Independent oracle: subdivide every edge so parallel edges become a simple graph,
    then a block is a simple cycle iff it has as many edges as vertices."""
    q = len(ip)
    g = nx.Graph()
    for k in range(q):
        for e, (a, b) in enumerate(((("i", ip[k]), ("j", jp[k])), (("j", jp[k]), ("i", ip[(k + 1) % q])))):
            mid = ("m", k, e)
            g.add_edge(a, mid)
            g.add_edge(mid, b)
    ok = True
    n_two = 0
    blocks = list(nx.biconnected_component_edges(g))
    for comp in blocks:
        nodes = {v for e in comp for v in e}
        if len(comp) != len(nodes):
            ok = False
        if len(comp) == 4:  # two parallel edges, subdivided
            n_two += 1
    return ok, q - len(set(ip)), q - len(set(jp)), n_two, len(blocks)


def test_set_partitions_are_bell_many_and_distinct():
    for n in range(1, 8):
        parts = cactus.set_partitions(n)
        assert parts.shape == (cactus.bell(n), n)
        assert len({tuple(r) for r in parts}) == parts.shape[0]
    assert [cactus.bell(n) for n in range(1, 9)] == [1, 2, 5, 15, 52, 203, 877, 4140]


def test_classify_plain_cycle():
    s = cactus.classify(CoincidenceGraph.from_blocks(2))
    assert (s.admissible, s.I_i, s.I_j, s.b, s.cycle_count) == (True, 0, 0, 0, 1)


def test_classify_one_identification():
    s = cactus.classify(CoincidenceGraph.from_blocks(2, i_blocks=[(1, 2)]))
    assert (s.admissible, s.I_i, s.I_j, s.b, s.cycle_count) == (True, 1, 0, 2, 2)


def test_classify_double_identification_not_admissible():
    s = cactus.classify(CoincidenceGraph.from_blocks(2, i_blocks=[(1, 2)], j_blocks=[(1, 2)]))
    assert not s.admissible


@pytest.mark.parametrize("q", [1, 2, 3, 4, 5])
def test_classify_matches_networkx_exhaustively(q):
    parts = [tuple(int(v) for v in r) for r in cactus.set_partitions(q)]
    for ip in parts:
        for jp in parts:
            s = cactus.classify(CoincidenceGraph(ip, jp))
            ok, ii, ij, b, nb = nx_classify(ip, jp)
            assert s.admissible == ok
            assert (s.I_i, s.I_j) == (ii, ij)
            if ok:
                assert (s.b, s.cycle_count) == (b, nb)


@settings(max_examples=150, deadline=None)
@given(hs.data())
def test_classify_matches_networkx_random_q7(data):
    parts = cactus.set_partitions(7)
    a = data.draw(hs.integers(0, len(parts) - 1))
    c = data.draw(hs.integers(0, len(parts) - 1))
    ip, jp = tuple(int(v) for v in parts[a]), tuple(int(v) for v in parts[c])
    s = cactus.classify(CoincidenceGraph(ip, jp))
    ok, ii, ij, b, nb = nx_classify(ip, jp)
    assert s.admissible == ok
    if ok:
        assert (s.I_i, s.I_j, s.b, s.cycle_count) == (ii, ij, b, nb)


def test_count_table_small():
    assert cactus.count_table(1).counts == {(0, 0, 1): 1}
    assert cactus.count_table(2).counts == {(0, 0, 0): 1, (1, 0, 2): 1, (0, 1, 2): 1}


@pytest.mark.parametrize("q", [1, 2, 3, 4, 5, 6])
def test_count_table_matches_golden_csv(q):
    with open(DATA / f"counts_q{q}.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    golden = {(int(r["I_i"]), int(r["I_j"]), int(r["b"])): int(r["count"]) for r in rows}
    assert cactus.count_table(q).counts == golden


@pytest.mark.parametrize("q", range(1, 8))
def test_totals_are_fuss_catalan(q):
    assert cactus.count_table(q).total == math.comb(3 * q, q) // (2 * q + 1)


def test_admissible_graphs_are_trees_of_cycles():
    # a cactus made of the closed walk has I_i + I_j + 1 cycles
    for q in range(1, 7):
        for (ii, ij, b), n in cactus.count_table(q).counts.items():
            assert 0 <= b <= q and ii + ij <= q


def test_capacity_error():
    with pytest.raises(cactus.CapacityError):
        cactus.count_table(9)


def test_moment_q1_is_theta1():
    assert cactus.moment(1, F(7, 3), F(1, 2), F(5), F(2, 9)) == F(7, 3)


def test_moment_q2_formula():
    t1, t2, phi, psi = F(3, 2), F(1, 3), F(2), F(1, 2)
    assert cactus.moment(2, t1, t2, phi, psi) == t2**2 / psi + t1**2 + t1**2 * phi / psi


def test_moment_catalan():
    assert cactus.moment(3, 1, 0, 1, 1) == 5


@pytest.mark.parametrize("q,k,expected", [(3, 0, 1), (3, 1, 3), (4, 2, 6)])
def test_narayana(q, k, expected):
    assert cactus.narayana(q, k) == expected
    assert cactus.count_table(q)[(q - k - 1, k, q)] == expected


def test_narayana_range():
    with pytest.raises(ValueError):
        cactus.narayana(3, 3)


def test_mp_moments():
    assert cactus.mp_moment(1, F(3, 7), F(5, 2)) == F(5, 2)
    assert cactus.mp_moment(2, F(1, 3)) == 1 + F(1, 3)
    assert cactus.mp_moment(4, 1) == 14
    for lam in (F(1, 2), F(1), F(3)):
        assert cactus.mp_moment(2, lam) == cactus.moment(2, 1, 0, lam, 1)


def test_multilayer_mp_moment():
    assert cactus.multilayer_mp_moment(3, F(3), [F(2)]) == cactus.mp_moment(3, F(3, 2))
    assert cactus.multilayer_mp_moment(2, 1, [1, 1]) == 2
    assert cactus.multilayer_mp_moment(3, 2, [1, 2]) == 5


@pytest.mark.parametrize("q", range(1, 8))
def test_theta2_zero_gives_mp(q):
    for phi, psi in ((F(1), F(1)), (F(1, 2), F(1)), (F(3), F(2))):
        assert cactus.moment(q, F(2), 0, phi, psi) == cactus.mp_moment(q, phi / psi, F(2))


def test_float_and_exact_agree():
    for q in range(1, 7):
        exact = cactus.moment(q, F(3, 2), F(1, 3), F(2), F(1, 2))
        approx = cactus.moment(q, 1.5, 1 / 3, 2.0, 0.5)
        assert approx == pytest.approx(float(exact), rel=1e-13)


def test_moment_series_growth():
    ms = cactus.moments(6, 1, 0, 1, 1)
    assert ms.values == (1, 2, 5, 14, 42, 132)
    assert ms[3] == 5
    assert ms.growth_constant() < 4


@pytest.mark.parametrize("q", range(2, 8))
def test_table_support(q):
    for (ii, ij, b), n in cactus.count_table(q).counts.items():
        assert n > 0
        assert ii + ij < q
        assert b <= ii + ij + 1


def test_float_moments_match_series_on_random_tuples():
    from nlrmt import stieltjes as st

    rng = np.random.default_rng(17)
    for _ in range(5):
        t1 = rng.uniform(0.2, 3)
        t2 = t1 * rng.uniform(0, 1)
        phi, psi = rng.uniform(0.2, 4, size=2)
        series = st.moments_from_equation(st.LawParams(t1, t2, phi, psi), 6)
        for q in range(1, 7):
            c = cactus.moment(q, t1, t2, phi, psi)
            assert c > 0
            assert c == pytest.approx(series[q], rel=1e-10)
