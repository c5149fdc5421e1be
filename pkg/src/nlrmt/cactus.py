"""Admissible coincidence graphs and the moments they generate.

A coincidence graph is the bipartite cycle ``i1 j1 i2 j2 ... iq jq`` after
identifying some i-positions with each other and some j-positions with each
other. Identifications are encoded as a pair of set partitions of
``{0..q-1}`` (restricted growth strings). The graph is admissible when every
biconnected block is a simple cycle (a cactus). Counting admissible graphs by
``(I_i, I_j, b)`` gives the limiting moments as a polynomial in
``theta1, theta2, phi, 1/psi``.

All moment arithmetic is generic: pass :class:`fractions.Fraction` inputs to
get exact rationals, floats for a fast path.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numba
import numpy as np

Q_MAX = 8

# the bundled TBB is too old for numba; skip straight to OpenMP
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class CapacityError(ValueError):
    """Requested order exceeds the enumeration capacity."""


# --------------------------------------------------------------------------
# Set partitions
# --------------------------------------------------------------------------


def set_partitions(n: int) -> np.ndarray:
    """All set partitions of ``{0..n-1}`` as restricted growth strings, shape (Bell(n), n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = [[0]]
    for _ in range(n - 1):
        rows = [r + [v] for r in rows for v in range(max(r) + 2)]
    return np.asarray(rows, dtype=np.int8)


def bell(n: int) -> int:
    """Bell number via the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


# --------------------------------------------------------------------------
# Classification kernel
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _classify_kernel(ip, jp):
    """Block structure of the quotient multigraph.

    Returns (admissible, I_i, I_j, b, n_blocks). Vertices 0..ni-1 are i-blocks,
    ni..ni+nj-1 are j-blocks. Edge 2k joins i_k-j_k, edge 2k+1 joins j_k-i_{k+1}.
    """
    q = ip.shape[0]
    ni = 0
    nj = 0
    for k in range(q):
        if ip[k] + 1 > ni:
            ni = ip[k] + 1
        if jp[k] + 1 > nj:
            nj = jp[k] + 1
    nv = ni + nj
    ne = 2 * q
    eu = np.empty(ne, np.int64)
    ev = np.empty(ne, np.int64)
    for k in range(q):
        eu[2 * k] = ip[k]
        ev[2 * k] = ni + jp[k]
        eu[2 * k + 1] = ni + jp[k]
        ev[2 * k + 1] = ip[(k + 1) % q]

    # CSR adjacency with edge ids
    deg = np.zeros(nv + 1, np.int64)
    for e in range(ne):
        deg[eu[e] + 1] += 1
        deg[ev[e] + 1] += 1
    for v in range(nv):
        deg[v + 1] += deg[v]
    adj_v = np.empty(2 * ne, np.int64)
    adj_e = np.empty(2 * ne, np.int64)
    fill = deg[:nv].copy()
    for e in range(ne):
        a = eu[e]
        b = ev[e]
        adj_v[fill[a]] = b
        adj_e[fill[a]] = e
        fill[a] += 1
        adj_v[fill[b]] = a
        adj_e[fill[b]] = e
        fill[b] += 1

    disc = np.full(nv, -1, np.int64)
    low = np.zeros(nv, np.int64)
    st_v = np.empty(nv, np.int64)
    st_pe = np.empty(nv, np.int64)
    st_pos = np.empty(nv, np.int64)
    estack = np.empty(ne, np.int64)
    mark = np.full(nv, -1, np.int64)
    esp = 0
    sp = 0
    timer = 0
    n_blocks = 0
    n_two = 0
    admissible = True

    disc[0] = 0
    low[0] = 0
    timer = 1
    st_v[0] = 0
    st_pe[0] = -1
    st_pos[0] = deg[0]
    sp = 1
    while sp > 0:
        v = st_v[sp - 1]
        pos = st_pos[sp - 1]
        if pos < deg[v + 1]:
            st_pos[sp - 1] = pos + 1
            w = adj_v[pos]
            e = adj_e[pos]
            if e == st_pe[sp - 1]:
                continue
            if disc[w] == -1:
                estack[esp] = e
                esp += 1
                disc[w] = timer
                low[w] = timer
                timer += 1
                st_v[sp] = w
                st_pe[sp] = e
                st_pos[sp] = deg[w]
                sp += 1
            elif disc[w] < disc[v]:
                # back edge (parallel edges to the parent land here too)
                estack[esp] = e
                esp += 1
                if disc[w] < low[v]:
                    low[v] = disc[w]
        else:
            sp -= 1
            if sp == 0:
                break
            u = st_v[sp - 1]
            if low[v] < low[u]:
                low[u] = low[v]
            if low[v] >= disc[u]:
                pe = st_pe[sp]
                n_e = 0
                n_v = 0
                while True:
                    esp -= 1
                    e = estack[esp]
                    n_e += 1
                    a = eu[e]
                    b = ev[e]
                    if mark[a] != n_blocks:
                        mark[a] = n_blocks
                        n_v += 1
                    if mark[b] != n_blocks:
                        mark[b] = n_blocks
                        n_v += 1
                    if e == pe:
                        break
                if n_e != n_v:
                    admissible = False
                if n_e == 2:
                    n_two += 1
                n_blocks += 1
    return admissible, q - ni, q - nj, n_two, n_blocks


@numba.njit(cache=True, parallel=True)
def _count_kernel(parts):
    n = parts.shape[0]
    q = parts.shape[1]
    local = np.zeros((n, q, q, q + 1), np.int64)
    violations = np.zeros(n, np.int64)
    for a in numba.prange(n):
        for c in range(n):
            ok, ii, ij, b, nb = _classify_kernel(parts[a], parts[c])
            if ok:
                local[a, ii, ij, b] += 1
                if nb != ii + ij + 1:
                    violations[a] += 1
    return local.sum(axis=0), violations.sum()


# --------------------------------------------------------------------------
# Public types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoincidenceGraph:
    """Quotient of the labeled 2q-cycle by an i-partition and a j-partition."""

    i_partition: tuple[int, ...]
    j_partition: tuple[int, ...]

    def __post_init__(self):
        if len(self.i_partition) != len(self.j_partition) or not self.i_partition:
            raise ValueError("partitions must be non-empty and of equal length")
        for p in (self.i_partition, self.j_partition):
            seen = -1
            for v in p:
                if v > seen + 1 or v < 0:
                    raise ValueError(f"{p} is not a restricted growth string")
                seen = max(seen, v)

    @classmethod
    def from_blocks(cls, q: int, i_blocks: Iterable[Iterable[int]] = (), j_blocks: Iterable[Iterable[int]] = ()):
        """Build from lists of identified positions (1-based), e.g. ``i_blocks=[(1, 2)]``."""
        return cls(_rgs(q, i_blocks), _rgs(q, j_blocks))

    @property
    def q(self) -> int:
        return len(self.i_partition)

    def edges(self) -> list[tuple[tuple[str, int], tuple[str, int]]]:
        """The 2q edges, multi-edges kept, as ((side, block), (side, block)) pairs."""
        ip, jp, q = self.i_partition, self.j_partition, self.q
        out = []
        for k in range(q):
            out.append((("i", ip[k]), ("j", jp[k])))
            out.append((("j", jp[k]), ("i", ip[(k + 1) % q])))
        return out


def _rgs(q: int, blocks: Iterable[Iterable[int]]) -> tuple[int, ...]:
    label = list(range(q))
    for block in blocks:
        block = sorted(p - 1 for p in block)
        for p in block[1:]:
            label[p] = label[block[0]]
    relabel: dict[int, int] = {}
    return tuple(relabel.setdefault(v, len(relabel)) for v in label)


@dataclass(frozen=True)
class AdmissibilityStats:
    admissible: bool
    I_i: int
    I_j: int
    b: int
    cycle_count: int


def classify(graph: CoincidenceGraph) -> AdmissibilityStats:
    ok, ii, ij, b, nb = _classify_kernel(
        np.asarray(graph.i_partition, dtype=np.int8), np.asarray(graph.j_partition, dtype=np.int8)
    )
    return AdmissibilityStats(bool(ok), int(ii), int(ij), int(b), int(nb))


@dataclass(frozen=True)
class CactusCountTable:
    """Exact counts A(q, I_i, I_j, b) of admissible graphs."""

    q: int
    counts: dict[tuple[int, int, int], int]

    def __getitem__(self, key: tuple[int, int, int]) -> int:
        return self.counts.get(key, 0)

    def rows(self) -> list[tuple[int, int, int, int, int]]:
        """(q, I_i, I_j, b, count) rows sorted by key."""
        return [(self.q, *k, v) for k, v in sorted(self.counts.items())]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@functools.lru_cache(maxsize=None)
def count_table(q: int, q_max: int = Q_MAX) -> CactusCountTable:
    """Exhaustive count over all Bell(q)^2 partition pairs."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if q > q_max:
        raise CapacityError(f"q={q} exceeds capacity q_max={q_max} (Bell(q)^2 = {bell(q) ** 2} graphs)")
    parts = set_partitions(q)
    counts, violations = _count_kernel(parts)
    if violations:
        raise AssertionError(f"{violations} admissible graphs at q={q} are not trees of cycles")
    table = {tuple(int(v) for v in k): int(counts[k]) for k in zip(*np.nonzero(counts))}
    return CactusCountTable(q=q, counts=table)


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSeries:
    """Moments m_1..m_Q of a law, with the parameters that produced them."""

    values: tuple
    params: dict

    def __getitem__(self, q: int):
        if q < 1:
            raise IndexError("moments are indexed from 1")
        return self.values[q - 1]

    def __len__(self) -> int:
        return len(self.values)

    def growth_constant(self) -> float:
        """max_q m_q^(1/q); a finite value bounded as Q grows indicates compact support."""
        return max(float(abs(v)) ** (1.0 / q) for q, v in enumerate(self.values, start=1))


def moment(q: int, theta1, theta2, phi, psi, q_max: int = Q_MAX):
    """Limiting q-th moment summed over admissible graphs.

    sum A(q, I_i, I_j, b) theta1^b theta2^(q-b) psi^(I_i+1-q) phi^I_j
    """
    table = count_table(q, q_max)
    total = 0
    for (ii, ij, b), n in table.counts.items():
        total += n * theta1**b * theta2 ** (q - b) * phi**ij / psi ** (q - 1 - ii)
    return total


def moments(q_max: int, theta1, theta2, phi, psi) -> MomentSeries:
    vals = tuple(moment(q, theta1, theta2, phi, psi, max(q_max, Q_MAX)) for q in range(1, q_max + 1))
    return MomentSeries(vals, dict(theta1=theta1, theta2=theta2, phi=phi, psi=psi))


def narayana(q: int, k: int) -> int:
    """N(q, k) = C(q, k) C(q-1, k) / (k + 1)."""
    if not 0 <= k <= q - 1:
        raise ValueError(f"k={k} out of range for q={q}")
    num = math.comb(q, k) * math.comb(q - 1, k)
    assert num % (k + 1) == 0
    return num // (k + 1)


def mp_moment(q: int, shape, scale=1):
    """q-th moment of Marchenko-Pastur with ratio ``shape`` and variance ``scale``."""
    if not shape > 0:
        raise ValueError("shape must be positive")
    return scale**q * sum(shape**k * narayana(q, k) for k in range(q))


def multilayer_mp_moment(q: int, phi, psi_list: Sequence):
    """Moment of the theta2 = 0 multilayer law: MP with shape phi / prod(psi_p)."""
    if not psi_list or any(not p > 0 for p in psi_list):
        raise ValueError("psi_list must be non-empty and positive")
    denom = 1
    for p in psi_list:
        denom = denom * p
    shape = Fraction(phi) / Fraction(denom) if _all_rational(phi, *psi_list) else phi / denom
    return mp_moment(q, shape, 1)


def _all_rational(*vals) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in vals)
