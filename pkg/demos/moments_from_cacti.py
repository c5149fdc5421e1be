"""
Moments from admissible graphs
==============================

The q-th limiting moment is a weighted count of cactus-shaped quotients of
the 2q-cycle. Here the counts are enumerated, checked against Narayana
numbers and Fuss-Catalan totals, and the resulting moments are compared with
the power series of the fixed-point equation, in exact arithmetic.
"""
import math
from fractions import Fraction as F

from nlrmt import cactus, stieltjes as st

###############################################################################
# Count tables

for q in range(1, 7):
    t = cactus.count_table(q)
    fuss = math.comb(3 * q, q) // (2 * q + 1)
    print(f"q={q}: {len(t.counts):2d} classes, {t.total:5d} admissible graphs (Fuss-Catalan {fuss})")

print("\nq=3 table (I_i, I_j, b): count")
for key, n in sorted(cactus.count_table(3).counts.items()):
    print(" ", key, n)

###############################################################################
# b = q row: Narayana numbers

for q in range(1, 8):
    row = [cactus.count_table(q)[(q - k - 1, k, q)] for k in range(q)]
    assert row == [cactus.narayana(q, k) for k in range(q)]
    print(f"q={q}: {row}")

###############################################################################
# Two routes to the same rational numbers

params = (F(2), F(1, 2), F(1, 2), F(2))
series = st.moments_from_equation(st.LawParams(*params), 6)
for q in range(1, 7):
    c = cactus.moment(q, *params)
    print(f"m_{q} = {c}  (series {'agrees' if c == series[q] else 'DIFFERS'})")
