"""Intrinsic smoothness and dimension of compositional functions.

A function built by composing low-dimensional pieces can be estimated at
a rate set by its hardest piece, not by the raw input dimension. The
calculator reports ``p*`` and ``t*``, the rate exponent ``p*/(2p*+t*)``
and the network size that the approximation argument needs.

Run: python3 demos/04_intrinsic_dimension.py
"""

import math

from deepiv import CompositionalSpec, intrinsic_summary
from deepiv.theory import classical_rate

d = 10
cases = {
    "Holder p=2 in 10 inputs": CompositionalSpec(0, (d, 1), (d,), (2.0,)),
    "additive g(sum h_j), p=2": CompositionalSpec(2, (d, d, 1, 1), (1, d, 1), (2.0, math.inf, 2.0)),
    "Cobb-Douglas product": CompositionalSpec(1, (d, d, 1), (1, d), (math.inf, math.inf)),
}
print(f"classical series rate for p=2, d={d}: n^-{classical_rate(2.0, d):.3f}")
for name, spec in cases.items():
    s = intrinsic_summary(spec)
    size = "n/a (infinite smoothness)" if s.infinite_smoothness else f"L={s.min_depth}, W={s.min_width}"
    print(f"{name:<28} p*={s.p_star:<5g} t*={s.t_star:<3} rate n^-{s.rate_exponent:.3f}  min size {size}")
