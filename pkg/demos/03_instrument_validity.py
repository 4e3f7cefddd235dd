"""Testing whether extra instruments are valid.

Four instruments are maintained as valid. A fifth is appended: in the
first design it is exogenous and relevant, in the second it is built
from the structural error. J compares the estimates with and without it.

Run: python3 demos/03_instrument_validity.py
"""

from deepiv import gen_hausman_design, hausman_test

for valid in (True, False):
    data = gen_hausman_design(2000, valid, rng=11)
    res = hausman_test(data, baseline_count=4)
    label = "valid Z5   " if valid else "invalid Z5 "
    print(f"{label} J = {res.j_stat:9.2f}  critical {res.critical_value:.2f}  "
          f"p = {res.p_value:.3f}  reject: {res.reject}")
