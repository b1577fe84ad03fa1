"""Finite differences as a gradient referee.

Every backward rule in the tensor library is checked against central
differences: nudge one input coordinate by +-h, difference the scalar
output, compare with the analytic gradient. The error has two regimes:
truncation error shrinks like h^2, roundoff error grows like eps / h,
so plotting the maximum relative error against h gives a U shape whose
bottom sits near h = 1e-5..1e-6 for float64. This demo traces that curve
for one composed expression, then runs the library's full suite.

Run:  python3 demos/gradient_checking.py
"""

import numpy as np

from salattn import tensor as T
from salattn.gradcheck import format_rows, gradient_check, run_suite


def composed(params):
    """A small expression that touches matmul, sigmoid, mul, and sum."""
    a, b, w = params
    h = T.matmul(a, b)
    s = T.sigmoid(h)
    return T.sum_all(T.mul(s, T.matmul(a, w)))


def main():
    rng = np.random.default_rng(404)
    a = T.parameter(rng.uniform(-1.0, 1.0, (4, 3)))
    b = T.parameter(rng.uniform(-1.0, 1.0, (3, 5)))
    w = T.parameter(rng.uniform(-1.0, 1.0, (3, 5)))

    print("step size sweep for d/dparams sum(sigmoid(a b) * (a w))")
    print(f"  {'h':>10}  max relative error")
    for h in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-9):
        err = gradient_check(composed, [a, b, w], step=h)
        print(f"  {h:10.0e}  {err:.3e}")
    print("  truncation dominates on the left, roundoff on the right")

    print()
    print("full suite: every op at five seeded points, plus composed blocks")
    rows = run_suite()
    print(format_rows(rows), end="")
    worst = max(r.max_err for r in rows)
    print(f"worst case across {len(rows)} checks: {worst:.3e}")
    assert all(r.passed for r in rows)


if __name__ == "__main__":
    main()
