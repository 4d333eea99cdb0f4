"""Smoke test for the compiled extension.

Build first:
    cargo build --release -p ascent-kit-py
    cp target/release/libascent_kit_py.so python/ascent_kit_py.so
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import ascent_kit_py as ak


def main():
    print("ascent_kit_py", ak.__version__)
    problems = ak.list_problems()
    assert "rosenbrock" in problems and "hs071" in problems, problems

    r = ak.solve_builtin("rosenbrock", algorithm="lbfgs", xtol_rel=1e-8)
    assert r.status_code in (1, 3, 4), r
    assert max(abs(v - 1.0) for v in r.x_opt) < 1e-6, r

    r = ak.solve_builtin("hs071", algorithm="auglag", xtol_rel=1e-7, maxeval=1000, local_algorithm="mma")
    assert abs(r.f_opt - 17.014017291835) < 1e-4, r

    calls = []

    def sphere(x):
        calls.append(1)
        return sum((v - 0.5) ** 2 for v in x)

    r = ak.minimize(sphere, [2.0, -1.0, 0.0], lower=[-5.0] * 3, upper=[5.0] * 3, algorithm="cobyla")
    assert all(abs(v - 0.5) < 1e-4 for v in r.x_opt), r
    assert r.evaluations == len(calls), (r.evaluations, len(calls))

    r = ak.minimize(
        lambda x: (x[0] - 3.0) ** 2 + math.cosh(x[1]),
        [0.0, 1.0],
        grad=lambda x: [2.0 * (x[0] - 3.0), math.sinh(x[1])],
        algorithm="lbfgs",
    )
    assert abs(r.x_opt[0] - 3.0) < 1e-6 and abs(r.x_opt[1]) < 1e-6, r

    def broken(x):
        raise ValueError("boom")

    try:
        ak.minimize(broken, [0.0], algorithm="cobyla", maxeval=10)
    except RuntimeError as e:
        print("callback failure surfaced:", e)
    else:
        raise AssertionError("expected RuntimeError")

    try:
        ak.solve_builtin("no_such_problem")
    except ValueError as e:
        print("usage error surfaced:", e)
    else:
        raise AssertionError("expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
