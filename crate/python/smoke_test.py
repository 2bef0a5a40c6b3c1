"""Smoke test for the ethsm_py extension.

Build it first:  pip install --no-build-isolation -e crates/py
"""

import json
import math

import ethsm_py as m


def main():
    d = m.stationary(0.4, 0.5)
    assert abs(d.get(0, 0) - 0.409836066) < 1e-9
    assert abs(d.total_mass() - 1.0) < 1e-9
    assert d.max_abs_diff(m.stationary(0.4, 0.5, method="numeric")) < 1e-9

    r = m.revenue(0.45, 0.5, schedule="fixed-unlimited:7/8")
    assert abs(r.r_total / (r.r_b_s + r.r_b_h) - 1.35) < 0.01
    us, uh = r.absolute(1)
    assert us > 0.45 and math.isclose(us + uh, r.r_total / (r.r_b_s + r.r_b_h))

    t = m.threshold(0.5, tolerance=1e-4)
    assert abs(t - 0.054) < 0.005
    assert m.threshold(1.0, tolerance=1e-4) == 0.0

    s = m.simulate(0.3, 0.5, blocks=20_000, runs=4, seed=1)
    assert s.lemma1_holds
    (sim_us, se), _ = s.absolute(1)
    assert abs(sim_us - m.revenue(0.3, 0.5).absolute(1)[0]) < 5 * se + 1e-3
    assert json.loads(s.to_json())["runs"] == 4
    assert s.to_json() == m.simulate(0.3, 0.5, blocks=20_000, runs=4, seed=1).to_json()

    try:
        m.stationary(0.6, 0.5)
    except ValueError as e:
        assert "alpha out of range" in str(e)
    else:
        raise AssertionError("alpha=0.6 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
