"""Smoke test for the robreg_py extension.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math

import robreg_py as rr


def main():
    clean = rr.sample(d=2, n=16, seed=3, sigma=0.5)
    assert (clean.n, clean.d) == (16, 2)
    assert clean.theta_star == [1.0, 1.0]

    bad = rr.contaminate(clean, eps=0.125, magnitude=10.0, slope=-1.0, seed=3)
    assert sum(bad.mask) == 2
    planted = {i for i, m in enumerate(bad.mask) if m}

    ols = rr.estimate(bad, "ols")
    sub = rr.estimate(bad, "subset", eps=0.125, ncm_budget=10.0)
    assert set(sub["deleted"]) == planted
    err = lambda t: math.dist(t, clean.theta_star)
    assert err(sub["theta_hat"]) * 5 <= err(ols["theta_hat"])

    rep = rr.pair_report("dependent", 0.04)
    assert abs(rep["tv_closed_form"] - 0.04) < 1e-12

    hc = rr.hc_coefficient([[-1.0], [1.0], [0.5], [-0.5]])
    assert hc["lower"] >= 1.0

    slope, _, r2 = rr.fit_loglog([0.01, 0.02, 0.04], [0.01**0.75, 0.02**0.75, 0.04**0.75])
    assert abs(slope - 0.75) < 1e-12 and abs(r2 - 1.0) < 1e-12

    try:
        rr.estimate(bad, "magic")
    except rr.RobregError:
        pass
    else:
        raise AssertionError("unknown estimator accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
