"""Smoke test for the compiled extension: python python/smoke_test.py"""

import json
import math
from pathlib import Path

import sandwich

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "crates" / "core" / "data"


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    fit = sandwich.mean([1.0, 2.0, 3.0, 4.0, 5.0])
    assert close(fit.theta[0], 3.0)
    assert close(fit.covariance[0][0], 0.4)
    print("mean:", fit)

    y = [0.2, -0.5, 1.4, 0.9, 12.0, 0.1, -0.3, 0.8]
    robust = sandwich.robust_location(y, 1.345)
    assert robust.theta[0] < sandwich.mean(y).theta[0]
    print("robust location:", robust)

    x = [[v] for v in range(10)]
    s = [0, 0, 1, 0, 0, 1, 1, 0, 1, 1]
    logit = sandwich.logistic_regression(x, s)
    print("logistic:", logit, "95% CI", logit.confint())

    csv = (DATA / "ryegrass.csv").read_text().splitlines()[1:]
    rootl, conc = zip(*(map(float, line.split(",")) for line in csv))
    ec = sandwich.loglogistic(list(conc), list(rootl), parameters=3, delta=20.0)
    lo, hi = ec.confint()[-1]
    print(f"EC20 = {ec.theta[-1]:.4f} ({lo:.4f}, {hi:.4f})")
    assert round(ec.theta[-1], 2) == 1.86

    doc = json.loads(
        sandwich.fit_config((DATA / "ryegrass_ec20.conf").read_text(), (DATA / "ryegrass.csv").read_text())
    )
    assert doc["solver"]["converged"]
    assert close(doc["parameters"][-1]["estimate"], ec.theta[-1], 1e-8)

    custom = sandwich.estimate_custom(lambda t: [[v - t[0], (v - t[0]) ** 2 - t[1]] for v in y], [0.0, 1.0])
    assert close(custom.theta[1], sum((v - custom.theta[0]) ** 2 for v in y) / len(y))
    print("custom:", custom)

    assert sandwich.huber_g(3.0, 1.345) == 1.345
    assert close(sandwich.inverse_odds_weight([1.0, 2.0], [0.3, -0.4]), math.exp(-(0.3 - 0.8)))
    print("smoke test passed")


if __name__ == "__main__":
    main()
