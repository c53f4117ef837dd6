"""Smoke test for the swarmheal Python bindings.

Build and install the extension first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

then run `python python/smoke_test.py`.
"""

import json
import math

import swarmheal_py as sh


def main():
    print("swarmheal", sh.version())

    # Two points within range form one component with a positive Fiedler value.
    n, fiedler = sh.connectivity([(0.0, 0.0), (100.0, 0.0)])
    assert n == 1 and fiedler > 0.0, (n, fiedler)
    n, fiedler = sh.connectivity([(0.0, 0.0), (200.0, 0.0)])
    assert n == 2 and fiedler == 0.0, (n, fiedler)

    scenario = sh.generate_scenario(20, 0.5, 7, easy=True)
    sc = json.loads(scenario)
    assert sc["n_total"] == 20 and len(sc["damage_set"]) == 10

    first = json.loads(sh.run_episode(scenario, "center-fly", seed=1))
    again = json.loads(sh.run_episode(scenario, "center-fly", seed=1))
    assert first == again, "episodes must be deterministic"
    assert first["converged"], first
    print("center-fly recovered in %.1f s" % first["recovery_time"])

    spec = {"sizes": [20], "damage_ratios": [0.5], "cases": 3, "policies": ["center-fly", "potential-field"], "tier": "easy"}
    table = json.loads(sh.evaluate_campaign(json.dumps(spec)))
    for cell in table["cells"]:
        assert 0.0 <= cell["convergence_rate"] <= 1.0
        assert math.isfinite(cell["rank_mean"])
        print("%-16s convergence %.2f rank %.2f" % (cell["policy"], cell["convergence_rate"], cell["rank_mean"]))

    small = {"connectivity_graphs": 50, "spectral_graphs": 8, "message_dense": 200, "message_fresh": 100, "variance_samples": 2000}
    reports = json.loads(sh.run_props(json.dumps(small)))
    for r in reports:
        assert r["violations"] == 0, r
    print("property suites:", ", ".join(r["name"] for r in reports))

    try:
        sh.evaluate_campaign(json.dumps({"cases": 0}))
    except ValueError:
        pass
    else:
        raise AssertionError("invalid campaign must raise ValueError")

    print("ok")


if __name__ == "__main__":
    main()
