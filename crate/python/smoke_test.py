"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import json
import math
import pathlib
import sys
import tempfile

import eventalloc as ea

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def close(a, b, tol):
    return abs(a - b) <= tol


def check_graph():
    g = ea.Graph.ring(4)
    assert g.n == 4 and g.is_connected()
    lap = g.laplacian([1.0, 1.0, 1.0, 1.0])
    assert all(close(sum(row), 0.0, 1e-12) for row in lap)
    assert close(g.fiedler_value([1.0] * 4), 2.0, 1e-12)
    split = ea.Graph(4, [(0, 1), (2, 3)])
    assert split.connected_components() == [[0, 1], [2, 3]]


def check_oracle():
    pot = ea.QuadraticPotential.from_dispatch(
        [0.096, 0.072, 0.105, 0.082], [1.22, 3.41, 2.53, 4.02], [51, 31, 72, 48], 140.0
    )
    p, lam, negative = ea.kkt_allocate(pot)
    assert close(lam, -8.9776, 1e-3), lam
    for got, want in zip(p, [40.404, 38.664, 30.703, 30.229]):
        assert close(got, want, 1e-3), p
    assert negative == []
    assert all(close(f, lam, 1e-9) for f in pot.fitness(p))


def check_fields():
    pot = ea.QuadraticPotential([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.5]], [0.1, -0.3, 0.2], 3.0)
    p = [1.2, 0.8, 1.0]
    dist = ea.distributed_replicator_field(ea.Graph.complete(3), pot, p)
    classic = ea.classic_replicator_field(pot, p)
    assert all(close(d, 3.0 * c, 1e-12) for d, c in zip(dist, classic))
    assert close(sum(dist), 0.0, 1e-12)
    try:
        ea.distributed_replicator_field(ea.Graph.complete(3), pot, [1.0, 1.0, 2.0])
    except ValueError:
        pass
    else:
        raise AssertionError("off-simplex state accepted")


def check_scenario():
    s = ea.Scenario.from_file(str(SCENARIOS / "dispatch_140.json"), ["integrator.T=2"])
    bounds = s.bounds()
    assert bounds["tau"] > 0 and all(t > 0 for t in bounds["tau_i"])
    run = s.run()
    summary = run.summary
    assert summary["consensus_residual"] <= 1e-3, summary
    assert summary["conservation_error"] <= 1e-6 * 140
    v = run.lyapunov
    assert all(b <= a + 1e-7 * v[0] for a, b in zip(v, v[1:]))
    assert len(run.events) == sum(summary["trigger_count"])
    with tempfile.TemporaryDirectory() as d:
        paths = run.write(d)
        assert sorted(pathlib.Path(p).name for p in paths) == ["events.csv", "summary.json", "trajectory.csv"]
        assert json.loads((pathlib.Path(d) / "summary.json").read_text()) == summary
    try:
        ea.Scenario.from_file(str(SCENARIOS / "dispatch_140.json"), ["trigger.a=1e6"])
    except ValueError as e:
        assert "infeasible" in str(e)
    else:
        raise AssertionError("infeasible parameters accepted")


def main():
    for check in (check_graph, check_oracle, check_fields, check_scenario):
        check()
        print(f"ok  {check.__name__}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
