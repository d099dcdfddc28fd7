"""Smoke test for the pyexplore extension module.

Build and run from the repository root:

    cargo build -p explore-py --release --features extension-module
    cp target/release/libpyexplore.so python/pyexplore.so
    python3 python/smoke_test.py

or install with `maturin develop -m crates/py/pyproject.toml`.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyexplore as px


def check_grid():
    grid, layout = px.generate_town(3)
    assert (grid.width, grid.height) == (200, 200)
    counts = grid.counts()
    assert counts["unknown"] == 0
    assert 0.02 <= counts["occupied"] / 40000 <= 0.20
    assert len(layout["buildings"]) >= 3

    data = grid.to_bytes()
    assert set(data) <= {0, 255}
    again = px.Grid.from_bytes(200, 200, data)
    assert again.to_bytes() == data

    blank = px.Grid(10, 10)
    assert blank.get(0, 0) == "unknown"
    assert blank.known_fraction() == 0.0
    return grid


def check_belief(truth):
    unknown = px.Grid(200, 200)
    belief = px.Belief()
    start = belief.total_entropy()
    assert abs(start - 40000.0) < 1e-6
    belief.update(truth, unknown)
    belief.update(truth, unknown)
    assert belief.updates == 2
    assert belief.total_entropy() < start
    assert belief.classify().to_bytes() == truth.to_bytes()
    box = belief.region_entropy(50.0, 50.0, 10.0)
    assert 0.0 < box < 21 * 21


def check_auction():
    assert abs(px.path_score((0.0, 0.0), 1.0, 0.95, [(10.0, 0.0, 1.0)]) - 0.95 ** 10) < 1e-12
    result = px.run_auction(
        [(0.0, 0.0, 1.0), (100.0, 0.0, 1.0)],
        [(1, 5.0, 0.0, 1.0), (2, 95.0, 0.0, 1.0), (3, 50.0, 0.0, 0.0)],
    )
    assert result["converged"]
    assert result["paths"] == [[1], [2]]


def check_trial():
    config = "[trial]\nduration = 15.0\n"
    record = px.run_trial("generative", 1, 2, config=config)
    explored = [t["explored"] for t in record["ticks"]]
    assert explored == sorted(explored)
    assert [c["threshold"] for c in record["crossings"]] == [0.95, 0.99, 0.998]
    assert math.isclose(px.equivalent_uncovered_threshold(0.99), 0.98)

    with tempfile.TemporaryDirectory() as out:
        summaries = px.run_campaign(
            config + '[campaign]\ntrials_per_policy = 1\npolicies = ["constant"]\n', out
        )
        assert [s["policy"] for s in summaries] == ["constant"]
        assert os.path.isfile(os.path.join(out, "summary.json"))
    assert "[trial]" in px.default_config()


if __name__ == "__main__":
    truth = check_grid()
    check_belief(truth)
    check_auction()
    check_trial()
    print("pyexplore smoke test passed")
