"""Smoke test for the pymalady extension module.

Build and install first:
    pip install --no-build-isolation ./crates/py
then run:
    python python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

import pymalady


def check(condition, message):
    if not condition:
        print(f"FAIL: {message}")
        sys.exit(1)
    print(f"ok   {message}")


def main():
    rows, labels = pymalady.blobs(seed=0, points_per_cluster=60)
    check(len(rows) == 360 and len(labels) == 360, "blobs returns 360 points")
    check(sorted(set(labels)) == [0, 1], "two alternating classes")

    graph = pymalady.Graph.from_features(rows, 10)
    check(graph.n == 360, "graph has one node per point")
    check(all(graph.weight(j, i) == w for i, j, w in graph.edges()), "weights are symmetric")

    assignment, prices = pymalady.membership_auction([[2.0, 0.0], [0.0, 2.0]], [1, 1], eps=0.01)
    check(assignment == [0, 1], "membership auction picks the diagonal")

    assignment, p, t = pymalady.bounded_auction([[1.0, 0.0], [1.0, 0.0]], [0, 1], [2, 2], eps=0.1)
    check(sorted(assignment) == [0, 1] and t[1] > 0, "lower bound pays an incentive")

    m, v, w = pymalady.margin([0.9, 0.4], [0.1, 0.0], [0.0, 0.05])
    check(math.isclose(m, 0.35) and v >= w, "margin of a two-class row")

    sizes = [labels.count(0), labels.count(1)]
    labeled = [0, 60, 120, 180]  # first point of clusters 0-3
    classes, scores = pymalady.ssl_classify(
        graph, labeled, [labels[i] for i in labeled], 2,
        bounds="exact", sizes=sizes, init="propagated", epsilon0=1e-3,
    )
    check(all(classes[i] == labels[i] for i in labeled), "labeled points keep their labels")
    check([classes.count(0), classes.count(1)] == sizes, "exact bounds fix the class sizes")
    check(len(scores) == 360 - len(labeled), "one score per unlabeled point")

    run = pymalady.active_learning(graph, labels, 2, 14, acquisition="malady", epsilon0=1e-3, seed=1)
    check(run["num_labeled"] == list(range(4, 15)), "labeled set grows by one per query")
    check(len(set(run["queries"])) == 10, "ten distinct queries")
    unlabeled = [i for i in range(360) if i not in set(run["initial_labeled"]) | set(run["queries"])]
    check(0.0 <= run["final_accuracy"] <= 1.0, f"final accuracy {run['final_accuracy']:.3f}")
    check(pymalady.accuracy(labels, labels, unlabeled) == 1.0, "accuracy of the truth is 1")

    try:
        pymalady.bounded_auction([[1.0, 0.0]], [1, 1], [2, 2])
    except pymalady.InfeasibleError:
        check(True, "excess lower bounds raise InfeasibleError")
    else:
        check(False, "excess lower bounds raise InfeasibleError")

    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "dataset": {"kind": "blobs", "points_per_cluster": 40, "seed": 1},
            "kernel": {"kind": "gaussian", "k_neighbors": 8},
            "bounds": {"mode": "exact"},
            "schedule": {"epsilon0": 1e-3, "epsilon_min": 1e-6, "alpha": 4},
            "init": "propagated",
            "budget": {"initial_per_class": 2, "total": 8},
            "acquisition": "random",
            "seeds": [0, 1],
            "output": "out",
        }
        path = os.path.join(tmp, "config.json")
        with open(path, "w") as f:
            json.dump(config, f)
        aggregate = json.loads(pymalady.run_experiment(path))
        check(aggregate["seeds"] == [0, 1] and not aggregate["failures"], "experiment runs both seeds")
        check(len(aggregate["curve"]) == 5, "curve covers sizes 4 to 8")

    print("smoke test passed")


if __name__ == "__main__":
    main()
