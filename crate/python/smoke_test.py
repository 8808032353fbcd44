"""Smoke test for the privhist Python extension.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""

import json
import math

import privhist


def main():
    h = privhist.Histogram([(1, 2), (3, 1)])
    assert h.total_items == 5 and h.support_size == 3
    assert h.counts() == [3, 1, 1]
    assert privhist.Histogram.from_tsv(h.to_tsv()) == h
    assert privhist.Histogram.from_json(h.to_json()) == h

    left = privhist.Histogram([(17, 1)])
    right = privhist.Histogram([(4, 1), (16, 1)])
    assert privhist.sorted_l1(left, right) == 5
    assert privhist.l1_upper_bounds(left, right) == (5, 37)

    r = privhist.release(h, 9.0, seed=42, trace=True)
    assert r.path == "low"
    assert r.n_estimate >= 0
    trace = json.loads(r.trace_json)
    assert trace["n_estimate"] == r.n_estimate
    again = privhist.release(h, 9.0, seed=42)
    assert again.histogram == r.histogram

    try:
        privhist.release(h, 0.0)
    except ValueError as e:
        assert "epsilon must be positive" in str(e)
    else:
        raise AssertionError("epsilon 0 accepted")

    u3 = privhist.Histogram([(2, 3)])
    assert abs(privhist.estimate(u3, 6, "entropy-plugin") - math.log(3)) < 1e-12
    value, empty = privhist.estimate_from_release(privhist.release(u3, 1000.0), "entropy-plugin")
    assert not empty and abs(value - math.log(3)) < 1e-3

    assert privhist.isotonic_nonincreasing([7, 5, 8]) == [7, 6.5, 6.5]

    z = privhist.sample_geometric(1.0, 100_000, seed=1)
    a = math.exp(-1.0)
    assert abs(sum(abs(v) for v in z) / len(z) / (2 * a / (1 - a * a)) - 1) < 0.03

    big = privhist.generate("zipf", 10_000, seed=3)
    assert big.total_items == 10_000
    out = privhist.release(big, 1.0)
    assert out.path == "high"
    assert privhist.sorted_l1(big, out.histogram) < 1_000

    rows = json.loads(
        privhist.bench(
            json.dumps(
                {
                    "generator": {"kind": "single-heavy"},
                    "n-grid": [1000],
                    "epsilon-grid": [2.0],
                    "trials": 2,
                }
            )
        )
    )
    assert len(rows) == 1 and rows[0]["n"] == 1000

    audit = privhist.audit(2.0, max_items=2, runs_per_input=5_000)
    assert len(audit) == 3 and not any(row[3] for row in audit)

    print("privhist python smoke test passed")


if __name__ == "__main__":
    main()
