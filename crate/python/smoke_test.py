"""Smoke test for the `repro` extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install --force-reinstall dist/repro-*.whl
"""

import json
import math
import random

import repro


def make_data(n=50, p=12, seed=1):
    rng = random.Random(seed)
    x = [[rng.gauss(0, 1) for _ in range(p)] for _ in range(n)]
    y = [2.0 * r[0] - 1.5 * r[3] + rng.gauss(0, 1) for r in x]
    return repro.Dataset(x, y)


def main():
    data = make_data()
    assert (data.n, data.p) == (50, 12)

    cands = repro.search(data, d=100, seed=3)
    assert len(cands) >= 1
    assert any({1, 4} <= set(m) for m in cands.models), cands.models
    again = repro.search(data, d=100, seed=3)
    assert cands.to_json() == again.to_json()
    assert repro.CandidateSet.from_json(cands.to_json()).models == cands.models

    mcs = repro.model_confidence_set(data, cands, alpha=0.95, draws=100, seed=1)
    assert len(mcs) >= 1
    for model, tail, included in mcs.entries:
        assert 0.0 <= tail <= 1.0
        assert included == (tail > 0.05)
    assert set(map(tuple, mcs.at_level(0.9).included)) <= set(map(tuple, mcs.included))

    ci = repro.coef_interval(data, cands, 1)
    assert 2.0 in ci, ci
    assert ci.width > 0

    joint = repro.joint_region(data, cands)
    assert joint.shrunk_proportion is not None and joint.shrunk_proportion > 0.5

    sub = repro.subset_region(data, cands, [1, 4])
    assert [2.0, -1.5] in sub
    assert [0.0, 0.0] not in sub

    linear = repro.functional_set(joint, [1.0 if j in (0, 3) else 0.0 for j in range(12)])
    assert 0.5 in linear, linear
    sampled = repro.functional_set(joint, lambda b: b[0] + b[3], samples=2000)
    lo, hi = linear.intervals[0][0], linear.intervals[-1][1]
    s_lo, s_hi = sampled.intervals[0][0], sampled.intervals[-1][1]
    assert lo - 1e-9 <= s_lo and s_hi <= hi + 1e-9

    region, mcs1 = repro.modified_region(data, cands, 0.97, 0.98, indices=[1], draws=50)
    assert math.isclose(region.alpha, 0.95)
    assert len(mcs1) >= 1

    try:
        repro.model_confidence_set(data, cands, alpha=1.0)
    except ValueError as e:
        assert "level" in str(e)
    else:
        raise AssertionError("alpha = 1 accepted")

    try:
        repro.simulate("M9")
    except ValueError as e:
        assert "M1" in str(e)
    else:
        raise AssertionError("unknown scenario accepted")

    print(json.dumps({"candidates": cands.models, "interval_b1": ci.intervals, "model_cs": mcs.included}))
    print("smoke test passed")


if __name__ == "__main__":
    main()
