"""Smoke test of the kindep extension module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
"""

import csv
import io
from fractions import Fraction

import kindep


def main():
    h = kindep.PolyFamily(5, 1024, seed=3)
    assert h.k == 5 and len(h.coeffs) == 5
    assert all(0 <= h(x) < 1024 for x in range(100))
    assert kindep.PolyFamily(5, 1024, seed=3).coeffs == h.coeffs

    table = kindep.ProbeTable(8)
    assert table.insert(10, 3) == 0
    assert table.insert(11, 3) == 1
    assert table.search_cost(3) == 3
    assert len(table) == 2

    m = kindep.exact_moments("random", 4)
    assert m["f4"] == Fraction(5, 2)
    assert m["p4"] == Fraction(1, 16)
    p = kindep.solve_3indep_mix(16)
    assert isinstance(p, Fraction) and 0 < p < 1
    assert kindep.exact_moments("t1", 16)["f2"] == Fraction(4)

    assert kindep.pmin_exact(2) == Fraction(5, 12)
    assert kindep.hit_prob_enumerate(3, 8, Fraction(1, 64)) == Fraction(1, 32)
    mu, found = kindep.find_mu(1, 16, 4, 1 << 16)
    assert found and mu == 1

    summary, text = kindep.run_experiment("lp-poly-k", ladder=[256, 512, 1024], trials=30, seed=2)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0].keys() == {"experiment", "t", "n", "load", "trial", "seed", "metric", "value"}
    assert summary["experiment"] == "lp-poly-k"
    again, text2 = kindep.run_experiment("lp-poly-k", ladder=[256, 512, 1024], trials=30, seed=2)
    assert text == text2

    try:
        kindep.run_experiment("no-such-experiment")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown experiment accepted")

    verdict, confidence = kindep.classify([1, 2, 4, 8], [[1.0, 1.1, 0.9]] * 4, bootstrap=50)
    assert verdict == "constant", verdict

    checks = kindep.verify_suite(seed=1)
    failed = [c["name"] for c in checks if not c["passed"]]
    assert not failed, failed
    print(f"ok: {len(checks)} checks, lp-poly-k rows {len(rows)}, classify {verdict} ({confidence:.2f})")


if __name__ == "__main__":
    main()
