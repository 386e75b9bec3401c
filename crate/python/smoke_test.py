"""Smoke test for the kbpm_py extension module.

Build with `maturin develop -m crates/py/Cargo.toml` (or copy
target/release/libkbpm_py.so to kbpm_py.so on PYTHONPATH), then run this file.
"""

import math

import kbpm_py as kb


def main():
    assert abs(kb.arccos_h(1.0) - 1.0) < 1e-12
    assert abs(kb.arccos_h(0.0) - 1.0 / math.pi) < 1e-12

    n = 16
    eye = [[float(i == j) for j in range(n)] for i in range(n)]
    g = kb.Gram(eye)
    labels = [1.0 if i % 3 else -1.0 for i in range(n)]
    assert abs(g.complexity_a(labels) - n * math.log(2)) < 1e-12
    assert g.jitter_used == 0.0

    est = kb.Gram([r[:4] for r in eye[:4]]).orthant_naive_mc(
        [1.0, -1.0, 1.0, 1.0], 200_000, 7
    )
    p = math.exp(-est["log_inv_py"])
    assert abs(p - 1 / 16) < 4 * est["std_error"] * p + 1e-3, est

    iso = g.sample_iso(labels, 500, 3)
    assert len(iso) == 500 and iso.dim == n and iso.kind == "iso"
    assert all(
        math.copysign(1.0, v) == y for row in iso.to_list() for v, y in zip(row, labels)
    )

    rho = 0.5
    k2 = kb.Gram([[1.0, rho], [rho, 1.0]])
    gp = k2.sample_gp([1.0, 1.0], 200, 11)
    com = gp.centre_of_mass()
    assert com[0] > 0 and com[1] > 0
    assert abs(kb.bivariate_same_sign_probability(rho) - 1 / 3) < 1e-12

    gb = kb.gibbs_bound(10.0, 100, 0.1)
    assert abs(kb.bpm_bound_centroid(10.0, 100, 0.1) - math.e * gb) < 1e-12

    data = kb.Dataset.gaussians(300, 5, 4.0, 1)
    train, test = data.split(60, 200)
    kernel = kb.Kernel.arccosine(3, 5)
    row = kb.compare_experiment(kernel, train, test, 0, ensemble=101, ycom_cap=60)
    assert row["error"] is None, row["error"]
    ev = row["eval"]
    assert ev["eps_bpm"] <= ev["eps_bayes"] + ev["delta_approx"] + 1e-12
    assert row == kb.compare_experiment(kernel, train, test, 0, ensemble=101, ycom_cap=60)

    bounds = kb.bounds_experiment(kernel, train, 0)["bounds"]
    assert 0 < bounds["gibbs_bound"] < 1, bounds

    print("smoke test passed:", {k: round(ev[k], 4) for k in ("eps_gibbs", "eps_bayes", "eps_bpm")})


if __name__ == "__main__":
    main()
