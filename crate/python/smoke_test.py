"""Smoke test for the exohydro extension module.

Build and stage the module first:

    cargo build --release -p exohydro-py
    cp target/release/libexohydro_py.so python/exohydro.so
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import exohydro  # noqa: E402


def main():
    cfg = exohydro.RunConfig.preset("paper")
    assert cfg.context_len == 21 and cfg.epochs == 120
    assert cfg.learning_rate == 0.001 and cfg.split_ratio == 0.8
    assert cfg.mode == "multivariate"
    assert exohydro.RunConfig.from_toml(cfg.to_toml()).to_toml() == cfg.to_toml()
    try:
        exohydro.RunConfig.preset("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    rows = exohydro.fourier_features(30, [365.25, 8.0])
    assert len(rows) == 30 and len(rows[0]) == 4
    assert all(abs(r[0] ** 2 + r[1] ** 2 - 1.0) < 1e-12 for r in rows)
    assert abs(exohydro.legendre(2, 0.5) - (-0.125)) < 1e-15

    ids = [f"c{i:02d}" for i in range(10)]
    train, val = exohydro.spatial_split(ids, 0.8, 3)
    assert sorted(train + val) == ids and len(train) == 8

    r = exohydro.rmse_per_variable([[1.0, 2.0], [3.0, 4.0]], [[1.0, 0.0], [3.0, 4.0]])
    assert r[0] == 0.0 and abs(r[1] - math.sqrt(2.0)) < 1e-12

    err = exohydro.grad_check(3)
    assert err <= 1e-5, err

    with tempfile.TemporaryDirectory() as tmp:
        dyn, _ = exohydro.synth_data(os.path.join(tmp, "data"), 3, 40, 1)
        out = os.path.join(tmp, "cmp")
        code = exohydro.run_cli(["--output-dir", out, "compare", "--truth", str(dyn), "--forecasts", f"truth={dyn}"])
        assert code == 0
        with open(os.path.join(out, "comparison.csv")) as f:
            report = exohydro.MetricsReport.from_csv(f.read())
        assert report.rows()["truth"] == [0.0] * 6
        assert "<svg" in report.bar_chart_svg("smoke")

    print(f"exohydro smoke test passed (grad check error {err:.2e})")


if __name__ == "__main__":
    main()
