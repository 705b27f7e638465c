import json

import numpy as np
import pytest
from click.testing import CliRunner

from echoray.bench import (
    BenchReport,
    bench_room_size,
    bench_storage,
    linear_fit_r2,
)
from echoray.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps({
        "n_diffuse": 2000, "n_specular": 200,
        "max_specular_depth": 3, "rng_seed": 7}))
    return p


def test_trace_missing_scene(runner, tmp_path):
    result = runner.invoke(main, ["trace", str(tmp_path / "nope.json"),
                                  str(tmp_path / "out.parquet")])
    assert result.exit_code == 2
    assert "scene not found" in result.output


def test_trace_writes_paths_and_counts(runner, scene_file, config_file, tmp_path):
    out = tmp_path / "paths.parquet"
    result = runner.invoke(main, ["trace", str(scene_file), str(out),
                                  "--config", str(config_file)])
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert "direct: 1" in result.output
    assert "specular:" in result.output
    assert "diffuse:" in result.output
    assert "elapsed:" in result.output


def test_trace_seed_determinism(runner, scene_file, config_file, tmp_path):
    a = tmp_path / "a.parquet"
    b = tmp_path / "b.parquet"
    for out in (a, b):
        result = runner.invoke(main, ["trace", str(scene_file), str(out),
                                      "--config", str(config_file), "--seed", "7"])
        assert result.exit_code == 0, result.output
    assert a.read_bytes() == b.read_bytes()


def test_filter_flag_validation(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    out = tmp_path / "f.parquet"
    r = runner.invoke(main, ["filter", str(paths), str(out)])
    assert r.exit_code == 2
    r = runner.invoke(main, ["filter", str(paths), str(out),
                             "--top-count", "5", "--top-fraction", "0.5"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["filter", str(paths), str(out),
                             "--top-fraction", "1.5"])
    assert r.exit_code == 2


def test_filter_top_count_zero_warns(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    out = tmp_path / "f.parquet"
    r = runner.invoke(main, ["filter", str(paths), str(out), "--top-count", "0"])
    assert r.exit_code == 0
    assert "warning" in r.output
    from echoray import read_paths
    assert read_paths(out).num_paths == 0


def test_filter_reports_energy_fraction(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    out = tmp_path / "f.parquet"
    r = runner.invoke(main, ["filter", str(paths), str(out),
                             "--energy-coverage", "0.9"])
    assert r.exit_code == 0
    line = [l for l in r.output.splitlines() if "retained energy" in l][0]
    assert float(line.split(":")[1]) >= 0.9


def test_auralize_orders(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    from echoray import read_wav

    wav9 = tmp_path / "ir9.wav"
    r = runner.invoke(main, ["auralize", str(paths), str(wav9), "--order", "9"])
    assert r.exit_code == 0, r.output
    assert "channels: 100" in r.output
    _, data9 = read_wav(wav9)
    assert data9.shape[0] == 100

    wav0 = tmp_path / "ir0.wav"
    r = runner.invoke(main, ["auralize", str(paths), str(wav0), "--order", "0"])
    assert "channels: 1" in r.output
    _, data0 = read_wav(wav0)
    assert data0.shape[0] == 1
    # order 0 equals the omni channel of the order-9 render
    np.testing.assert_array_equal(data0[0], data9[0])


def test_pipeline_composition_identity(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    filtered = tmp_path / "pf.parquet"
    r = runner.invoke(main, ["filter", str(paths), str(filtered),
                             "--top-fraction", "1.0"])
    assert r.exit_code == 0
    direct_wav = tmp_path / "direct.wav"
    via_filter_wav = tmp_path / "via_filter.wav"
    runner.invoke(main, ["auralize", str(paths), str(direct_wav), "--order", "3",
                         "--seed", "5"])
    runner.invoke(main, ["auralize", str(filtered), str(via_filter_wav),
                         "--order", "3", "--seed", "5"])
    assert direct_wav.read_bytes() == via_filter_wav.read_bytes()


def test_auralize_order_out_of_range(runner, scene_file, config_file, tmp_path):
    paths = tmp_path / "p.parquet"
    runner.invoke(main, ["trace", str(scene_file), str(paths),
                         "--config", str(config_file)])
    r = runner.invoke(main, ["auralize", str(paths), str(tmp_path / "x.wav"),
                             "--order", "12"])
    assert r.exit_code == 1
    assert "error" in r.output


def test_bench_unknown_experiment(runner, tmp_path):
    r = runner.invoke(main, ["bench", "nonsense", str(tmp_path / "x.csv")])
    assert r.exit_code == 2


def test_bench_report_csv_roundtrip(tmp_path):
    report = bench_room_size(repetitions=1, scales=[1.0, 2.0])
    csv_path = tmp_path / "rs.csv"
    report.write_csv(csv_path)
    rows = BenchReport.read_csv(csv_path)
    assert len(rows) == 2
    assert float(rows[0]["scale"]) == 1.0
    assert float(rows[0]["time_mean_s"]) > 0
    assert float(rows[0]["paths_mean"]) > float(rows[1]["paths_mean"]) * 0.0


def test_bench_storage_linearity_small(tmp_path):
    # reduced-size sanity check; the full sweep runs in the acceptance suite
    report = bench_storage(tmp_path, repetitions=1, seed=0,
                           fractions=(0.1, 0.5, 1.0))
    rows = [r["rows"] for r in report.rows]
    bytes_ = [r["bytes_mean"] for r in report.rows]
    assert linear_fit_r2(rows, bytes_) > 0.99


def test_workers_env_default(runner, scene_file, config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("ECHORAY_WORKERS", "2")
    out = tmp_path / "w.parquet"
    r = runner.invoke(main, ["trace", str(scene_file), str(out),
                             "--config", str(config_file)])
    assert r.exit_code == 0, r.output
