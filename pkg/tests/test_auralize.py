import numpy as np
import pytest

from conftest import make_pathset
from echoray import (
    BandConfig,
    PathSet,
    eyring_rt60,
    read_wav,
    rt60_from_schroeder,
    synthesize_ir,
    write_wav,
)
from echoray.auralize import band_noise

BANDS2 = (62.5, 125.0)


def single_path(distance=343.0, direction=(1.0, 0.0, 0.0), energy=1.0,
                bands=BANDS2):
    ps = make_pathset([energy], band_centers=bands, distances=[distance])
    ps.listener_direction[0] = direction
    return ps


def test_arrival_sample_index():
    ps = single_path(distance=343.0)
    ir = synthesize_ir(ps, 0, BandConfig(BANDS2, sample_rate=48_000, noise_seed=1))
    w = ir.samples[0]
    nz = np.nonzero(w)[0]
    assert nz.size == 1
    assert nz[0] == 48_000


def test_single_path_energy_expectation():
    ps = single_path(distance=34.3, energy=2.0)
    total = []
    for seed in range(40):
        ir = synthesize_ir(ps, 0, BandConfig(BANDS2, noise_seed=seed))
        total.append(float(np.sum(ir.samples[0] ** 2)))
    assert np.mean(total) == pytest.approx(2.0, rel=0.25)


def test_zero_energy_gives_silent_ir():
    ps = single_path(energy=0.0)
    ir = synthesize_ir(ps, 3, BandConfig(BANDS2, noise_seed=3))
    assert np.all(ir.samples == 0.0)


def test_z_axis_path_channel_selectivity():
    ps = single_path(direction=(0.0, 0.0, 1.0))
    ir = synthesize_ir(ps, 1, BandConfig(BANDS2, noise_seed=2))
    assert ir.num_channels == 4
    assert np.all(ir.samples[1] == 0.0)  # Y
    assert np.all(ir.samples[3] == 0.0)  # X
    assert np.any(ir.samples[2] != 0.0)  # Z


def test_earliest_sample_is_min_distance(reference_scene):
    from echoray import SimConfig, trace

    ps = trace(reference_scene, SimConfig(n_diffuse=2000, n_specular=100,
                                      max_specular_depth=3, rng_seed=4))
    cfg = BandConfig(ps.band_centers_hz, noise_seed=9)
    ir = synthesize_ir(ps, 2, cfg)
    first = min(np.nonzero(np.any(ir.samples != 0.0, axis=0))[0])
    expect = round(48_000 * float(ps.distance.min()) / 343.0)
    assert first == expect
    assert ir.length >= int(np.ceil(48_000 * ps.distance.max() / 343.0))


def test_determinism_and_permutation_invariance():
    rng = np.random.default_rng(0)
    ps = make_pathset(rng.exponential(size=200),
                      distances=rng.uniform(5, 50, 200))
    dirs = rng.normal(size=(200, 3))
    ps.listener_direction[:] = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    cfg = BandConfig(BANDS2, noise_seed=7)
    a = synthesize_ir(ps, 4, cfg)
    b = synthesize_ir(ps, 4, cfg)
    np.testing.assert_array_equal(a.samples, b.samples)

    perm = rng.permutation(200)
    shuffled = ps.take(perm)
    c = synthesize_ir(shuffled, 4, cfg)
    np.testing.assert_array_equal(a.samples, c.samples)


def test_energy_bookkeeping_small():
    rng = np.random.default_rng(1)
    n = 500
    ps = make_pathset(rng.exponential(size=n), distances=rng.uniform(5, 80, n))
    expected = float(ps.total_energy().sum())
    vals = []
    for seed in range(10):
        ir = synthesize_ir(ps, 0, BandConfig(BANDS2, noise_seed=seed))
        vals.append(float(np.sum(ir.samples[0] ** 2)))
    assert np.mean(vals) == pytest.approx(expected, rel=0.1)


def test_band_noise_unit_variance_and_reconstruction():
    cfg = BandConfig((62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0),
                     sample_rate=48_000, noise_seed=5)
    bands = band_noise(16_384, cfg)
    for w in bands:
        assert w.var() == pytest.approx(1.0, rel=1e-9)
    # disjoint spectra: distinct bands are (near-)orthogonal
    gram = bands @ bands.T / bands.shape[1]
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) < 1e-9


def test_validation_errors():
    ps = single_path()
    with pytest.raises(ValueError, match="order"):
        synthesize_ir(ps, 10, BandConfig(BANDS2, noise_seed=0))
    with pytest.raises(ValueError, match="band count mismatch"):
        synthesize_ir(ps, 1, BandConfig((62.5, 125.0, 250.0), noise_seed=0))
    with pytest.raises(ValueError, match="sample rate"):
        BandConfig((1000.0, 20_000.0), sample_rate=44_100)
    empty = make_pathset([])
    with pytest.raises(ValueError, match="empty"):
        synthesize_ir(empty, 1, BandConfig(BANDS2))


@pytest.mark.parametrize("order,channels", [(0, 1), (1, 4), (9, 100)])
def test_wav_channel_counts(tmp_path, order, channels):
    ps = single_path(distance=10.0)
    ir = synthesize_ir(ps, order, BandConfig(BANDS2, noise_seed=1,
                                             tail_padding_s=0.01))
    assert ir.num_channels == channels
    f = tmp_path / f"ir{order}.wav"
    write_wav(ir, f)
    fs, data = read_wav(f)
    assert fs == ir.sample_rate
    assert data.shape[0] == channels
    np.testing.assert_array_equal(data, ir.samples.astype(np.float32))


def test_rt60_against_eyring(reference_scene):
    from echoray import SimConfig, trace

    ps = trace(reference_scene, SimConfig(n_diffuse=40_000, n_specular=2_000,
                                      rng_seed=21))
    cfg = BandConfig(ps.band_centers_hz, noise_seed=4)
    ir = synthesize_ir(ps, 0, cfg)
    got = rt60_from_schroeder(ir.samples[0], ir.sample_rate)
    want = eyring_rt60(volume_m3=160.0, surface_m2=192.0, mean_absorption=0.3)
    assert got == pytest.approx(want, rel=0.2)
