"""Ambisonic impulse-response synthesis from a path set.

Each path contributes an impulse at its arrival sample, weighted per band
by the square root of its band energy, gated by a band-split white-noise
sequence, and panned over SH channels (ACN / SN3D). One noise realization
of IR length is shared by all paths; a brick-wall FFT split partitions the
spectrum into the octave bands so the band signals sum back to the
original noise exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .hoa import MAX_ORDER, sh_eval_batch
from .tracer import PathSet

DEFAULT_SAMPLE_RATE = 48_000
DEFAULT_TAIL_PADDING_S = 0.1


@dataclass(frozen=True)
class BandConfig:
    band_centers_hz: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    noise_seed: int = 0
    tail_padding_s: float = DEFAULT_TAIL_PADDING_S

    def __post_init__(self):
        centers = np.asarray(self.band_centers_hz, dtype=np.float64)
        object.__setattr__(self, "band_centers_hz", centers)
        if centers.size < 1 or np.any(np.diff(centers) <= 0):
            raise ValueError("band centers must be strictly increasing")
        top_edge = centers[-1] * np.sqrt(2.0)
        if self.sample_rate <= 2.0 * top_edge:
            raise ValueError(
                f"sample rate {self.sample_rate} too low for top band edge "
                f"{top_edge:.0f} Hz")
        if self.tail_padding_s < 0:
            raise ValueError("tail padding must be >= 0")

    @property
    def num_bands(self) -> int:
        return self.band_centers_hz.size


@dataclass
class AmbisonicIR:
    order: int
    sample_rate: int
    samples: np.ndarray  # (channels, length)
    convention: str = "ACN/SN3D"
    metadata: dict = field(default_factory=dict)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


def band_noise(length: int, config: BandConfig) -> np.ndarray:
    """(B, length) unit-variance band-split noise signals.

    A single seeded white-noise sequence is split by assigning each rFFT
    bin to exactly one octave band (band edges at center * sqrt(2), the
    lowest band extended to DC and the highest to Nyquist), so the
    unnormalized bands sum to the original noise.
    """
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([int(config.noise_seed) & 0xFFFFFFFFFFFFFFFF])))
    noise = rng.standard_normal(length)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(length, d=1.0 / config.sample_rate)
    upper = config.band_centers_hz * np.sqrt(2.0)
    B = config.num_bands
    bands = np.empty((B, length))
    band_of_bin = np.searchsorted(upper[:-1], freqs, side="right")
    for b in range(B):
        s = np.where(band_of_bin == b, spec, 0.0)
        w = np.fft.irfft(s, n=length)
        var = w.var()
        if var > 0.0:
            w = w / np.sqrt(var)
        bands[b] = w
    return bands


def synthesize_ir(paths: PathSet, order: int, band_config: BandConfig) -> AmbisonicIR:
    """Noise-gated Ambisonic IR from a path set; deterministic per seed."""
    if not (0 <= order <= MAX_ORDER):
        raise ValueError(f"order must be in [0, {MAX_ORDER}], got {order}")
    if band_config.num_bands != paths.num_bands:
        raise ValueError(
            f"band count mismatch: paths have {paths.num_bands}, "
            f"config has {band_config.num_bands}")
    if paths.num_paths == 0:
        raise ValueError("cannot auralize an empty path set")

    fs = band_config.sample_rate
    arrival = np.rint(
        fs * np.asarray(paths.distance, dtype=np.float64)
        / np.asarray(paths.speed_of_sound, dtype=np.float64)).astype(np.int64)
    length = int(arrival.max()) + 1 + int(round(band_config.tail_padding_s * fs))

    nch = (order + 1) ** 2
    bands = band_noise(length, band_config)  # (B, length)

    amp = np.sqrt(np.maximum(0.0, np.asarray(paths.intensities, dtype=np.float64)))
    # per-path gate: band amplitudes weighted by the noise value at arrival
    gate = np.einsum("pb,bp->p", amp, bands[:, arrival])

    Y = sh_eval_batch(np.asarray(paths.listener_direction, dtype=np.float64),
                      order, "SN3D")  # (N, C)

    # canonical accumulation order: contributions colliding on a sample are
    # summed the same way no matter how the input rows were permuted
    ldir = np.asarray(paths.listener_direction, dtype=np.float64)
    order_idx = np.lexsort(
        (ldir[:, 2], ldir[:, 1], ldir[:, 0], gate,
         np.asarray(paths.distance, dtype=np.float64), arrival))

    ir_t = np.zeros((length, nch))
    np.add.at(ir_t, arrival[order_idx], Y[order_idx] * gate[order_idx, None])
    return AmbisonicIR(
        order=order,
        sample_rate=fs,
        samples=np.ascontiguousarray(ir_t.T),
        metadata={
            "noise_seed": int(band_config.noise_seed),
            "num_paths": paths.num_paths,
        },
    )


def write_wav(ir: AmbisonicIR, path) -> None:
    """32-bit float multichannel WAV, channel i = ACN channel i."""
    if ir.num_channels > 65535:
        raise ValueError("channel count exceeds WAV format limit")
    data = np.ascontiguousarray(ir.samples.T.astype(np.float32))
    wavfile.write(path, ir.sample_rate, data)


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a float WAV back as (sample_rate, samples[channels, length])."""
    fs, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    return fs, np.ascontiguousarray(data.T)


def schroeder_decay_db(signal: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at t = 0)."""
    energy = signal.astype(np.float64) ** 2
    tail = np.cumsum(energy[::-1])[::-1]
    total = tail[0]
    if total <= 0:
        raise ValueError("signal has no energy")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(tail / total)


def rt60_from_schroeder(signal: np.ndarray, sample_rate: int,
                        fit_range_db: tuple[float, float] = (-5.0, -35.0)) -> float:
    """RT60 estimate from a linear fit of the Schroeder curve.

    Fits the decay between `fit_range_db` (default -5..-35 dB) and
    extrapolates the slope to -60 dB.
    """
    curve = schroeder_decay_db(signal)
    hi, lo = fit_range_db
    idx = np.nonzero((curve <= hi) & (curve >= lo))[0]
    if idx.size < 2:
        raise ValueError("decay range too short for an RT60 fit")
    t = idx / sample_rate
    slope, _ = np.polyfit(t, curve[idx], 1)
    if slope >= 0:
        raise ValueError("non-decaying Schroeder curve")
    return -60.0 / slope


def eyring_rt60(volume_m3: float, surface_m2: float, mean_absorption: float) -> float:
    """Eyring reverberation time 0.161 V / (-S ln(1 - a))."""
    if not 0.0 < mean_absorption < 1.0:
        raise ValueError("mean absorption must be in (0, 1)")
    return 0.161 * volume_m3 / (-surface_m2 * np.log(1.0 - mean_absorption))
