"""Synthetic multi-antenna fading channels, noise and dataset splits.

Channels come from a sum-of-sinusoids model standing in for a ray tracer:
each of ``paths`` rays arrives with a complex gain, a uniform-rectangular
array response at the base station, and a Doppler rotation set by the
user's speed and the ray's arrival angle at the mobile. Each frame draws
its randomness from its own stream seeded by ``(seed, frame index)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _accel, _kernels
from .nn.tensor import ContractError

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
GENERATOR_VERSION = "sos-ura-1"

TRAIN, VALIDATION, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class ScenarioConfig:
    n_frames: int = 2000
    antennas_vertical: int = 8
    antennas_horizontal: int = 4
    n_slot: int = 20
    t_slot: float = 0.5e-3
    carrier_freq: float = 2.6e9
    paths: int = 25
    rayleigh_scale: float = 8.0
    sector_deg: float = 120.0
    min_distance: float = 50.0
    max_distance: float = 150.0
    bs_height: float = 25.0
    ut_height: float = 1.5
    seed: int = 0

    def __post_init__(self):
        for name in ("antennas_vertical", "antennas_horizontal", "n_slot", "paths", "n_frames"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        for name in ("t_slot", "carrier_freq", "rayleigh_scale", "sector_deg", "min_distance",
                     "bs_height", "ut_height"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.max_distance < self.min_distance:
            raise ContractError("max_distance < min_distance")

    @property
    def antennas(self) -> int:
        return self.antennas_vertical * self.antennas_horizontal

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


@dataclass
class ComplexFrame:
    snapshots: np.ndarray  # (n_slot, M) complex
    velocity: float
    pathgain_norm: float = 1.0


# -- velocities ---------------------------------------------------------
def rayleigh_inverse_cdf(u, gamma: float):
    """Speed whose Rayleigh(gamma) CDF equals ``u``."""
    u = np.asarray(u, dtype=np.float64)
    return gamma * np.sqrt(-2.0 * np.log1p(-u))


def sample_velocity(gamma: float, rng: np.random.Generator, size=None):
    if gamma <= 0:
        raise ContractError("Rayleigh scale must be positive")
    v = rayleigh_inverse_cdf(rng.random(size), gamma)
    return float(v) if size is None else v


# -- geometry -----------------------------------------------------------
def ura_steering(azimuth, elevation, n_vertical: int, n_horizontal: int) -> np.ndarray:
    """Half-wavelength URA response, shape ``(..., n_vertical * n_horizontal)``.

    ``elevation`` is measured from the horizontal plane and ``azimuth``
    from array boresight. Element ``(v, h)`` sits at index ``v * n_h + h``.
    """
    az = np.asarray(azimuth, dtype=np.float64)[..., None, None]
    el = np.asarray(elevation, dtype=np.float64)[..., None, None]
    v = np.arange(n_vertical)[:, None]
    h = np.arange(n_horizontal)[None, :]
    phase = np.pi * (v * np.sin(el) + h * np.cos(el) * np.sin(az))
    a = np.exp(1j * phase)
    return a.reshape(*a.shape[:-2], n_vertical * n_horizontal)


def uma_nlos_pathloss_db(d3d, carrier_freq: float, ut_height: float):
    """Simplified urban-macro NLOS path loss (used only as a gain scale)."""
    return 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(carrier_freq / 1e9) - 0.6 * (ut_height - 1.5)


@dataclass
class PathDraw:
    gains: np.ndarray      # (P,) complex
    azimuth: np.ndarray    # (P,) rad
    elevation: np.ndarray  # (P,) rad
    arrival: np.ndarray    # (P,) rad, relative to the direction of motion
    phase: np.ndarray      # (P,) rad
    amplitude: float       # large-scale gain


def draw_paths(cfg: ScenarioConfig, rng: np.random.Generator) -> PathDraw:
    half = math.radians(cfg.sector_deg) / 2.0
    dh = cfg.bs_height - cfg.ut_height
    dist = rng.uniform(cfg.min_distance, cfg.max_distance)
    el_lo, el_hi = math.atan2(dh, cfg.max_distance), math.atan2(dh, cfg.min_distance)
    p = cfg.paths
    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / math.sqrt(2.0)
    azimuth = rng.uniform(-half, half, p)
    # rays arrive from below the array: negative elevation
    elevation = -rng.uniform(el_lo, el_hi, p)
    arrival = rng.uniform(0.0, 2.0 * math.pi, p)
    phase = rng.uniform(0.0, 2.0 * math.pi, p)
    pl = uma_nlos_pathloss_db(math.hypot(dist, dh), cfg.carrier_freq, cfg.ut_height)
    return PathDraw(gains, azimuth, elevation, arrival, phase, float(10.0 ** (-pl / 20.0)))


def doppler_frequency(velocity: float, carrier_freq: float) -> float:
    return velocity * carrier_freq / SPEED_OF_LIGHT


def _synthesize(cfg: ScenarioConfig, draws: list[PathDraw], velocities: np.ndarray) -> np.ndarray:
    gains = np.stack([d.gains * d.amplitude for d in draws])
    steering = np.stack([ura_steering(d.azimuth, d.elevation, cfg.antennas_vertical,
                                      cfg.antennas_horizontal) for d in draws])
    fd = np.asarray(velocities, dtype=np.float64) * cfg.carrier_freq / SPEED_OF_LIGHT
    omega = 2.0 * np.pi * fd[:, None] * np.cos(np.stack([d.arrival for d in draws]))
    phase = np.stack([d.phase for d in draws])
    return _kernels.synthesize(gains, steering, omega, phase, cfg.n_slot, cfg.t_slot)


def generate_frame(cfg: ScenarioConfig, velocity: float, rng: np.random.Generator) -> ComplexFrame:
    """One frame at constant ``velocity``; not yet normalised."""
    if velocity < 0:
        raise ContractError("velocity must be >= 0")
    draw = draw_paths(cfg, rng)
    h = _synthesize(cfg, [draw], np.array([velocity]))[0]
    return ComplexFrame(h, float(velocity))


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


# -- normalisation, noise, realification --------------------------------
def _normalize(h: np.ndarray, m: int) -> tuple[np.ndarray, float]:
    energy = float(np.mean(np.sum(np.abs(h) ** 2, axis=-1)))
    if energy == 0.0:
        raise ContractError("cannot normalise an all-zero frame")
    scale = math.sqrt(m / energy)
    return h * scale, scale


def normalize_pathgain(frame: ComplexFrame) -> ComplexFrame:
    """Scale so the mean per-snapshot squared norm equals the antenna count."""
    h = np.asarray(frame.snapshots)
    h_n, scale = _normalize(h.astype(np.complex128), h.shape[-1])
    return ComplexFrame(h_n.astype(h.dtype), frame.velocity, frame.pathgain_norm * scale)


def snr_to_sigma(frames, snr_db: float) -> float:
    """Noise variance giving the average SNR ``snr_db`` over all frames/slots."""
    h = frames.frames if isinstance(frames, Dataset) else np.asarray(frames)
    if h.size == 0:
        raise ContractError("empty dataset")
    m = h.shape[-1]
    power = float(np.mean(np.sum(np.abs(h.astype(np.complex128)) ** 2, axis=-1)))
    return power / (m * 10.0 ** (snr_db / 10.0))


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    clean = np.asarray(clean, dtype=np.complex128)
    noise = np.asarray(noisy, dtype=np.complex128) - clean
    m = clean.shape[-1]
    signal = np.mean(np.sum(np.abs(clean) ** 2, axis=-1))
    sigma2 = np.mean(np.abs(noise) ** 2)
    return float(10.0 * np.log10(signal / (m * sigma2)))


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian, variance ``sigma2`` split over Re/Im."""
    s = math.sqrt(sigma2 / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(frame, sigma2: float, rng: np.random.Generator):
    if sigma2 < 0:
        raise ContractError("noise variance must be >= 0")
    h = frame.snapshots if isinstance(frame, ComplexFrame) else np.asarray(frame)
    if sigma2 == 0:
        noisy = h.copy()
    else:
        noisy = (h + complex_noise(h.shape, sigma2, rng)).astype(h.dtype)
    if isinstance(frame, ComplexFrame):
        return ComplexFrame(noisy, frame.velocity, frame.pathgain_norm)
    return noisy


def to_real(h) -> np.ndarray:
    """``concat(Re, Im)`` along the antenna axis."""
    h = h.snapshots if isinstance(h, ComplexFrame) else np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1)


def to_complex(x) -> np.ndarray:
    x = np.asarray(x)
    m = x.shape[-1] // 2
    return x[..., :m] + 1j * x[..., m:]


# -- splitting ----------------------------------------------------------
def split_counts(n: int, ratios=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ContractError("split ratios must sum to 1")
    n_val = int(round(n * ratios[1]))
    n_test = int(round(n * ratios[2]))
    return n - n_val - n_test, n_val, n_test


def split_labels(velocities: np.ndarray, ratios=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None,
                 bins: int = 10) -> tuple[np.ndarray, bool]:
    """Assign each frame to train/validation/test.

    Frames are shuffled, ordered by velocity quantile bin, and labelled by an
    evenly interleaved pattern with the exact global counts, so every
    velocity range lands in each split in proportion. With fewer frames
    than bins this degrades to shuffle-then-contiguous and the returned flag
    is False.
    """
    rng = rng or np.random.default_rng(0)
    v = np.asarray(velocities, dtype=np.float64)
    n = v.size
    counts = split_counts(n, ratios)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.uint8)
    if n < bins:
        log.warning("only %d frames for %d strata; splitting without stratification", n, bins)
        labels[perm] = np.repeat(np.arange(3, dtype=np.uint8), counts)
        return labels, False

    edges = np.quantile(v, np.linspace(0, 1, bins + 1)[1:-1])
    strata = np.searchsorted(edges, v[perm], side="right")
    order = perm[np.argsort(strata, kind="stable")]
    # largest-deficit interleave: at each position pick the split furthest
    # behind its target share
    target = np.asarray(counts, dtype=np.float64) / n
    taken = np.zeros(3)
    pattern = np.empty(n, dtype=np.uint8)
    for r in range(n):
        deficit = target * (r + 1) - taken
        deficit[taken >= counts] = -np.inf
        k = int(np.argmax(deficit))
        pattern[r] = k
        taken[k] += 1
    labels[order] = pattern
    return labels, True


# -- datasets -----------------------------------------------------------
@dataclass
class Dataset:
    frames: np.ndarray          # (F, n_slot, M) complex64, normalised clean CSI
    velocity: np.ndarray        # (F,)
    pathgain_norm: np.ndarray   # (F,)
    split: np.ndarray           # (F,) uint8 in {TRAIN, VALIDATION, TEST}
    scenario: ScenarioConfig
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def indices(self, split: int | str) -> np.ndarray:
        if isinstance(split, str):
            split = SPLIT_NAMES.index(split)
        return np.flatnonzero(self.split == split)

    def split_counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.split == k)) for k, name in enumerate(SPLIT_NAMES)}

    def sigma2(self, snr_db: float) -> float:
        return snr_to_sigma(self.frames, snr_db)


def split_dataset(frames: list[ComplexFrame], ratios=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None,
                  scenario: ScenarioConfig | None = None) -> Dataset:
    vel = np.array([f.velocity for f in frames])
    labels, stratified = split_labels(vel, ratios, rng)
    return Dataset(
        frames=np.stack([f.snapshots for f in frames]).astype(np.complex64),
        velocity=vel,
        pathgain_norm=np.array([f.pathgain_norm for f in frames]),
        split=labels,
        scenario=scenario or ScenarioConfig(n_frames=len(frames)),
        provenance={"stratified": stratified},
    )


def generate_dataset(cfg: ScenarioConfig, velocities=None) -> Dataset:
    """Generate, normalise and split ``cfg.n_frames`` frames.

    ``velocities`` overrides the Rayleigh draw (one speed per frame).
    """
    n = cfg.n_frames
    draws, vel = [], np.empty(n)
    for idx in range(n):
        rng = frame_rng(cfg.seed, idx)
        v = sample_velocity(cfg.rayleigh_scale, rng)
        vel[idx] = v if velocities is None else float(velocities[idx])
        draws.append(draw_paths(cfg, rng))
    h = _synthesize(cfg, draws, vel)
    energy = np.mean(np.sum(np.abs(h) ** 2, axis=-1), axis=-1)
    if np.any(energy == 0):
        raise ContractError("generated an all-zero frame")
    scale = np.sqrt(cfg.antennas / energy)
    h = (h * scale[:, None, None]).astype(np.complex64)
    labels, stratified = split_labels(vel, rng=np.random.default_rng([cfg.seed, 0x5B1]))
    return Dataset(
        frames=h, velocity=vel, pathgain_norm=scale, split=labels, scenario=cfg,
        provenance={"generator": GENERATOR_VERSION, "seed": cfg.seed, "stratified": stratified,
                    "kernel_backend": _accel.backend_name()},
    )


def scenario_dict(cfg: ScenarioConfig) -> dict:
    return asdict(cfg)
