"""Propagation, array steering and beamforming weights.

One-way and two-way free-space factors with optional Rician fading, phased
ULA steering vectors, quasi-omni and directional antenna weight vectors,
and the radar/comm propagation front ends that feed the receivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import C, SystemConfig

RX_WINDOW_FACTOR = 2          # radar receive window = 2 x waveform length


@dataclass(frozen=True)
class ArrayGeometry:
    n_elements: int
    spacing: float            # wavelengths
    role: str = "BS"

    def __post_init__(self):
        if self.n_elements < 1 or self.spacing <= 0:
            raise ValueError("bad array geometry")


@dataclass
class ChannelModel:
    kind: str = "free_space"          # "free_space" | "rician"
    rician_k_db: float = 7.0
    atmospheric_db_per_km: float = 0.0
    nlos_taps: int = 8                # comm multipath tap count

    def __post_init__(self):
        if self.kind not in ("free_space", "rician"):
            raise ValueError(f"unknown channel kind {self.kind}")
        if not np.isfinite(self.rician_k_db):
            raise ValueError("rician_k_db must be finite")

    @property
    def k_linear(self) -> float:
        return 10.0 ** (self.rician_k_db / 10.0)


def bs_geometry(cfg: SystemConfig) -> ArrayGeometry:
    return ArrayGeometry(cfg.n_bs, cfg.d_bs, "BS")


def mu_geometry(cfg: SystemConfig) -> ArrayGeometry:
    return ArrayGeometry(cfg.n_mu, cfg.d_mu, "MU")


def steering_vector(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """ULA response: element n carries phase 2*pi*spacing*n*sin(theta)."""
    if not -90.0 <= theta_deg <= 90.0:
        raise ValueError("steering angle outside [-90, 90] degrees")
    n = np.arange(geometry.n_elements)
    return np.exp(2j * np.pi * geometry.spacing * n *
                  np.sin(np.radians(theta_deg)))


def quasi_omni_weights(geometry: ArrayGeometry) -> np.ndarray:
    """Single-element weighting: the flattest pattern a ULA offers."""
    w = np.zeros(geometry.n_elements, dtype=np.complex128)
    w[0] = 1.0
    return w


def directional_weights(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Unit-norm conjugate steering at the commanded angle."""
    u = steering_vector(geometry, theta_deg)
    return np.conj(u) / np.sqrt(geometry.n_elements)


def beam_codebook_angles(n_beams: int, span_deg: float = 60.0) -> np.ndarray:
    """Beam centers uniformly spaced in sin(theta) over +-span."""
    s = np.sin(np.radians(span_deg))
    sines = np.linspace(-s, s, n_beams)
    return np.degrees(np.arcsin(sines))


def _loss_linear(model: ChannelModel, path_m: float) -> float:
    db = model.atmospheric_db_per_km * path_m / 1000.0
    return 10.0 ** (-db / 20.0)


def one_way_gain(r: float, theta_deg: float, phi_deg: float,
                 model: ChannelModel, cfg: SystemConfig) -> complex:
    """Free-space one-way path coefficient (isotropic element patterns)."""
    del theta_deg, phi_deg  # element patterns default to 0 dBi
    if r <= 0:
        raise ValueError("range must be positive")
    lam = cfg.wavelength
    mag = lam / (4.0 * np.pi * r) * _loss_linear(model, r)
    return mag * np.exp(-2j * np.pi * r / lam)


def two_way_gain(r: float, theta_deg: float, model: ChannelModel,
                 cfg: SystemConfig) -> complex:
    """Monostatic two-way path coefficient."""
    del theta_deg
    if r <= 0:
        raise ValueError("range must be positive")
    lam = cfg.wavelength
    mag = np.sqrt(lam ** 2 / ((4.0 * np.pi) ** 3 * r ** 4))
    mag *= _loss_linear(model, 2.0 * r)
    return mag * np.exp(-4j * np.pi * r / lam)


def rician_draw(model: ChannelModel, rng: np.random.Generator) -> complex:
    """Unit-mean-power Rician gain: fixed LOS plus complex-Gaussian scatter."""
    k = model.k_linear
    los = np.sqrt(k / (k + 1.0))
    nlos = np.sqrt(1.0 / (2.0 * (k + 1.0))) * (rng.standard_normal()
                                               + 1j * rng.standard_normal())
    return complex(los + nlos)


def complex_noise(shape, power: float, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(power / 2.0) * (rng.standard_normal(shape)
                                   + 1j * rng.standard_normal(shape))


def echo_delay_samples(range_m: float, cfg: SystemConfig) -> int:
    return int(np.floor(2.0 * range_m / C * cfg.f_ofdm + 0.5))


def propagate_radar(tx_samples: np.ndarray, scene_items, geometry: ArrayGeometry,
                    model: ChannelModel, rng: np.random.Generator,
                    cfg: SystemConfig, w_tx: np.ndarray | None = None,
                    fading: np.ndarray | None = None,
                    noiseless: bool = False,
                    window: int | None = None,
                    delays: list | None = None):
    """One pulse of monostatic echoes: (window, n_elements) matrix plus flags.

    Each scene item contributes a delayed, phase-steered copy of the
    transmit samples weighted by its reflection coefficient and the two-way
    path factor. Scatterers beyond the unambiguous range are flagged and
    skipped (second-trip echoes are not modeled). Passing precomputed
    delays pins the sample delay across a coherent processing interval while
    the carrier phase still tracks the exact range.
    """
    if w_tx is None:
        w_tx = quasi_omni_weights(geometry)
    n_fast = window or RX_WINDOW_FACTOR * len(tx_samples)
    rx = np.zeros((n_fast, geometry.n_elements), dtype=np.complex128)
    flags = []
    for idx, item in enumerate(scene_items):
        if item.range_m >= cfg.unambiguous_range_m:
            flags.append(idx)
            continue
        delay = (delays[idx] if delays is not None
                 else echo_delay_samples(item.range_m, cfg))
        if delay >= n_fast:
            continue
        u = steering_vector(geometry, item.azimuth_deg)
        tx_factor = complex(u @ w_tx)
        g2 = two_way_gain(item.range_m, item.azimuth_deg, model, cfg)
        amp = item.amplitude * tx_factor * g2
        if fading is not None:
            amp *= fading[idx]
        n_copy = min(len(tx_samples), n_fast - delay)
        rx[delay:delay + n_copy, :] += (amp * tx_samples[:n_copy])[:, None] * u[None, :]
    if not noiseless:
        rx += complex_noise(rx.shape, cfg.noise_power_w, rng)
    return rx, flags


def radar_fading(model: ChannelModel, n_scatterers: int,
                 rng: np.random.Generator) -> np.ndarray | None:
    """Two-way fading per scatterer for one CPI: two independent Rician draws."""
    if model.kind != "rician":
        return None
    return np.array([rician_draw(model, rng) * rician_draw(model, rng)
                     for _ in range(n_scatterers)])


def propagate_comm(tx_samples: np.ndarray, r: float, theta_deg: float,
                   phi_deg: float, w_tx: np.ndarray, w_rx: np.ndarray,
                   model: ChannelModel, rng: np.random.Generator,
                   cfg: SystemConfig, noiseless: bool = False,
                   apply_delay: bool = True):
    """One-way link to a beamformed receiver output stream.

    Returns (rx samples, sample delay). The LOS term carries both array
    factors; under Rician fading the diffuse taps bypass the arrays (no
    beamforming gain for multipath).
    """
    bs = bs_geometry(cfg)
    mu = mu_geometry(cfg)
    tx_factor = complex(steering_vector(bs, theta_deg) @ w_tx)
    rx_factor = complex(w_rx @ steering_vector(mu, phi_deg))
    g1 = one_way_gain(r, theta_deg, phi_deg, model, cfg)
    delay = int(np.floor(r / C * cfg.f_ofdm + 0.5)) if apply_delay else 0

    if model.kind == "free_space":
        los = tx_factor * rx_factor * g1 * tx_samples
        out = np.concatenate([np.zeros(delay, dtype=np.complex128), los])
    else:
        k = model.k_linear
        los = (np.sqrt(k / (k + 1.0)) * tx_factor * rx_factor * g1) * tx_samples
        n_taps = model.nlos_taps
        taps = (rng.standard_normal(n_taps) + 1j * rng.standard_normal(n_taps))
        taps *= np.sqrt(1.0 / (2.0 * n_taps * (k + 1.0)))
        diffuse = np.convolve(tx_samples, taps)[: len(tx_samples)] * abs(g1)
        out = np.concatenate([np.zeros(delay, dtype=np.complex128),
                              los + diffuse])
    if not noiseless:
        out = out + complex_noise(out.shape, cfg.noise_power_w, rng)
    return out, delay


def link_budget_snr_db(r: float, bs_gain_lin: float, mu_gain_lin: float,
                       cfg: SystemConfig, model: ChannelModel | None = None) -> float:
    """Predicted per-sample SNR of the one-way link (dB)."""
    model = model or ChannelModel()
    g1 = abs(one_way_gain(r, 0.0, 0.0, model, cfg))
    p_rx = cfg.es * (g1 ** 2) * bs_gain_lin * mu_gain_lin
    return 10.0 * np.log10(p_rx / cfg.noise_power_w)


def measure_snr_db(rx: np.ndarray, cfg: SystemConfig) -> float:
    """Realized SNR from received power against the configured noise floor."""
    p = float(np.mean(np.abs(rx) ** 2))
    noise = cfg.noise_power_w
    return 10.0 * np.log10(max(p - noise, 1e-300) / noise)
