"""System-level configuration shared by every block of the simulator.

All physical constants, array sizes and protocol timing constants live in
one dataclass so experiments can be reproduced from a single JSON record.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

# Propagation speed used throughout (radar convention, keeps range bins exact).
C = 3.0e8


class ConfigError(ValueError):
    """Raised when a configuration violates a structural invariant."""


@dataclass
class ProcessingTimes:
    """Per-packet receiver processing durations in milliseconds.

    These are model constants for the beam-alignment timing analysis, not
    measured wall-clock values.
    """

    rcp_dl_ms: float = 16.0        # receiver comm processing, one downlink packet
    rcp_ul_ms: float = 16.0        # receiver comm processing, one uplink packet
    detect_ms: float = 2.5         # radar/comm detection unit, per received burst
    preamble_extract_ms: float = 1.6   # preamble bit extraction ahead of the RSP
    rsp_ms: float = 16.0           # radar signal processor on a pulse pair
    preamble_corr_ms: float = 4.5  # parallel preamble correlation at the MU

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"processing time {f.name} must be >= 0")


@dataclass
class SystemConfig:
    """Physical and protocol parameters of the joint radar-comm link."""

    f_c: float = 60e9            # carrier (Hz); enters via Doppler and steering only
    f_sc: float = 1.76e9         # single-carrier chip rate (Hz)
    f_ofdm: float = 2.64e9       # OFDM sample rate (Hz), 1.5x the chip rate
    t_pri: float = 0.58e-6       # radar pulse repetition interval (s)
    n_pulses: int = 2            # radar pulses per alignment
    n_bs: int = 32               # BS array elements
    n_mu: int = 4                # MU array elements
    m_beams: int = 32            # BS beam codebook size
    n_beams: int = 4             # MU beam codebook size
    d_bs: float = 0.5            # BS element spacing (wavelengths)
    d_mu: float = 0.5            # MU element spacing (wavelengths)
    es: float = 0.126            # per-sample transmit power scale (W), ~21 dBm
    noise_floor_dbm: float = -71.7
    az_fft: int = 256            # zero-padded DFT size across BS elements
    rate_filter_taps: int = 33   # odd tap count of the 1.5x rate-change filter
    wola_edge: int = 32          # raised-cosine overlap length per OFDM symbol edge
    clean_threshold_rel: float = 0.15
    clean_max_iter: int = 20
    clean_floor_rel: float = 5.0     # detection floor, multiples of map median
    v_min: float = 0.3               # dynamic/static split (m/s)
    classify_gamma: float = 0.5      # normalized-correlation classification threshold
    rician_k_db: float = 7.0
    processing_times: ProcessingTimes = field(default_factory=ProcessingTimes)

    def __post_init__(self) -> None:
        self.validate()

    # -- derived quantities ------------------------------------------------

    @property
    def wavelength(self) -> float:
        return C / self.f_c

    @property
    def noise_power_w(self) -> float:
        """Complex noise power per sample per receive element (W)."""
        return 10.0 ** ((self.noise_floor_dbm - 30.0) / 10.0)

    @property
    def range_bin_m(self) -> float:
        """Range resolution of the 512-bin axis: c / (2 f_sc)."""
        return C / (2.0 * self.f_sc)

    @property
    def radar_waveform_samples(self) -> int:
        return 768

    @property
    def radar_waveform_duration(self) -> float:
        return self.radar_waveform_samples / self.f_ofdm

    @property
    def n_range_bins(self) -> int:
        return 512

    @property
    def max_mapped_range_m(self) -> float:
        return self.n_range_bins * self.range_bin_m

    @property
    def unambiguous_range_m(self) -> float:
        return C * self.t_pri / 2.0

    def validate(self) -> None:
        if abs(self.f_ofdm - 1.5 * self.f_sc) > 1e-3:
            raise ConfigError("f_ofdm must equal 1.5 * f_sc")
        # 50% duty cycle; the nominal PRI sits 0.3% under 2x768/f_ofdm.
        if self.t_pri < 1.95 * self.radar_waveform_duration:
            raise ConfigError("t_pri must allow a ~50% radar duty cycle")
        if self.rate_filter_taps % 2 == 0:
            raise ConfigError("rate_filter_taps must be odd")
        if self.az_fft < self.n_bs:
            raise ConfigError("az_fft must be >= n_bs")
        if self.az_fft & (self.az_fft - 1):
            raise ConfigError("az_fft must be a power of two")
        for name in ("n_bs", "n_mu", "m_beams", "n_beams", "n_pulses"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_bs <= 0 or self.d_mu <= 0:
            raise ConfigError("element spacings must be positive")
        if self.es <= 0:
            raise ConfigError("es must be positive")
        self.processing_times.validate()

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        d = dict(d)
        pt = d.pop("processing_times", {})
        return cls(processing_times=ProcessingTimes(**pt), **d)

    @classmethod
    def from_json(cls, path: str) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def hash(self) -> str:
        """Short stable digest used to tag experiment CSV rows."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]
