"""Radar signal processor: ambiguity maps, CLEAN, clustering, pulse-pair.

The fast-time data is first brought back to the 1.76 GHz chip rate, then
cross-correlated per element with the pulse's own Golay reference and
transformed across elements into a range-azimuth map. CLEAN peels targets
off the map, clusters absorb extended-target spreads, and the pulse-pair
conjugate product across the two pulses yields Doppler.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import scene as scenelib
from .channel import (ChannelModel, bs_geometry, complex_noise, echo_delay_samples,
                      propagate_radar, quasi_omni_weights, radar_fading,
                      two_way_gain)
from .config import C, ConfigError, SystemConfig
from .golay import cross_correlate, normalized_peak
from .phy_tx import build_preamble, design_rate_filter, radar_waveform_for_pulse


@dataclass
class RadarDataCube:
    """Received samples over fast time x pulse x element at f_ofdm."""

    samples: np.ndarray
    f_sample: float
    pulse_seeds: list
    t_pri: float
    flags: list = field(default_factory=list)

    @property
    def n_pulses(self) -> int:
        return self.samples.shape[1]


@dataclass
class AmbiguityMap:
    """Complex range-azimuth surface; azimuth bins are DFT bins in sin space."""

    values: np.ndarray          # (n_range_bins, az_fft)
    range_bin_m: float
    spacing: float              # element spacing in wavelengths

    @property
    def az_fft(self) -> int:
        return self.values.shape[1]

    def range_of_bin(self, b) -> np.ndarray:
        return np.asarray(b, float) * self.range_bin_m

    def azimuth_of_bin(self, q) -> np.ndarray:
        n = self.az_fft
        signed = (np.asarray(q) + n // 2) % n - n // 2
        s = np.clip(signed / (n * self.spacing), -1.0, 1.0)
        return np.degrees(np.arcsin(s))

    def bin_of_azimuth(self, theta_deg: float) -> int:
        n = self.az_fft
        q = int(np.floor(n * self.spacing * np.sin(np.radians(theta_deg)) + 0.5))
        return q % n

    def dump_csv(self, path: str) -> None:
        mags = 20.0 * np.log10(np.abs(self.values) + 1e-30)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["range_m", "azimuth_deg", "mag_db"])
            az = self.azimuth_of_bin(np.arange(self.az_fft))
            for b in range(self.values.shape[0]):
                r = b * self.range_bin_m
                for q in range(self.az_fft):
                    writer.writerow([f"{r:.4f}", f"{az[q]:.3f}",
                                     f"{mags[b, q]:.2f}"])


@dataclass
class Extraction:
    amplitude: complex
    range_bin: int
    az_bin: int
    range_m: float
    azimuth_deg: float


@dataclass
class Cluster:
    range_bin: float
    az_bin: float
    amplitude: float
    members: list
    peak_cell: tuple


@dataclass
class Detection:
    range_m: float
    azimuth_deg: float
    amplitude: complex
    doppler_hz: float
    radial_velocity_mps: float
    is_dynamic: bool
    cluster_members: int
    range_bin: float = 0.0
    az_bin: float = 0.0
    doppler_reliable: bool = True


class RspContext:
    """Caches per-seed waveforms, references and point-spread templates."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.taps = design_rate_filter(cfg.rate_filter_taps, cfg.f_ofdm)
        self._waveforms: dict[int, np.ndarray] = {}
        self._refs: dict[int, np.ndarray] = {}
        self._profiles: dict[tuple, tuple] = {}
        self._preambles: dict[int, np.ndarray] = {}
        self.az_kernel = np.fft.fft(np.ones(cfg.n_bs), cfg.az_fft)

    def waveform(self, seed: int) -> np.ndarray:
        if seed not in self._waveforms:
            self._waveforms[seed] = radar_waveform_for_pulse(seed, self.cfg).samples
        return self._waveforms[seed]

    def reference(self, seed: int) -> np.ndarray:
        """Matched correlation reference: the pulse's own waveform brought
        back to the chip rate, so the peak phase is common to all seeds."""
        if seed not in self._refs:
            wf = self.waveform(seed)
            ds = downsample_fast_time(wf[:, None], self.taps)[:, 0]
            self._refs[seed] = ds / np.sqrt(self.cfg.es)
        return self._refs[seed]

    def preamble(self, seed: int) -> np.ndarray:
        if seed not in self._preambles:
            self._preambles[seed] = build_preamble(seed, self.taps)
        return self._preambles[seed]

    def range_profile(self, seed: int, parity: int):
        """Noiseless correlation response of a unit echo at a reference bin."""
        key = (seed, parity)
        if key not in self._profiles:
            base_bin = 256 if parity == 0 else 255
            delay = int(np.floor(1.5 * base_bin + 0.5))
            wf = self.waveform(seed)
            echo = np.zeros(2 * len(wf), dtype=np.complex128)
            echo[delay:delay + len(wf)] = wf
            ds = downsample_fast_time(echo[:, None], self.taps)[:, 0]
            prof = cross_correlate(ds, self.reference(seed))[: self.cfg.n_range_bins]
            self._profiles[key] = (prof, base_bin)
        return self._profiles[key]


def downsample_fast_time(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """f_ofdm -> f_sc along axis 0 (upsample x2, low-pass, decimate x3)."""
    n = samples.shape[0]
    up = np.zeros((2 * n,) + samples.shape[1:], dtype=np.complex128)
    up[::2] = samples
    kern = (taps * 2.0).reshape((-1,) + (1,) * (samples.ndim - 1))
    filtered = fftconvolve(up, kern, axes=0)
    delay = (len(taps) - 1) // 2
    n_out = (2 * n) // 3
    return filtered[delay:delay + 3 * n_out:3]


def downsample_cube(cube: RadarDataCube, ctx: RspContext) -> np.ndarray:
    """(n_fast, P, N) at f_ofdm -> (n_fast*2//3, P, N) at f_sc."""
    return downsample_fast_time(cube.samples, ctx.taps)


def form_ambiguity(cube_ds: np.ndarray, pulse: int, seed: int,
                   ctx: RspContext, n_fft: int | None = None) -> AmbiguityMap:
    """Correlate fast time per element, then DFT across elements per bin."""
    cfg = ctx.cfg
    n_fft = n_fft or cfg.az_fft
    if n_fft < cfg.n_bs:
        raise ConfigError("azimuth DFT size must be >= the element count")
    ref = ctx.reference(seed)
    x = cube_ds[:, pulse, :]
    kern = np.conj(ref[::-1])[:, None]
    corr = fftconvolve(x, kern, axes=0)[len(ref) - 1:]
    corr = corr[: cfg.n_range_bins]
    values = np.fft.fft(corr, n_fft, axis=1)
    return AmbiguityMap(values=values, range_bin_m=cfg.range_bin_m,
                        spacing=cfg.d_bs)


def _linear_shift(vec: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(vec)
    if k >= 0:
        out[k:] = vec[: len(vec) - k]
    else:
        out[: len(vec) + k] = vec[-k:]
    return out


def jrc_psf_provider(ctx: RspContext, seed: int, n_fft: int):
    """Point-spread synthesizer: range profile (by bin parity) x array kernel."""
    def psf(b: int, q: int) -> np.ndarray:
        prof, base = ctx.range_profile(seed, b & 1)
        rvec = _linear_shift(prof, b - base)
        avec = np.roll(ctx.az_kernel if n_fft == ctx.cfg.az_fft
                       else np.fft.fft(np.ones(ctx.cfg.n_bs), n_fft), q)
        out = np.outer(rvec, avec)
        peak = out[b, q]
        if abs(peak) < 1e-30:
            return out
        return out / peak
    return psf


def clean_extract(amb: AmbiguityMap, psf_provider, threshold_rel: float = 0.15,
                  max_iter: int = 20, floor_rel: float = 5.0) -> list[Extraction]:
    """Iterative peak removal until the residual drops below both thresholds.

    floor_rel guards against extracting noise: no peak below floor_rel times
    the map median magnitude is ever reported.
    """
    if not 0.0 < threshold_rel < 1.0:
        raise ConfigError("threshold_rel must lie in (0, 1)")
    work = amb.values.copy()
    mags = np.abs(work)
    floor = floor_rel * float(np.median(mags))
    peak0 = float(mags.max())
    out: list[Extraction] = []
    if peak0 < floor:
        return out
    for _ in range(max_iter):
        mags = np.abs(work)
        idx = int(np.argmax(mags))
        b, q = np.unravel_index(idx, mags.shape)
        peak = float(mags[b, q])
        if peak < max(threshold_rel * peak0, floor):
            break
        a = work[b, q]
        work -= a * psf_provider(int(b), int(q))
        out.append(Extraction(amplitude=complex(a), range_bin=int(b),
                              az_bin=int(q), range_m=float(amb.range_of_bin(b)),
                              azimuth_deg=float(amb.azimuth_of_bin(int(q)))))
    return out


def cluster_detections(extractions: list[Extraction], range_gate_bins: int,
                       az_gate_bins: int, n_fft: int) -> list[Cluster]:
    """Single-linkage merge; centroids are amplitude-weighted, azimuth circular."""
    if range_gate_bins < 1 or az_gate_bins < 1:
        raise ConfigError("cluster gates must be >= 1 bin")
    n = len(extractions)
    if n == 0:
        return []
    unvisited = set(range(n))
    clusters = []
    while unvisited:
        seed_i = unvisited.pop()
        group = [seed_i]
        frontier = [seed_i]
        while frontier:
            i = frontier.pop()
            near = []
            for j in list(unvisited):
                db = abs(extractions[i].range_bin - extractions[j].range_bin)
                dq = abs(extractions[i].az_bin - extractions[j].az_bin)
                dq = min(dq, n_fft - dq)
                if db <= range_gate_bins and dq <= az_gate_bins:
                    near.append(j)
            for j in near:
                unvisited.discard(j)
                group.append(j)
                frontier.append(j)
        members = [extractions[i] for i in group]
        weights = np.array([abs(m.amplitude) ** 2 for m in members])
        wsum = weights.sum()
        rb = float(np.dot(weights, [m.range_bin for m in members]) / wsum)
        phasors = np.exp(2j * np.pi * np.array([m.az_bin for m in members]) / n_fft)
        qb = float(np.angle(np.dot(weights, phasors)) / (2 * np.pi) * n_fft) % n_fft
        peak = max(members, key=lambda m: abs(m.amplitude))
        clusters.append(Cluster(range_bin=rb, az_bin=qb,
                                amplitude=float(np.sqrt(wsum)),
                                members=[(m.range_bin, m.az_bin) for m in members],
                                peak_cell=(peak.range_bin, peak.az_bin)))
    return clusters


def pulse_pair_doppler(map1: AmbiguityMap, map2: AmbiguityMap, cell: tuple,
                       t_pri: float, support=None,
                       reliable_floor_rel: float = 4.0):
    """Doppler from the lag-one conjugate product, summed over the target cells.

    Sign convention: a closing target (decreasing range) yields positive
    Doppler and positive radial velocity downstream.
    """
    if map1.values.shape != map2.values.shape:
        raise ConfigError("pulse maps must share axes")
    b0, q0 = int(round(cell[0])), int(round(cell[1])) % map1.az_fft
    n_range, n_fft = map1.values.shape
    if not 0 <= b0 < n_range:
        raise ConfigError("cell outside the range axis")
    if support is None:
        support = [(b0, q0)]
    # Only the peak range row is phase-coherent between the two seeds; the
    # azimuth kernel is seed-independent, so spreading there is safe.
    cells = set()
    half_az = max(1, n_fft // 16)
    for (b, q) in support:
        bb = int(round(b))
        if not 0 <= bb < n_range:
            continue
        for dq in range(-half_az, half_az + 1):
            cells.add((bb, (int(round(q)) + dq) % n_fft))
    rows = np.array([c[0] for c in cells])
    cols = np.array([c[1] for c in cells])
    s = np.sum(map2.values[rows, cols] * np.conj(map1.values[rows, cols]))
    f_d = float(np.angle(s) / (2.0 * np.pi * t_pri))
    reliable = abs(map1.values[b0, q0]) >= reliable_floor_rel * float(
        np.median(np.abs(map1.values)))
    return f_d, reliable


def waveform_lag_response(ctx: RspContext, seed: int, k: int) -> complex:
    """Matched-filter output of a waveform against itself at integer lag k."""
    wf = ctx.waveform(seed)
    if k >= 0:
        return complex(np.vdot(wf[: len(wf) - k], wf[k:]))
    return complex(np.conj(waveform_lag_response(ctx, seed, -k)))


def fine_pulse_pair(cube: RadarDataCube, ctx: RspContext, range_bin: float,
                    lag_halfwidth: int = 0):
    """Doppler phase from full-rate seed-matched correlations of both pulses.

    The echo delay is an integer number of samples at f_ofdm, where each
    pulse's matched filter peaks with a seed-common phase; the residual
    per-seed phases of neighboring lags are known from the waveforms and are
    calibrated out when a wider lag window is requested (neighboring lags
    share almost all their noise, so the default sticks to the peak).
    """
    cfg = ctx.cfg
    x = cube.samples
    n_fast = x.shape[0]
    wfs = [ctx.waveform(s) for s in cube.pulse_seeds[:2]]
    m = len(wfs[0])
    d_nom = int(np.floor(1.5 * range_bin + 0.5))
    cands = [d for d in range(d_nom - 3, d_nom + 4) if 0 <= d <= n_fast - m]
    if not cands:
        return 0.0, False
    c1 = {d: np.conj(wfs[0]) @ x[d:d + m, 0, :] for d in cands}
    d_hat = max(cands, key=lambda d: float(np.sum(np.abs(c1[d]) ** 2)))
    s = 0.0 + 0.0j
    for k in range(-lag_halfwidth, lag_halfwidth + 1):
        d = d_hat + k
        if not 0 <= d <= n_fast - m:
            continue
        v1 = np.conj(wfs[0]) @ x[d:d + m, 0, :]
        v2 = np.conj(wfs[1]) @ x[d:d + m, 1, :]
        r1 = waveform_lag_response(ctx, cube.pulse_seeds[0], k)
        r2 = waveform_lag_response(ctx, cube.pulse_seeds[1], k)
        cal = r2 * np.conj(r1)
        if abs(cal) < 1e-12:
            continue
        s += np.vdot(v1, v2) * np.conj(cal / abs(cal))
    f_d = float(np.angle(s) / (2.0 * np.pi * cube.t_pri))
    return f_d, True


def build_radar_cube(targets, t0: float, ctx: RspContext, model: ChannelModel,
                     rng: np.random.Generator, w_tx=None,
                     per_target_snr_db=None, snr_mode: str = "realized",
                     noiseless: bool = False) -> RadarDataCube:
    """Propagate all pulses off a target list into a data cube.

    Scatterer amplitudes and fading are drawn once per coherent processing
    interval. With per_target_snr_db, echo amplitudes are rescaled so each
    target's per-sample per-element echo power matches the requested SNR
    ("realized": the drawn fluctuation is absorbed into the scale;
    "mean": the scale is set in expectation and fluctuations remain).
    """
    cfg = ctx.cfg
    geom = bs_geometry(cfg)
    if w_tx is None:
        w_tx = quasi_omni_weights(geom)
    targets = targets if isinstance(targets, (list, tuple)) else [targets]

    draws = [scenelib.draw_amplitudes(t, rng) for t in targets]
    fadings = [radar_fading(model, len(t.scatterers), rng) for t in targets]
    # Sample delays are frozen at CPI start; range migration over two pulses
    # is orders of magnitude below a sample.
    cpi_delays = []
    for target in targets:
        geo0 = scenelib.geometry_at(target, min(t0, target.trajectory.duration))
        cpi_delays.append([echo_delay_samples(g[0], cfg) for g in geo0])

    n_fast = 2 * cfg.radar_waveform_samples
    cube = np.zeros((n_fast, cfg.n_pulses, cfg.n_bs), dtype=np.complex128)
    seeds = [p + 1 for p in range(cfg.n_pulses)]
    flags: list = []
    for p in range(cfg.n_pulses):
        t_p = t0 + p * cfg.t_pri
        wf = ctx.waveform(seeds[p])
        slab = np.zeros((n_fast, cfg.n_bs), dtype=np.complex128)
        for ti, target in enumerate(targets):
            geo = scenelib.geometry_at(target, min(t_p, target.trajectory.duration))
            weights = np.sqrt([g[3] for g in geo])
            amps = draws[ti] * weights
            if per_target_snr_db is not None:
                expected = np.sqrt([sc.mean_rcs for sc in target.scatterers])
                amps = amps * _snr_scale(geo, np.abs(amps), expected * weights,
                                         per_target_snr_db[ti], fadings[ti],
                                         snr_mode, ctx, model)
            items = [scenelib.ScatterSample(g[0], g[1], g[2], complex(a))
                     for g, a in zip(geo, amps)]
            part, fl = propagate_radar(wf, items, geom, model, rng, cfg,
                                       w_tx=w_tx, fading=fadings[ti],
                                       noiseless=True, window=n_fast,
                                       delays=cpi_delays[ti])
            slab += part
            flags.extend(fl)
        cube[:, p, :] = slab
    if not noiseless:
        cube += complex_noise(cube.shape, cfg.noise_power_w, rng)
    return RadarDataCube(samples=cube, f_sample=cfg.f_ofdm, pulse_seeds=seeds,
                         t_pri=cfg.t_pri, flags=flags)


def _snr_scale(geo, realized_mags, expected_mags, snr_db, fading, mode,
               ctx: RspContext, model: ChannelModel) -> float:
    """Amplitude factor putting a target's echo at the requested element SNR."""
    cfg = ctx.cfg
    target_power = 10.0 ** (snr_db / 10.0) * cfg.noise_power_w
    g2 = np.array([abs(two_way_gain(g[0], g[1], model, cfg)) for g in geo])
    if mode == "realized":
        mags = realized_mags
        if fading is not None:
            mags = mags * np.abs(fading)
    elif mode == "mean":
        mags = expected_mags
    else:
        raise ConfigError(f"unknown snr_mode {mode}")
    power = cfg.es * float(np.sum((mags * g2) ** 2))
    if power <= 0:
        return 1.0
    return float(np.sqrt(target_power / power))


def detect_mu(cube: RadarDataCube, ctx: RspContext,
              include_static: bool = False) -> list[Detection]:
    """Full pipeline: map both pulses, CLEAN, cluster, pulse-pair, gate.

    Returns detections sorted by amplitude, strongest first; by default only
    the dynamic ones (|v| above the configured floor) are kept.
    """
    cfg = ctx.cfg
    ds = downsample_cube(cube, ctx)
    map1 = form_ambiguity(ds, 0, cube.pulse_seeds[0], ctx)
    map2 = form_ambiguity(ds, 1, cube.pulse_seeds[1], ctx)
    psf = jrc_psf_provider(ctx, cube.pulse_seeds[0], cfg.az_fft)
    extr = clean_extract(map1, psf, cfg.clean_threshold_rel, cfg.clean_max_iter,
                         cfg.clean_floor_rel)
    clusters = cluster_detections(extr, range_gate_bins=12, az_gate_bins=24,
                                  n_fft=cfg.az_fft)
    detections = []
    for cl in clusters:
        _, reliable = pulse_pair_doppler(map1, map2, cl.peak_cell,
                                         cube.t_pri, support=cl.members)
        f_d, _ = fine_pulse_pair(cube, ctx, cl.peak_cell[0])
        v = f_d * C / (2.0 * cfg.f_c)
        det = Detection(
            range_m=float(cl.range_bin * cfg.range_bin_m),
            azimuth_deg=float(map1.azimuth_of_bin(cl.az_bin)),
            amplitude=cl.amplitude,
            doppler_hz=f_d,
            radial_velocity_mps=v,
            is_dynamic=bool(abs(v) > cfg.v_min),
            cluster_members=len(cl.members),
            range_bin=cl.range_bin,
            az_bin=cl.az_bin,
            doppler_reliable=reliable,
        )
        detections.append(det)
    detections.sort(key=lambda d: abs(d.amplitude), reverse=True)
    if include_static:
        return detections
    return [d for d in detections if d.is_dynamic]


def classify_burst(rx: np.ndarray, expected_radar_seeds, ctx: RspContext,
                   gamma: float | None = None) -> str:
    """Label a received burst as radar echo, uplink packet or unknown."""
    rx = np.asarray(rx)
    if rx.size == 0:
        raise ValueError("empty burst")
    if rx.ndim > 1:
        rx = rx[:, 0]
    cfg = ctx.cfg
    gamma = cfg.classify_gamma if gamma is None else gamma
    radar_peak = 0.0
    for seed in expected_radar_seeds:
        ref = ctx.waveform(seed)
        if len(rx) >= len(ref):
            peak, _ = normalized_peak(rx, ref)
            radar_peak = max(radar_peak, peak)
    comm_peak = 0.0
    pre = ctx.preamble(0)
    if len(rx) >= len(pre):
        comm_peak, _ = normalized_peak(rx, pre)
    radar_hit = radar_peak >= gamma
    comm_hit = comm_peak >= gamma
    if radar_hit and not comm_hit:
        return "radar_echo"
    if comm_hit and not radar_hit:
        return "uplink_packet"
    return "unknown"


def detections_to_csv(detections: list[Detection], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["range_m", "azimuth_deg", "amplitude", "doppler_hz",
                         "radial_velocity_mps", "is_dynamic", "cluster_members"])
        for d in detections:
            writer.writerow([f"{d.range_m:.4f}", f"{d.azimuth_deg:.3f}",
                             f"{abs(d.amplitude):.6g}", f"{d.doppler_hz:.2f}",
                             f"{d.radial_velocity_mps:.3f}", int(d.is_dynamic),
                             d.cluster_members])
