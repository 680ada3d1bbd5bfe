"""Beam-alignment protocols and the two-stage session lifecycle.

Three alignment procedures are modeled: the in-packet training protocol
(downlink packets carrying per-beam training fields), and two radar-assisted
variants where the BS finds the user by range-Doppler-azimuth processing
and only the user-side beam needs in-band training. Timing combines packet
durations computed from the PHY with configured processing constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import comm_rx, phy_tx, rsp, scene as scenelib
from .config import SystemConfig

IDLE_US = 1e-6                    # inter-packet guard
STD_TRAIN_SYMBOLS = 20            # minimum payload symbols when training fields ride along
JRC_DATA_SYMBOLS = 10


@dataclass
class TraceEvent:
    lane: str                     # "bs" | "mu" | "bs_tx"
    kind: str                     # tx_dl | tx_ul | tx_radar | idle | proc_*
    start_s: float
    duration_s: float
    blocking: bool = True
    meta: dict = field(default_factory=dict)


@dataclass
class AlignmentTrace:
    protocol: str
    events: list
    stage1_duration_s: float
    bs_ready_s: float
    mu_ready_s: float
    chosen_bs_beam_deg: float | None = None
    chosen_bs_beam_index: int | None = None
    chosen_mu_beam: int | None = None
    success: bool = True
    detections: list = field(default_factory=list)
    packet_rows: list = field(default_factory=list)

    def lane_completion(self, lane: str) -> float:
        ends = [e.start_s + e.duration_s for e in self.events
                if e.lane == lane and e.blocking]
        return max(ends) if ends else 0.0

    def critical_durations(self, lane: str) -> float:
        return sum(e.duration_s for e in self.events
                   if e.lane == lane and e.blocking)


class _Lane:
    def __init__(self, name: str, start: float = 0.0):
        self.name = name
        self.t = start
        self.events: list[TraceEvent] = []

    def add(self, kind: str, duration: float, blocking: bool = True, **meta):
        ev = TraceEvent(self.name, kind, self.t, duration, blocking, meta)
        self.events.append(ev)
        if blocking:
            self.t += duration
        return ev

    def wait_until(self, t: float):
        if t > self.t:
            self.add("idle", t - self.t)


# -- timing model -------------------------------------------------------------

def packet_durations(cfg: SystemConfig) -> dict:
    """Airtime of every packet type, computed from the packet structure."""
    return {
        "dl_std": phy_tx.expected_duration(STD_TRAIN_SYMBOLS, cfg.m_beams, cfg),
        "dl_jrc": phy_tx.expected_duration(JRC_DATA_SYMBOLS, 0, cfg),
        "ul_std": phy_tx.expected_duration(JRC_DATA_SYMBOLS, 0, cfg),
        "ul_v1": phy_tx.expected_duration(JRC_DATA_SYMBOLS, cfg.n_beams, cfg),
        "radar": cfg.radar_waveform_duration,
    }


def timing_summary(cfg: SystemConfig) -> dict:
    """Stage-1 completion times for all three protocols (seconds)."""
    d = packet_durations(cfg)
    pt = cfg.processing_times
    n, m = cfg.n_beams, cfg.m_beams
    del m

    std_air = n * d["dl_std"] + (n - 1) * IDLE_US
    std_mu = std_air + n * pt.rcp_dl_ms * 1e-3
    std_bs = std_mu + d["ul_std"] + pt.rcp_ul_ms * 1e-3
    radar_air = cfg.n_pulses * cfg.t_pri
    jrc_bs = radar_air + (pt.detect_ms + pt.preamble_extract_ms + pt.rsp_ms) * 1e-3
    v1_mu = (radar_air + d["dl_jrc"] + pt.rcp_dl_ms * 1e-3 + d["ul_v1"]
             + (pt.detect_ms + pt.rcp_ul_ms) * 1e-3)
    v2_mu = (radar_air + n * d["dl_jrc"] + (n - 1) * IDLE_US
             + pt.preamble_corr_ms * 1e-3)
    return {
        "durations": d,
        "standard": {"bs": std_bs, "mu": std_mu, "stage1": max(std_bs, std_mu)},
        "jrc_v1": {"bs": jrc_bs, "mu": v1_mu, "stage1": max(jrc_bs, v1_mu)},
        "jrc_v2": {"bs": jrc_bs, "mu": v2_mu, "stage1": max(jrc_bs, v2_mu)},
    }


# -- geometry helpers ----------------------------------------------------------

def _mu_boresight(target: scenelib.Target) -> np.ndarray:
    to_bs = target.trajectory.bs_position - target.root_at(0.0)
    to_bs = to_bs[:2]
    return to_bs / np.linalg.norm(to_bs)


def _angles(target: scenelib.Target, t: float) -> tuple[float, float, float]:
    """(range, azimuth at BS, arrival angle at MU relative to its boresight)."""
    r, theta, _ = scenelib.root_truth(target, t)
    rel = (target.trajectory.bs_position - target.root_at(t))[:2]
    bore = _mu_boresight(target)
    cross = bore[0] * rel[1] - bore[1] * rel[0]
    dot = float(np.dot(bore, rel))
    phi = float(np.degrees(np.arctan2(cross, dot)))
    return r, theta, np.clip(phi, -90.0, 90.0)


# -- alignment procedures -------------------------------------------------------

def _field_gain_matrix(target, t, cfg, model, rng, beam_angles_bs, n_mu_beams):
    """Training-field power matrix measured from propagated field samples."""
    taps = phy_tx.design_rate_filter(cfg.rate_filter_taps, cfg.f_ofdm)
    brf = phy_tx.build_brf(4, taps, seed=0) * np.sqrt(cfg.es)
    fld = brf[: len(brf) // 4]
    r, theta, phi = _angles(target, t)
    mu_geo = ch.mu_geometry(cfg)
    mu_angles = ch.beam_codebook_angles(n_mu_beams)
    gains = np.zeros((len(beam_angles_bs), n_mu_beams))
    for mi, ang in enumerate(beam_angles_bs):
        w_tx = ch.directional_weights(ch.bs_geometry(cfg), ang)
        for ni, mang in enumerate(mu_angles):
            w_rx = ch.directional_weights(mu_geo, mang)
            rx, d = ch.propagate_comm(fld, r, theta, phi, w_tx, w_rx, model,
                                      rng, cfg)
            seg = rx[d:d + len(fld)]
            est = np.vdot(fld, seg) / np.vdot(fld, fld)
            gains[mi, ni] = abs(est)
    return gains


def run_standard_alignment(cfg: SystemConfig, target, model, rng,
                           t0: float = 0.0) -> AlignmentTrace:
    """In-packet training: N downlink packets x M fields, then one uplink."""
    d = packet_durations(cfg)
    pt = cfg.processing_times
    bs = _Lane("bs", t0)
    mu = _Lane("mu", t0)
    arrivals = []
    for n in range(cfg.n_beams):
        ev = bs.add("tx_dl", d["dl_std"], n_sym=STD_TRAIN_SYMBOLS,
                    brf=cfg.m_beams, beam="quasi_omni", mu_beam=n)
        arrivals.append(ev.start_s + ev.duration_s)
        if n < cfg.n_beams - 1:
            bs.add("idle", IDLE_US)
    for n in range(cfg.n_beams):
        mu.wait_until(arrivals[n])
        mu.add("proc_rcp", pt.rcp_dl_ms * 1e-3, packet=n)
    mu_ready = mu.t
    beam_angles = ch.beam_codebook_angles(cfg.m_beams)
    gains = _field_gain_matrix(target, t0, cfg, model, rng, beam_angles,
                               cfg.n_beams)
    m_best, n_best = np.unravel_index(int(np.argmax(gains)), gains.shape)
    mu.add("tx_ul", d["ul_std"], beam=int(n_best))
    bs.wait_until(mu.t)
    bs.add("proc_rcp", pt.rcp_ul_ms * 1e-3, packet="ul")
    bs_ready = bs.t
    stage1 = max(bs_ready, mu_ready)
    return AlignmentTrace(
        protocol="standard", events=bs.events + mu.events,
        stage1_duration_s=stage1 - t0, bs_ready_s=bs_ready - t0,
        mu_ready_s=mu_ready - t0,
        chosen_bs_beam_deg=float(beam_angles[m_best]),
        chosen_bs_beam_index=int(m_best), chosen_mu_beam=int(n_best))


def run_jrc_alignment(version: int, cfg: SystemConfig, target, model, rng,
                      t0: float = 0.0, ctx: rsp.RspContext | None = None
                      ) -> AlignmentTrace:
    """Radar-assisted alignment; the BS beam comes straight from detection."""
    if version not in (1, 2):
        raise ValueError("version must be 1 or 2")
    if cfg.n_pulses < 2:
        raise ValueError("need at least two radar pulses")
    ctx = ctx or rsp.RspContext(cfg)
    d = packet_durations(cfg)
    pt = cfg.processing_times
    bs = _Lane("bs", t0)
    mu = _Lane("mu", t0)

    for p in range(cfg.n_pulses):
        bs.add("tx_radar", d["radar"], pulse=p + 1)
        bs.add("idle", cfg.t_pri - d["radar"])
        if p > 0:
            bs.add("proc_detect", pt.detect_ms * 1e-3, blocking=False,
                   meta_note="pipelined with the next interval")
    radar_done = bs.t

    cube = rsp.build_radar_cube([target], t0, ctx, model, rng)
    burst = rsp.classify_burst(cube.samples[:, 0, :], cube.pulse_seeds, ctx)
    detections = rsp.detect_mu(cube, ctx)
    bs.add("proc_detect", pt.detect_ms * 1e-3, classified=burst)
    bs.add("proc_extract", pt.preamble_extract_ms * 1e-3)
    bs.add("proc_rsp", pt.rsp_ms * 1e-3, detections=len(detections))
    bs_ready = bs.t
    success = len(detections) > 0
    theta_hat = detections[0].azimuth_deg if success else None

    mu.wait_until(radar_done)
    if version == 1:
        mu.add("idle", d["dl_jrc"])               # first DL arrives
        mu.add("proc_rcp", pt.rcp_dl_ms * 1e-3)
        mu.add("tx_ul", d["ul_v1"], brf=cfg.n_beams)
        mu.add("proc_detect", pt.detect_ms * 1e-3, site="bs")
        mu.add("proc_rcp", pt.rcp_ul_ms * 1e-3, site="bs", packet="ul")
    else:
        for n in range(cfg.n_beams):
            mu.add("idle", d["dl_jrc"], rx_beam=n)
            if n < cfg.n_beams - 1:
                mu.add("idle", IDLE_US)
        mu.add("proc_corr", pt.preamble_corr_ms * 1e-3)
    mu_ready = mu.t

    # User-side beam choice from measured gains (training fields for v1,
    # per-packet preamble correlation for v2); both reduce to the beam whose
    # pattern best matches the arrival angle.
    _, _, phi = _angles(target, t0)
    mu_angles = ch.beam_codebook_angles(cfg.n_beams)
    mu_geo = ch.mu_geometry(cfg)
    taps = phy_tx.design_rate_filter(cfg.rate_filter_taps, cfg.f_ofdm)
    pre = phy_tx.build_preamble(0, taps) * np.sqrt(cfg.es)
    w_tx = (ch.directional_weights(ch.bs_geometry(cfg), theta_hat)
            if success else ch.quasi_omni_weights(ch.bs_geometry(cfg)))
    r, theta, _ = _angles(target, t0)
    gains = []
    for ang in mu_angles:
        w_rx = ch.directional_weights(mu_geo, ang)
        rx, dd = ch.propagate_comm(pre, r, theta, phi, w_tx, w_rx, model,
                                   rng, cfg)
        seg = rx[dd:dd + len(pre)]
        gains.append(abs(np.vdot(pre, seg)))
    n_best = int(np.argmax(gains))

    stage1 = max(bs_ready, mu_ready)
    return AlignmentTrace(
        protocol=f"jrc_v{version}", events=bs.events + mu.events,
        stage1_duration_s=stage1 - t0, bs_ready_s=bs_ready - t0,
        mu_ready_s=mu_ready - t0, chosen_bs_beam_deg=theta_hat,
        chosen_mu_beam=n_best, success=success, detections=detections)


# -- sessions -------------------------------------------------------------------

@dataclass
class SessionOptions:
    duration_s: float = 0.25
    payload_bits: int = JRC_DATA_SYMBOLS * 504
    realign_drop_db: float = 6.0
    max_sims: int = 900            # simulated packets per session (stride fills the rest)
    max_align_retries: int = 4


@dataclass
class PacketRow:
    t_s: float
    protocol: str
    stage: int
    ber: float
    snr_db: float
    weight: int = 1                # number of identical slots this row stands for


def _simulate_packet(template, target, t, w_bs, mu_beam_deg, cfg, model, rng,
                     quasi_bs=False, quasi_mu=False):
    r, theta, phi = _angles(target, t)
    w_tx = ch.quasi_omni_weights(ch.bs_geometry(cfg)) if quasi_bs else w_bs
    w_rx = (ch.quasi_omni_weights(ch.mu_geometry(cfg)) if quasi_mu
            else ch.directional_weights(ch.mu_geometry(cfg), mu_beam_deg))
    rx, d = ch.propagate_comm(template.samples, r, theta, phi, w_tx, w_rx,
                              model, rng, cfg)
    snr = ch.measure_snr_db(rx[d:d + phy_tx.PREAMBLE_SAMPLES], cfg)
    try:
        out = comm_rx.receive_packet(rx, d, cfg,
                                     payload_ref=template.payload_bits)
        ber = out.ber
    except comm_rx.FramingError:
        ber = 1.0
    return ber, snr


def run_session(protocol: str, target, cfg: SystemConfig, model, rng,
                opts: SessionOptions | None = None) -> list:
    """Alternate alignment and directional data transfer along a trajectory.

    Data packets flow at full duty; to keep runtime bounded, one packet in
    every `stride` slots is actually pushed through the channel and decoder
    and stands for its whole group in the log.
    """
    opts = opts or SessionOptions()
    ctx = rsp.RspContext(cfg)
    align = {
        "standard": lambda t: run_standard_alignment(cfg, target, model, rng, t),
        "jrc_v1": lambda t: run_jrc_alignment(1, cfg, target, model, rng, t, ctx),
        "jrc_v2": lambda t: run_jrc_alignment(2, cfg, target, model, rng, t, ctx),
    }[protocol]

    d = packet_durations(cfg)
    slot = d["dl_jrc"] + IDLE_US
    total_slots = int(opts.duration_s / slot)
    stride = max(1, total_slots // opts.max_sims)
    template = phy_tx.build_packet(
        "downlink", JRC_DATA_SYMBOLS, 0,
        np.random.default_rng(11).integers(0, 2, opts.payload_bits).astype(np.uint8),
        cfg=cfg)
    mu_angles = ch.beam_codebook_angles(cfg.n_beams)
    bs_grid = ch.beam_codebook_angles(cfg.m_beams)

    rows: list[PacketRow] = []
    t = 0.0
    retries = 0
    while t < opts.duration_s:
        trace = align(t)
        if not trace.success and retries < opts.max_align_retries:
            retries += 1
            t += trace.stage1_duration_s
            continue
        retries = 0
        t_align_end = t + trace.stage1_duration_s
        bs_ready_at = t + trace.bs_ready_s
        mu_ready_at = t + trace.mu_ready_s

        # Stage-1 data packets ride quasi-omni until each side's beam locks.
        ts = t
        while ts < min(t_align_end, opts.duration_s):
            quasi_bs = ts < bs_ready_at or trace.chosen_bs_beam_deg is None
            quasi_mu = ts < mu_ready_at or trace.chosen_mu_beam is None
            if protocol == "standard":
                quasi_bs = ts < t_align_end   # BS beam only known at the end
            w_bs = (ch.quasi_omni_weights(ch.bs_geometry(cfg)) if quasi_bs else
                    ch.directional_weights(ch.bs_geometry(cfg),
                                           trace.chosen_bs_beam_deg))
            mu_ang = mu_angles[trace.chosen_mu_beam or 0]
            ber, snr = _simulate_packet(template, target, ts, w_bs, mu_ang,
                                        cfg, model, rng, quasi_bs=quasi_bs,
                                        quasi_mu=quasi_mu)
            rows.append(PacketRow(ts, protocol, 1, ber, snr, weight=stride))
            ts += stride * slot
        t = t_align_end
        if t >= opts.duration_s:
            break

        # Stage 2: directional data until the link degrades.
        if protocol == "standard":
            beam_deg = float(bs_grid[trace.chosen_bs_beam_index])
        else:
            beam_deg = float(trace.chosen_bs_beam_deg)
        w_bs = ch.directional_weights(ch.bs_geometry(cfg), beam_deg)
        mu_ang = mu_angles[trace.chosen_mu_beam]
        peak_snr = None
        while t < opts.duration_s:
            ber, snr = _simulate_packet(template, target, t, w_bs, mu_ang,
                                        cfg, model, rng)
            rows.append(PacketRow(t, protocol, 2, ber, snr, weight=stride))
            t += stride * slot
            peak_snr = snr if peak_snr is None else max(peak_snr, snr)
            if snr < peak_snr - opts.realign_drop_db:
                break
    return rows


def throughput(rows: list, d_bits: int, duration_s: float) -> float:
    """Delivered rate in bits/s from the per-packet log."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if not rows:
        return 0.0
    n_p = sum(r.weight for r in rows)
    ber_sum = sum(r.ber * r.weight for r in rows)
    return (1.0 - ber_sum / n_p) * d_bits * n_p / duration_s
