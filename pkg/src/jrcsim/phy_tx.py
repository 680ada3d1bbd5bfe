"""Packet construction: preamble fields, rate conversion, BRF, OFDM payload.

Chips are generated at the 1.76 GHz single-carrier rate and converted to the
2.64 GHz OFDM rate by a x3 upsample / low-pass / /2 decimate chain with
group-delay compensation. The radar waveform is a 768-sample cut of the
converted preamble.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import firwin

from . import bits as bitlib
from . import ldpc, ofdm
from .config import ConfigError, SystemConfig
from .golay import generate_golay_pair

PREAMBLE_SAMPLES = 4992
STF_CHIPS = 17 * 128
CEF_CHIPS = 1152
RADAR_SLICE = (4032, 4800)       # 0-based half-open; 1-based inclusive 4033..4800
AGC_REPS = 5                     # Ga64 repetitions per AGC subfield
TRN_SUBFIELDS_PER_UNIT = 4


class PacketError(ValueError):
    pass


@dataclass
class Packet:
    """A built packet: sample stream at f_ofdm plus field boundary metadata."""

    samples: np.ndarray
    boundaries: dict                 # name -> (start, stop), half-open
    kind: str                        # "downlink" | "uplink"
    n_sym: int
    brf_count: int
    scrambler_init: int
    payload_bits: np.ndarray
    seed: int = 0
    f_sample: float = 2.64e9

    @property
    def duration(self) -> float:
        return len(self.samples) / self.f_sample


@dataclass
class RadarWaveform:
    samples: np.ndarray
    pulse_index: int
    seed: int

    @property
    def duration(self) -> float:
        return len(self.samples) / 2.64e9


def _rotate(chips: np.ndarray) -> np.ndarray:
    """Apply the pi/2-per-chip phase rotation."""
    m = np.arange(len(chips))
    return chips * np.exp(1j * np.pi * m / 2.0)


def build_stf(seed: int = 0) -> np.ndarray:
    """Short training field: 16 x Ga128 then -Ga128, pi/2 rotated (2176 chips)."""
    ga = generate_golay_pair(128, seed).a.astype(np.float64)
    chips = np.concatenate([np.tile(ga, 16), -ga])
    return _rotate(chips)


def build_cef(seed: int = 0) -> np.ndarray:
    """Channel estimation field: Gu512 | Gv512 | Gv128, pi/2 rotated (1152 chips)."""
    pair512 = generate_golay_pair(512, seed)
    pair128 = generate_golay_pair(128, seed)
    chips = np.concatenate([
        pair512.a.astype(np.float64),
        pair512.b.astype(np.float64),
        pair128.b.astype(np.float64),
    ])
    return _rotate(chips)


def cef_reference_chips(seed: int, section: str = "v512") -> np.ndarray:
    """Modulated chip sequence of one CEF section, as seen at the OFDM slice.

    "v512" is the 512-chip section that the radar waveform carries.
    """
    cef = build_cef(seed)
    if section == "u512":
        return cef[:512]
    if section == "v512":
        return cef[512:1024]
    raise ValueError(f"unknown CEF section {section}")


def design_rate_filter(n_taps: int, f_out: float = 2.64e9) -> np.ndarray:
    """Low-pass for the x3/2 rate change, cutoff 0.88 GHz at the 2x rate."""
    if n_taps % 2 == 0:
        raise ConfigError("rate-change filter needs an odd tap count")
    f_mid = 2.0 * f_out
    return firwin(n_taps, 0.88e9, fs=f_mid)


def rate_convert_sc_to_ofdm(chips: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Chips at f_sc -> samples at f_ofdm = 1.5 f_sc.

    Upsample x3, low-pass, decimate x2 with the (K-1)/2 group delay removed.
    Output length is ceil(1.5 * len(chips)).
    """
    k = len(taps)
    if k % 2 == 0:
        raise ConfigError("rate-change filter needs an odd tap count")
    up = np.zeros(3 * len(chips), dtype=np.complex128)
    up[::3] = chips
    filtered = np.convolve(up, taps * 3.0)
    delay = (k - 1) // 2
    n_out = int(np.ceil(1.5 * len(chips)))
    idx = 2 * np.arange(n_out) + delay
    padded = np.concatenate([filtered, np.zeros(max(0, idx[-1] + 1 - len(filtered)))])
    return padded[idx]


def rate_convert_ofdm_to_sc(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Inverse rate change (f_ofdm -> f_sc): upsample x2, low-pass, decimate x3."""
    k = len(taps)
    up = np.zeros(2 * len(samples), dtype=np.complex128)
    up[::2] = samples
    filtered = np.convolve(up, taps * 2.0)
    delay = (k - 1) // 2
    n_out = int(np.floor(len(samples) * 2 / 3))
    idx = 3 * np.arange(n_out) + delay
    padded = np.concatenate([filtered, np.zeros(max(0, idx[-1] + 1 - len(filtered)))])
    return padded[idx]


def build_preamble(seed: int, taps: np.ndarray) -> np.ndarray:
    """STF followed by CEF, rate-converted to 4992 samples at f_ofdm."""
    chips = np.concatenate([build_stf(seed), build_cef(seed)])
    out = rate_convert_sc_to_ofdm(chips, taps)
    assert len(out) == PREAMBLE_SAMPLES
    return out


def extract_radar_waveform(preamble: np.ndarray, pulse_index: int,
                           seed: int) -> RadarWaveform:
    """Cut the 768-sample radar section out of a built preamble."""
    if len(preamble) != PREAMBLE_SAMPLES:
        raise PacketError(f"preamble must have {PREAMBLE_SAMPLES} samples")
    lo, hi = RADAR_SLICE
    return RadarWaveform(samples=preamble[lo:hi].copy(),
                         pulse_index=pulse_index, seed=seed)


def radar_waveform_for_pulse(pulse_index: int, cfg: SystemConfig) -> RadarWaveform:
    """Radar waveform of a pulse; the Golay seed equals the pulse index."""
    taps = design_rate_filter(cfg.rate_filter_taps, cfg.f_ofdm)
    pre = build_preamble(pulse_index, taps)
    wf = extract_radar_waveform(pre, pulse_index, seed=pulse_index)
    wf.samples = wf.samples * np.sqrt(cfg.es)
    return wf


def build_brf_chips(m_fields: int, seed: int = 0) -> np.ndarray:
    """Beam-refinement chips: AGC subfields then TRN units.

    One AGC subfield is Ga64 repeated five times; one TRN unit is the CEF
    followed by four 640-chip training subfields built from the 128-chip
    pair (+a, -b, +a, +b, +a).
    """
    if m_fields == 0:
        return np.zeros(0, dtype=np.complex128)
    if m_fields % 4 or m_fields > 64 or m_fields < 0:
        raise ConfigError("BRF field count must be a multiple of 4, at most 64")
    ga64 = generate_golay_pair(64, seed).a.astype(np.float64)
    pair = generate_golay_pair(128, seed)
    a, b = pair.a.astype(np.float64), pair.b.astype(np.float64)
    agc = np.tile(np.tile(ga64, AGC_REPS), m_fields)
    trn_sub = np.concatenate([a, -b, a, b, a])
    cef = build_cef(seed)
    unit = np.concatenate([cef, _rotate(np.tile(trn_sub, TRN_SUBFIELDS_PER_UNIT))])
    chips = np.concatenate([_rotate(agc)] + [unit] * (m_fields // 4))
    return chips


def build_brf(m_fields: int, taps: np.ndarray, seed: int = 0) -> np.ndarray:
    chips = build_brf_chips(m_fields, seed)
    if len(chips) == 0:
        return chips
    return rate_convert_sc_to_ofdm(chips, taps)


def encode_data(payload: np.ndarray, scrambler_init: int, n_sym: int,
                brf_count: int, wola_edge: int):
    """Scramble, LDPC-encode, map and OFDM-modulate header + data.

    Returns (block samples, n_data_symbols, padded payload length). The
    header occupies one extra leading OFDM symbol and is not scrambled; its
    first seven bits carry the scrambler key for the receiver.
    """
    if not 0 < scrambler_init < 128:
        raise PacketError("scrambler init must be a nonzero 7-bit value")
    payload = np.asarray(payload, dtype=np.uint8)
    n_data_sym = max(1, int(np.ceil(len(payload) / ldpc.K_BITS)))
    if n_sym is not None:
        if n_sym < n_data_sym:
            raise PacketError("n_sym too small for the payload")
        n_data_sym = n_sym
    padded = np.zeros(n_data_sym * ldpc.K_BITS, dtype=np.uint8)
    padded[: len(payload)] = payload

    header = bitlib.pack_header(scrambler_init, n_data_sym, mcs=1,
                                brf_count=brf_count, payload_len=len(payload),
                                block_bits=ldpc.K_BITS)
    scrambled = bitlib.scramble_payload(padded, scrambler_init)
    blocks = np.vstack([header, scrambled.reshape(n_data_sym, ldpc.K_BITS)])
    codewords = ldpc.encode(blocks)
    assert bool(ldpc.syndrome_ok(codewords).all())

    symbols = ofdm.qpsk_map(codewords.reshape(-1)).reshape(n_data_sym + 1,
                                                           ofdm.N_DATA_SC)
    # Amplitude randomization on data symbols only; the header must decode
    # before the scrambler key (which seeds the rotation) is known.
    symbols[1:] = symbols[1:] * ofdm.q_matrix_phases(scrambler_init)
    grid = ofdm.assemble_grid(symbols)
    return ofdm.modulate(grid, wola_edge), n_data_sym, len(padded)


def build_packet(kind: str, n_sym: int, brf_count: int, payload_bits: np.ndarray,
                 seed: int = 0, scrambler_init: int = 0x5B,
                 cfg: SystemConfig | None = None) -> Packet:
    """Assemble preamble | header | data | BRF at f_ofdm, scaled by sqrt(es)."""
    cfg = cfg or SystemConfig()
    if kind not in ("downlink", "uplink"):
        raise PacketError(f"unknown packet kind {kind}")
    taps = design_rate_filter(cfg.rate_filter_taps, cfg.f_ofdm)
    preamble = build_preamble(seed, taps)
    data_block, n_data_sym, _ = encode_data(payload_bits, scrambler_init,
                                            n_sym, brf_count, cfg.wola_edge)
    brf = build_brf(brf_count, taps, seed=0)
    samples = np.concatenate([preamble, data_block, brf]) * np.sqrt(cfg.es)

    header_stop = PREAMBLE_SAMPLES + ofdm.SYMBOL_STRIDE
    data_stop = PREAMBLE_SAMPLES + len(data_block)
    boundaries = {
        "preamble": (0, PREAMBLE_SAMPLES),
        "header": (PREAMBLE_SAMPLES, header_stop),
        "data": (header_stop, data_stop),
        "brf": (data_stop, data_stop + len(brf)),
    }
    return Packet(samples=samples, boundaries=boundaries, kind=kind,
                  n_sym=n_data_sym, brf_count=brf_count,
                  scrambler_init=scrambler_init,
                  payload_bits=np.asarray(payload_bits, dtype=np.uint8),
                  seed=seed, f_sample=cfg.f_ofdm)


def expected_duration(n_sym: int, brf_count: int, cfg: SystemConfig) -> float:
    """Nominal packet duration from the field model (seconds)."""
    samples = (PREAMBLE_SAMPLES + ofdm.block_length(n_sym + 1, cfg.wola_edge))
    if brf_count:
        chips = brf_count * AGC_REPS * 64 + (brf_count // 4) * (
            CEF_CHIPS + TRN_SUBFIELDS_PER_UNIT * 5 * 128)
        samples += int(np.ceil(1.5 * chips))
    return samples / cfg.f_ofdm


def dump_packet(packet: Packet, iq_path: str, meta_path: str) -> None:
    """Interleaved float32 I/Q file plus a JSON metadata sidecar."""
    iq = np.empty(2 * len(packet.samples), dtype=np.float32)
    iq[0::2] = packet.samples.real
    iq[1::2] = packet.samples.imag
    iq.tofile(iq_path)
    meta = {
        "kind": packet.kind,
        "n_sym": packet.n_sym,
        "brf_count": packet.brf_count,
        "scrambler_init": packet.scrambler_init,
        "seed": packet.seed,
        "f_sample": packet.f_sample,
        "n_samples": len(packet.samples),
        "boundaries": {k: list(v) for k, v in packet.boundaries.items()},
        "payload_bits": "".join(str(int(b)) for b in packet.payload_bits),
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_packet(iq_path: str, meta_path: str) -> Packet:
    with open(meta_path) as fh:
        meta = json.load(fh)
    iq = np.fromfile(iq_path, dtype=np.float32)
    samples = iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64)
    if len(samples) != meta["n_samples"]:
        raise PacketError("I/Q file length does not match metadata")
    payload = np.array([int(c) for c in meta["payload_bits"]], dtype=np.uint8)
    return Packet(samples=samples,
                  boundaries={k: tuple(v) for k, v in meta["boundaries"].items()},
                  kind=meta["kind"], n_sym=meta["n_sym"],
                  brf_count=meta["brf_count"],
                  scrambler_init=meta["scrambler_init"],
                  payload_bits=payload, seed=meta["seed"],
                  f_sample=meta["f_sample"])
