"""Communication receiver: OFDM demod, channel estimation, MMSE, decoding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bits as bitlib
from . import ldpc, ofdm
from .config import SystemConfig


class FramingError(ValueError):
    pass


@dataclass
class DecodedPayload:
    bits: np.ndarray
    ber: float
    per_symbol_evm: list
    header_ok: bool
    header: dict = field(default_factory=dict)
    parity_failures: int = 0


def ofdm_demod(samples: np.ndarray, n_sym: int, wola_edge: int,
               offset: int = 0) -> np.ndarray:
    """FFT grids of header + n_sym data symbols starting at a known offset."""
    total = n_sym + 1
    block = samples[offset:]
    if len(block) < ofdm.block_length(total, 0):
        raise FramingError("received stream shorter than the declared packet")
    return ofdm.demodulate(block, total, wola_edge)


def estimate_channel(grids: np.ndarray) -> np.ndarray:
    """Least-squares pilot estimate, linearly interpolated across the band.

    Returns the complex gain per occupied subcarrier index referenced to
    unit-energy transmitted symbols, i.e. including the subcarrier amplitude.
    """
    _, pilots = ofdm.extract_cells(grids)
    ref = ofdm.PILOT_VALUES * ofdm.SC_AMPLITUDE
    h_p = (pilots / ref).mean(axis=0)
    pilot_pos = ofdm.PILOT_SC.astype(float)
    data_pos = ofdm.DATA_SC.astype(float)
    h_re = np.interp(data_pos, pilot_pos, h_p.real)
    h_im = np.interp(data_pos, pilot_pos, h_p.imag)
    return (h_re + 1j * h_im) * ofdm.SC_AMPLITUDE


def equalize_mmse(cells: np.ndarray, gain: np.ndarray, noise_var: float):
    """Per-cell MMSE estimate of unit-energy symbols; zero-forcing at nv=0.

    Returns (equalized symbols, erased mask). Cells with zero gain and zero
    noise variance cannot be equalized and are flagged erased.
    """
    if noise_var < 0:
        raise ValueError("noise variance must be >= 0")
    denom = np.abs(gain) ** 2 + noise_var
    erased = denom == 0
    denom = np.where(erased, 1.0, denom)
    return cells * np.conj(gain) / denom, erased


def _evm(equalized: np.ndarray) -> list:
    ideal = (np.sign(equalized.real) + 1j * np.sign(equalized.imag)) / np.sqrt(2)
    err = equalized - ideal
    return [float(np.sqrt(np.mean(np.abs(e) ** 2))) for e in err]


def demod_decode(data_cells: np.ndarray, gain: np.ndarray, noise_var: float,
                 scrambler_init: int, n_payload_bits: int,
                 reference_bits: np.ndarray | None = None) -> DecodedPayload:
    """LLRs, LDPC decoding and descrambling of the data symbols.

    Non-converged codewords keep their hard decisions and are counted in
    parity_failures rather than dropped.
    """
    n_sym = data_cells.shape[0]
    q = ofdm.q_matrix_phases(scrambler_init)
    eff_gain = gain[None, :] * q[None, :]
    llrs = ofdm.qpsk_llrs(data_cells, np.broadcast_to(eff_gain, data_cells.shape),
                          noise_var, amplitude=1.0)
    decoded, ok = ldpc.decode(llrs.reshape(n_sym, ldpc.N_BITS))
    scrambled = decoded.reshape(-1)
    bits = bitlib.descramble_payload(scrambled, scrambler_init)[:n_payload_bits]
    ber = 0.0
    if reference_bits is not None:
        ref = np.asarray(reference_bits, dtype=np.uint8)
        n = min(len(ref), len(bits))
        errors = int(np.sum(bits[:n] != ref[:n])) + abs(len(ref) - n)
        ber = errors / max(len(ref), 1)
    eq, _ = equalize_mmse(data_cells, eff_gain, noise_var)
    return DecodedPayload(bits=bits, ber=ber, per_symbol_evm=_evm(eq),
                          header_ok=True, parity_failures=int(np.sum(~ok)))


def decode_header(header_cells: np.ndarray, gain: np.ndarray,
                  noise_var: float) -> dict:
    llrs = ofdm.qpsk_llrs(header_cells[None, :],
                          np.broadcast_to(gain, header_cells.shape)[None, :],
                          noise_var, amplitude=1.0)
    decoded, ok = ldpc.decode(llrs)
    header = bitlib.unpack_header(decoded[0])
    header["ok"] = header["ok"] and bool(ok[0])
    return header


def receive_packet(rx: np.ndarray, offset: int, cfg: SystemConfig,
                   noise_var: float | None = None,
                   payload_ref: np.ndarray | None = None,
                   n_payload_bits: int | None = None) -> DecodedPayload:
    """Full receive chain from a sample stream with a known packet offset.

    The header symbol is decoded first; its fields steer the payload
    decoding. The MMSE noise variance is taken from the configured floor
    unless supplied.
    """
    from .phy_tx import PREAMBLE_SAMPLES

    noise_var = cfg.noise_power_w if noise_var is None else noise_var
    start = offset + PREAMBLE_SAMPLES
    block = rx[start:]
    if len(block) < ofdm.block_length(1, 0):
        raise FramingError("stream too short for the header symbol")
    head_grid = ofdm.demodulate(block, 1, cfg.wola_edge)
    gain_head = estimate_channel(head_grid)
    head_cells = ofdm.extract_cells(head_grid)[0][0]
    # The header symbol bypasses the amplitude randomizer.
    header = decode_header(head_cells, gain_head, noise_var)
    if not header["ok"]:
        return DecodedPayload(bits=np.zeros(0, np.uint8), ber=1.0,
                              per_symbol_evm=[], header_ok=False, header=header)
    n_sym = header["n_sym"]
    payload_len = header["payload_len"] if n_payload_bits is None else n_payload_bits
    grids = ofdm_demod(rx, n_sym, cfg.wola_edge, offset=start)
    gain = estimate_channel(grids)
    data_cells, _ = ofdm.extract_cells(grids[1:])
    out = demod_decode(data_cells, gain, noise_var, header["scrambler_init"],
                       payload_len, reference_bits=payload_ref)
    out.header_ok = True
    out.header = header
    return out
