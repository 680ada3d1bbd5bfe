"""OFDM numerology: subcarrier plan, QPSK mapping, symbol shaping.

512-point transform, 128-sample cyclic prefix, 336 data + 16 pilot cells in
a 355-subcarrier occupied band with a 3-bin DC null, raised-cosine
overlap-and-add at the symbol edges.
"""

from __future__ import annotations

import numpy as np

N_FFT = 512
N_CP = 128
N_DATA_SC = 336
N_PILOT_SC = 16
SYMBOL_STRIDE = N_FFT + N_CP         # 640 samples between symbol starts
BITS_PER_SYMBOL = 2 * N_DATA_SC      # QPSK

# Occupied band: subcarriers -177..177 except the 3 around DC.
_PILOT_OFFSETS = np.arange(10, 151, 20)          # 10, 30, ..., 150
PILOT_SC = np.sort(np.concatenate([-_PILOT_OFFSETS, _PILOT_OFFSETS]))
_occupied = np.arange(-177, 178)
_null = np.array([-1, 0, 1])
DATA_SC = np.setdiff1d(_occupied, np.concatenate([_null, PILOT_SC]))
assert len(DATA_SC) == N_DATA_SC and len(PILOT_SC) == N_PILOT_SC

# Fixed BPSK pilot pattern, known at both ends.
PILOT_VALUES = np.array([1, 1, -1, 1, -1, -1, 1, 1,
                         1, -1, 1, 1, -1, 1, 1, -1], dtype=np.float64)

# Subcarrier amplitude giving unit mean time-sample power per symbol.
SC_AMPLITUDE = np.sqrt(N_FFT / (N_DATA_SC + N_PILOT_SC))


def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray-coded QPSK, two bits per symbol, unit average energy."""
    bits = np.asarray(bits, dtype=np.float64).reshape(-1, 2)
    return ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / np.sqrt(2.0)


def qpsk_llrs(symbols: np.ndarray, gain: np.ndarray, noise_var: float,
              amplitude: float) -> np.ndarray:
    """Exact QPSK bit LLRs from matched-filter statistics.

    symbols are the raw received cells, gain the per-cell complex channel
    (including any static scaling), noise_var the complex noise power.
    Positive LLR favors bit 0.
    """
    z = symbols * np.conj(gain)
    scale = 2.0 * np.sqrt(2.0) * amplitude / max(noise_var, 1e-300)
    llr_i = scale * np.real(z)
    llr_q = scale * np.imag(z)
    return np.stack([llr_i, llr_q], axis=-1).reshape(symbols.shape[0], -1)


def q_matrix_phases(scrambler_init: int, n: int = N_DATA_SC) -> np.ndarray:
    """Deterministic unit-modulus rotation per data cell (unitary diagonal)."""
    rng = np.random.default_rng(0xAD00 + scrambler_init)
    return np.exp(2j * np.pi * rng.random(n))


def assemble_grid(data_symbols: np.ndarray, pilot_scale: float = 1.0) -> np.ndarray:
    """Place (n_sym, 336) data cells and pilots into (n_sym, 512) FFT bins."""
    n_sym = data_symbols.shape[0]
    grid = np.zeros((n_sym, N_FFT), dtype=np.complex128)
    grid[:, DATA_SC % N_FFT] = data_symbols * SC_AMPLITUDE
    grid[:, PILOT_SC % N_FFT] = PILOT_VALUES * SC_AMPLITUDE * pilot_scale
    return grid


def extract_cells(fft_bins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split demodulated FFT bins into (data cells, pilot cells)."""
    return fft_bins[..., DATA_SC % N_FFT], fft_bins[..., PILOT_SC % N_FFT]


def _wola_window(edge: int) -> np.ndarray:
    ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(edge) + 0.5) / edge))
    return ramp


def modulate(grid: np.ndarray, wola_edge: int) -> np.ndarray:
    """IFFT + cyclic prefix + weighted overlap-and-add across symbols.

    The raised-cosine ramp-in sits inside the cyclic prefix and the ramp-out
    overlaps the next symbol's prefix, so every 512-sample FFT core stays
    clean. Output length is n_sym * 640 + wola_edge.
    """
    n_sym = grid.shape[0]
    core = np.fft.ifft(grid, axis=1) * np.sqrt(N_FFT)   # unitary, unit power
    w = wola_edge
    out = np.zeros(n_sym * SYMBOL_STRIDE + w, dtype=np.complex128)
    ramp = _wola_window(w) if w else np.ones(0)
    for k in range(n_sym):
        ext = np.concatenate([core[k, -N_CP:], core[k], core[k, :w]])
        if w:
            ext[:w] *= ramp
            ext[-w:] *= ramp[::-1]
        start = k * SYMBOL_STRIDE
        out[start:start + SYMBOL_STRIDE + w] += ext
    return out


def core_offset(symbol_index: int, wola_edge: int) -> int:
    """Sample offset of the FFT window of a symbol inside a modulated block."""
    del wola_edge  # ramps live inside the prefix; the core offset is fixed
    return symbol_index * SYMBOL_STRIDE + N_CP


def block_length(n_sym: int, wola_edge: int) -> int:
    return n_sym * SYMBOL_STRIDE + wola_edge


def demodulate(block: np.ndarray, n_sym: int, wola_edge: int) -> np.ndarray:
    """Recover (n_sym, 512) FFT bins from a modulated block (CP removal + FFT)."""
    if len(block) < block_length(n_sym, wola_edge):
        raise ValueError("block too short for the declared symbol count")
    grids = np.empty((n_sym, N_FFT), dtype=np.complex128)
    for k in range(n_sym):
        start = core_offset(k, wola_edge)
        grids[k] = np.fft.fft(block[start:start + N_FFT]) / np.sqrt(N_FFT)
    return grids
