"""Rate-3/4 quasi-cyclic LDPC code (672-bit codewords, 42-lift).

Encoding solves for the parity blocks by block back-substitution; decoding
is normalized min-sum with early termination on a clean syndrome.
"""

from __future__ import annotations

import numpy as np

Z = 42
N_BITS = 672
K_BITS = 504
M_BITS = N_BITS - K_BITS

# Prototype matrix: cyclic-shift exponents, -1 marks an absent block.
_PROTO = np.array(
    [
        [35, 19, 41, 22, 40, 41, 39, 6, 28, 18, 17, 3, 28, -1, -1, -1],
        [29, 30, 0, 8, 33, 22, 17, 4, 27, 28, 20, 27, 24, 23, -1, -1],
        [37, 31, 18, 23, 11, 21, 6, 20, 32, 9, 12, 29, -1, 0, 13, -1],
        [25, 22, 4, 34, 31, 3, 14, 15, 4, -1, 14, 18, 13, 13, 22, 24],
    ],
    dtype=np.int64,
)


def _build_h() -> np.ndarray:
    h = np.zeros((M_BITS, N_BITS), dtype=np.uint8)
    for br in range(4):
        for bc in range(16):
            s = _PROTO[br, bc]
            if s < 0:
                continue
            rows = br * Z + np.arange(Z)
            cols = bc * Z + (np.arange(Z) + s) % Z
            h[rows, cols] = 1
    return h


H = _build_h()

# Edge lists sorted by check row, used by the vectorized decoder.
_CHK_IDX, _VAR_IDX = np.nonzero(H)
_ROW_STARTS = np.searchsorted(_CHK_IDX, np.arange(M_BITS))
_N_EDGES = len(_CHK_IDX)


def _shift(v: np.ndarray, s: int) -> np.ndarray:
    """Apply the Z x Z cyclic block P^s to a length-Z bit vector."""
    return np.roll(v, -s)


def encode(data_bits: np.ndarray) -> np.ndarray:
    """Encode 504 data bits (or a (n, 504) batch) into 672-bit codewords."""
    data_bits = np.asarray(data_bits, dtype=np.uint8)
    if data_bits.ndim == 1:
        return encode(data_bits[None, :])[0]
    if data_bits.shape[1] != K_BITS:
        raise ValueError(f"expected {K_BITS} data bits per codeword")
    out = np.empty((data_bits.shape[0], N_BITS), dtype=np.uint8)
    for i, d in enumerate(data_bits):
        blocks = d.reshape(12, Z)
        syn = np.zeros((4, Z), dtype=np.uint8)
        for br in range(4):
            for bc in range(12):
                s = _PROTO[br, bc]
                if s >= 0:
                    syn[br] ^= _shift(blocks[bc], s)
        # Back-substitute along the staircase of parity blocks.
        p0 = np.roll(syn[0], _PROTO[0, 12])                      # P^28 p0 = s0
        p1 = np.roll(syn[1] ^ _shift(p0, _PROTO[1, 12]), _PROTO[1, 13])
        p2 = np.roll(syn[2] ^ _shift(p1, _PROTO[2, 13]), _PROTO[2, 14])
        p3 = np.roll(
            syn[3]
            ^ _shift(p0, _PROTO[3, 12])
            ^ _shift(p1, _PROTO[3, 13])
            ^ _shift(p2, _PROTO[3, 14]),
            _PROTO[3, 15],
        )
        out[i] = np.concatenate([d, p0, p1, p2, p3])
    return out


def syndrome_ok(codewords: np.ndarray) -> np.ndarray:
    """True per codeword when H c^T == 0 over GF(2)."""
    codewords = np.atleast_2d(np.asarray(codewords, dtype=np.uint8))
    syn = (codewords @ H.T) & 1
    return ~syn.any(axis=1)


def decode(llrs: np.ndarray, max_iter: int = 20, alpha: float = 0.8):
    """Normalized min-sum decoding of a (n, 672) LLR batch.

    LLR > 0 means bit 0. Returns (hard bits (n, 504), parity_ok (n,)).
    """
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    n_cw = llrs.shape[0]
    # Messages live on edges; batch dimension last for reduceat efficiency.
    v2c = llrs[:, _VAR_IDX].T.copy()              # (E, n_cw)
    c2v = np.zeros_like(v2c)
    post = llrs.copy()
    ok = np.zeros(n_cw, dtype=bool)
    for _ in range(max_iter):
        hard = (post < 0).astype(np.uint8)
        ok = syndrome_ok(hard)
        if ok.all():
            break
        # Check-node update: sign product and two smallest magnitudes per row.
        mags = np.abs(v2c)
        signs = np.signbit(v2c)
        row_sign = np.bitwise_xor.reduceat(signs, _ROW_STARTS, axis=0)
        m1 = np.minimum.reduceat(mags, _ROW_STARTS, axis=0)
        is_min = mags == np.repeat(m1, np.diff(np.append(_ROW_STARTS, _N_EDGES)), axis=0)
        masked = np.where(is_min, np.inf, mags)
        m2 = np.minimum.reduceat(masked, _ROW_STARTS, axis=0)
        reps = np.diff(np.append(_ROW_STARTS, _N_EDGES))
        m1e = np.repeat(m1, reps, axis=0)
        m2e = np.repeat(m2, reps, axis=0)
        row_sign_e = np.repeat(row_sign, reps, axis=0)
        out_mag = np.where(mags == m1e, m2e, m1e)
        # Avoid inf when a row has a single minimum duplicated.
        out_mag = np.where(np.isinf(out_mag), m1e, out_mag)
        out_sign = np.logical_xor(row_sign_e, signs)
        c2v = alpha * np.where(out_sign, -out_mag, out_mag)
        # Variable-node update.
        post = llrs.copy()
        np.add.at(post, (slice(None), _VAR_IDX), c2v.T)
        v2c = post[:, _VAR_IDX].T - c2v
    hard = (post < 0).astype(np.uint8)
    ok = syndrome_ok(hard)
    return hard[:, :K_BITS], ok
