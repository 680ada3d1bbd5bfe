"""Scrambler, header layout and small bit utilities."""

from __future__ import annotations

import numpy as np

SCRAMBLER_ORDER = 7
DUMMY_HEADER_BITS = 57   # descrambler prepends this many placeholder bits

# Header field widths (bits). One OFDM symbol carries the packed header plus
# a CRC-16 and zero padding.
_H_INIT = 7
_H_NSYM = 12
_H_MCS = 4
_H_BRF = 7
_H_LEN = 24
HEADER_INFO_BITS = _H_INIT + _H_NSYM + _H_MCS + _H_BRF + _H_LEN
HEADER_CRC_BITS = 16


def lfsr_sequence(init: int, n: int) -> np.ndarray:
    """x^7 + x^4 + 1 scrambling sequence of length n for a nonzero 7-bit init."""
    if not 0 < init < 128:
        raise ValueError("scrambler init must be a nonzero 7-bit value")
    state = [(init >> i) & 1 for i in range(SCRAMBLER_ORDER)][::-1]
    period = []
    for _ in range(127):
        out = state[6] ^ state[3]
        period.append(out)
        state = [out] + state[:-1]
    reps = n // 127 + 1
    return np.tile(np.array(period, dtype=np.uint8), reps)[:n]


def scramble_payload(bits: np.ndarray, init: int) -> np.ndarray:
    """Scramble payload bits with the LFSR advanced past the dummy header."""
    bits = np.asarray(bits, dtype=np.uint8)
    seq = lfsr_sequence(init, DUMMY_HEADER_BITS + len(bits))
    return bits ^ seq[DUMMY_HEADER_BITS:]


def descramble_payload(bits: np.ndarray, init: int) -> np.ndarray:
    """Inverse of scramble_payload; prepends the dummy header then strips it."""
    padded = np.concatenate([np.zeros(DUMMY_HEADER_BITS, dtype=np.uint8),
                             np.asarray(bits, dtype=np.uint8)])
    out = padded ^ lfsr_sequence(init, len(padded))
    return out[DUMMY_HEADER_BITS:]


def crc16(bits: np.ndarray) -> np.ndarray:
    """CRC-16/CCITT over a bit array, MSB first."""
    reg = 0xFFFF
    for b in np.asarray(bits, dtype=np.uint8):
        reg ^= int(b) << 15
        if reg & 0x8000:
            reg = ((reg << 1) ^ 0x1021) & 0xFFFF
        else:
            reg = (reg << 1) & 0xFFFF
    return np.array([(reg >> (15 - i)) & 1 for i in range(16)], dtype=np.uint8)


def int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)],
                    dtype=np.uint8)


def bits_to_int(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def pack_header(scrambler_init: int, n_sym: int, mcs: int, brf_count: int,
                payload_len: int, block_bits: int) -> np.ndarray:
    """Header bit block (padded to block_bits) protected by CRC-16."""
    info = np.concatenate([
        int_to_bits(scrambler_init, _H_INIT),
        int_to_bits(n_sym, _H_NSYM),
        int_to_bits(mcs, _H_MCS),
        int_to_bits(brf_count, _H_BRF),
        int_to_bits(payload_len, _H_LEN),
    ])
    block = np.concatenate([info, crc16(info)])
    if block_bits < len(block):
        raise ValueError("header does not fit the block")
    return np.concatenate([block, np.zeros(block_bits - len(block), dtype=np.uint8)])


def unpack_header(block: np.ndarray) -> dict:
    """Parse a header block; 'ok' is the CRC verdict."""
    info = np.asarray(block[:HEADER_INFO_BITS], dtype=np.uint8)
    rx_crc = np.asarray(block[HEADER_INFO_BITS:HEADER_INFO_BITS + HEADER_CRC_BITS],
                        dtype=np.uint8)
    ok = bool(np.array_equal(crc16(info), rx_crc))
    pos = 0
    fields = {}
    for name, width in (("scrambler_init", _H_INIT), ("n_sym", _H_NSYM),
                        ("mcs", _H_MCS), ("brf_count", _H_BRF),
                        ("payload_len", _H_LEN)):
        fields[name] = bits_to_int(info[pos:pos + width])
        pos += width
    fields["ok"] = ok
    return fields
