"""Golay complementary pairs and correlation primitives.

The pairs are produced by the recursive delay-and-sign construction, which
guarantees the complementary autocorrelation identity for every choice of
delay permutation and sign pattern. A seed selects that choice, so distinct
seeds give distinct but always-valid pairs; seed 0 is the canonical pair
used by communication preambles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .config import ConfigError

SUPPORTED_LENGTHS = (64, 128, 512)


@dataclass(frozen=True)
class GolayPair:
    a: np.ndarray    # int array of +/-1, length L
    b: np.ndarray    # int array of +/-1, length L
    seed: int

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("pair members must share a length")

    @property
    def length(self) -> int:
        return len(self.a)


def generate_golay_pair(length: int, seed: int) -> GolayPair:
    """Build a binary Golay complementary pair of the given length.

    The seed permutes the delay vector (powers of two) and flips signs in
    the recursion; seed 0 keeps the identity permutation and all-plus signs.
    """
    if length not in SUPPORTED_LENGTHS:
        raise ConfigError(f"unsupported Golay length {length}")
    if seed < 0:
        raise ValueError("seed must be >= 0")
    k = int(np.log2(length))
    delays = 2 ** np.arange(k)
    signs = np.ones(k, dtype=np.int64)
    if seed != 0:
        rng = np.random.default_rng(seed)
        delays = rng.permutation(delays)
        signs = rng.integers(0, 2, size=k) * 2 - 1

    a = np.zeros(length, dtype=np.int64)
    b = np.zeros(length, dtype=np.int64)
    a[0] = 1
    b[0] = 1
    for d, w in zip(delays, signs):
        shifted = np.concatenate([np.zeros(d, dtype=np.int64), b[:-d]])
        a, b = a + w * shifted, a - w * shifted
    return GolayPair(a=a, b=b, seed=seed)


def autocorrelate(x: np.ndarray) -> np.ndarray:
    """Full linear autocorrelation (integer exact for integer input)."""
    x = np.asarray(x)
    return np.correlate(x, x, mode="full")


def complementary_sidelobes(pair: GolayPair) -> np.ndarray:
    """Sum of the two autocorrelations; a delta of height 2L iff complementary."""
    return autocorrelate(pair.a) + autocorrelate(pair.b)


def cross_correlate(x: np.ndarray, g: np.ndarray, method: str = "auto") -> np.ndarray:
    """Cross-correlate x against a reference g over non-negative delays.

    Returns r with r[d] = sum_m x[d+m] * conj(g[m]); len(r) == len(x), so the
    index of the peak equals the delay of an embedded copy of g.
    """
    x = np.asarray(x)
    g = np.asarray(g)
    if len(x) == 0 or len(g) == 0:
        raise ValueError("empty input to cross_correlate")
    if len(x) < len(g):
        raise ValueError("x must be at least as long as g")
    kernel = np.conj(g[::-1])
    if method == "direct" or (method == "auto" and len(x) * len(g) < 1 << 16):
        full = np.convolve(x, kernel)
    else:
        full = fftconvolve(x, kernel)
    return full[len(g) - 1:]


def normalized_peak(x: np.ndarray, g: np.ndarray) -> tuple[float, int]:
    """Peak of the sliding normalized correlation |<x_d, g>| / (||x_d|| ||g||).

    Bounded by 1 (Cauchy-Schwarz); equals 1 when a window of x is a scaled
    copy of g. Returns (peak value, delay of the peak).
    """
    x = np.asarray(x, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    corr = np.abs(cross_correlate(x, g))
    n = len(g)
    power = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    window = power[n:] - power[:-n]              # ||x[d:d+n]||^2 for each start d
    norm = np.sqrt(np.maximum(window, 1e-300)) * np.linalg.norm(g)
    valid = corr[: len(window)] / norm
    d = int(np.argmax(valid))
    return float(valid[d]), d
