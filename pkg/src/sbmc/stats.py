"""Autocorrelation-aware error analysis for Markov chain output."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def autocorr(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation function via FFT (rho[0] = 1)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    var = d @ d
    if n < 2 or var == 0:
        out = np.zeros(max(n, 1))
        out[0] = 1.0
        return out
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n]
    return acf / acf[0]


def tau_int(x, c: float = 6.0) -> float:
    """Integrated autocorrelation time with automatic windowing.

    Convention tau = 1/2 + sum_{t>=1} rho(t), so that the variance of the
    mean is 2 tau sigma^2 / n.  The window is the smallest M with M >= c tau(M).
    """
    rho = autocorr(x)
    if rho.size < 2:
        return 0.5
    taus = 0.5 + np.cumsum(rho[1:])
    m = np.arange(1, rho.size)
    ok = m >= c * taus
    if not np.any(ok):
        return float(max(taus[-1], 0.5))
    return float(max(taus[np.argmax(ok)], 0.5))


def _split(x, chain_ids):
    x = np.asarray(x)
    if chain_ids is None:
        return [x]
    chain_ids = np.asarray(chain_ids)
    return [x[chain_ids == c] for c in np.unique(chain_ids)]


def chain_tau(x, chain_ids=None) -> float:
    parts = [p for p in _split(x, chain_ids) if p.size > 1]
    if not parts:
        return 0.5
    return max(tau_int(p) for p in parts)


def block_size_for(n: int, tau: float, min_blocks: int = 10, factor: float = 20.0) -> int:
    b = max(1, int(math.ceil(factor * tau)))
    if n // b < min_blocks:
        b = max(1, n // min_blocks)
    return b


def block_means(x, block_size: int, chain_ids=None) -> np.ndarray:
    """Means of consecutive blocks, never straddling chains; the ragged tail is dropped."""
    out = []
    for part in _split(x, chain_ids):
        nb = part.shape[0] // block_size
        if nb:
            trimmed = part[: nb * block_size]
            out.append(trimmed.reshape(nb, block_size, *part.shape[1:]).mean(axis=1))
    if not out:
        return np.empty((0,) + np.asarray(x).shape[1:])
    return np.concatenate(out)


@dataclass
class BlockStats:
    mean: float
    stderr: float
    tau: float
    n: int
    block_size: int
    n_blocks: int


def blocked(x, chain_ids=None, tau: float | None = None, block_size: int | None = None) -> BlockStats:
    """Mean and blocked standard error of a scalar series."""
    x = np.asarray(x, dtype=float)
    tau = chain_tau(x, chain_ids) if tau is None else tau
    per_chain = min(p.size for p in _split(x, chain_ids))
    b = block_size or block_size_for(per_chain, tau)
    bm = block_means(x, b, chain_ids)
    nb = bm.size
    err = float(bm.std(ddof=1) / math.sqrt(nb)) if nb > 1 else math.nan
    return BlockStats(float(x.mean()), err, tau, x.size, b, nb)


def jackknife(func, series, chain_ids=None, block_size: int | None = None):
    """Blocked jackknife for a function of several means.

    ``series`` is a sequence of equally long sample arrays; ``func`` receives
    their means as a list and returns a float.  Returns (value, stderr, tau, block_size).
    """
    series = [np.asarray(s, dtype=float) for s in series]
    tau = max(chain_tau(s, chain_ids) for s in series)
    per_chain = min(p.size for p in _split(series[0], chain_ids))
    b = block_size or block_size_for(per_chain, tau)
    blocks = [block_means(s, b, chain_ids) for s in series]
    nb = blocks[0].shape[0]
    full = [s.mean() for s in series]
    value = float(func(full))
    if nb < 2:
        return value, math.nan, tau, b
    totals = [bl.sum(axis=0) for bl in blocks]
    loo = np.array([func([(tot - bl[i]) / (nb - 1) for tot, bl in zip(totals, blocks)]) for i in range(nb)])
    err = float(math.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2)))
    return value, err, tau, b
