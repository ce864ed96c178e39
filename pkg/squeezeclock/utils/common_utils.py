# Squeezeclock ⏱️ AGPL-3.0 License

import math
from typing import Iterable

import numpy as np

OMEGA_0 = 2 * math.pi * 6.834e9  # 87Rb clock transition (rad/s)

# Independent RNG stream keys, one per consumer of randomness within a run
STREAMS = {
    "shot": 0,
    "calibration": 1,
    "floor": 2,
}


def variance_db(ratio):
    """Converts a variance ratio to decibels (10·log10)."""
    return 10 * np.log10(ratio)


def amplitude_db(ratio):
    """Converts an amplitude (standard-deviation) ratio to decibels (20·log10)."""
    return 20 * np.log10(ratio)


def db_to_variance(db):
    """Converts decibels to a variance ratio."""
    return 10 ** (np.asarray(db, dtype=float) / 10)


def db_to_amplitude(db):
    """Converts decibels to an amplitude ratio."""
    return 10 ** (np.asarray(db, dtype=float) / 20)


def qpn_jz(n: float) -> float:
    """Standard deviation of Jz for a coherent spin state of n atoms, sqrt(n)/2."""
    return math.sqrt(n) / 2


def power_sum_db(entries: Iterable[float]) -> float:
    """Power-sums noise entries given in dB relative to QPN, returning the total in dB."""
    entries = list(entries)
    if not entries:
        raise ValueError("power_sum_db requires at least one entry")
    return float(10 * math.log10(math.fsum(10 ** (e / 10) for e in entries)))


def shot_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Returns the generator for one (seed, stream, index) triple; identical inputs give identical draws."""
    if seed < 0 or index < 0:
        raise ValueError(f"seed and index must be non-negative, got seed={seed}, index={index}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[stream], int(index)]))
