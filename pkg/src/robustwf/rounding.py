"""Gaussian randomization and unit-modulus projection for relaxed covariances."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

__all__ = [
    "trial_rng",
    "gaussian_draw",
    "unit_modulus",
    "rank_one_factor",
    "max_workers",
    "ordered_map",
]

T = TypeVar("T")
R = TypeVar("R")


def trial_rng(seed: int, stream: int, trial: int) -> np.random.Generator:
    """Independent generator for one randomization trial.

    Streams keep waveform and filter draws apart; the result does not depend
    on the order in which trials run.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(trial))))


def _factor(R: np.ndarray) -> np.ndarray:
    n = R.shape[0]
    eps = 1e-12 * max(float(np.trace(R).real), 1e-300) / n
    return np.linalg.cholesky(0.5 * (R + R.conj().T) + eps * np.eye(n))


def gaussian_draw(R: np.ndarray, rng: np.random.Generator, factor: np.ndarray | None = None) -> np.ndarray:
    """One draw from CN(0, R)."""
    L = _factor(R) if factor is None else factor
    n = L.shape[0]
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    return L @ z


def unit_modulus(v: np.ndarray) -> np.ndarray:
    """Phase-only projection ``exp(j arg v)``; exactly unit modulus."""
    phase = np.angle(v)
    return np.cos(phase) + 1j * np.sin(phase)


def rank_one_factor(R: np.ndarray, ratio: float) -> np.ndarray | None:
    """``sqrt(lambda_1) v_1`` if ``lambda_2 / lambda_1 < ratio``, else None."""
    lam, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    top = lam[-1]
    if top <= 0:
        return None
    second = lam[-2] if lam.size > 1 else 0.0
    if second / top < ratio:
        return np.sqrt(top) * V[:, -1]
    return None


def max_workers() -> int:
    """Parallelism cap from ROBUSTWF_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("ROBUSTWF_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[fn(x) for x in items]``, threaded when ROBUSTWF_THREADS > 1; order preserved."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
