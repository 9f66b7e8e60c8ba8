"""Signal model: array responses, shift matrices, path matrices and noise covariance.

Conventions
-----------
* The transmit code matrix ``S`` is ``N_T x L`` and ``s = vec(S)`` stacks its
  columns (fast time slowest, transmit element fastest).
* The return of path ``k`` is ``vec(Y_k) = A_k s`` with ``Y_k`` of shape
  ``N_R x P`` (receive element fastest).
* Scattering reciprocity is always assumed, so each scatterer contributes a
  single merged path and the coefficient vector ``u`` has ``M + 1`` entries
  (direct path first).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "ArrayGeometry",
    "PathSpec",
    "ScenarioConfig",
    "NoiseCovariance",
    "SignalModel",
    "steering_vector",
    "shift_matrix",
    "path_matrix",
    "noise_covariance",
    "reference_spherical_scenario",
    "reference_annular_scenario",
]

NOISE_STRUCTURES = ("time-block", "channel-block")


class ConfigError(ValueError):
    """Invalid scenario or design configuration."""


@dataclass(frozen=True)
class ArrayGeometry:
    num_tx: int
    num_rx: int
    tx_spacing: float = 1.0
    rx_spacing: float = 0.5

    def __post_init__(self):
        if int(self.num_tx) != self.num_tx or self.num_tx < 1:
            raise ConfigError("num_tx must be a positive integer")
        if int(self.num_rx) != self.num_rx or self.num_rx < 1:
            raise ConfigError("num_rx must be a positive integer")
        if not (self.tx_spacing > 0 and self.rx_spacing > 0):
            raise ConfigError("element spacings must be positive")


@dataclass(frozen=True)
class PathSpec:
    """One (reciprocity-merged) scatterer path: direction in radians, delay in samples."""

    azimuth: float
    delay: int

    def __post_init__(self):
        if not (-math.pi / 2 - 1e-12 <= self.azimuth <= math.pi / 2 + 1e-12):
            raise ConfigError(f"azimuth {self.azimuth} outside [-pi/2, pi/2]")
        if int(self.delay) != self.delay or self.delay < 0:
            raise ConfigError("path delay must be a nonnegative integer")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: ArrayGeometry
    code_length: int
    target_azimuth: float
    scatterers: tuple[PathSpec, ...] = ()
    noise_power: float = 10.0
    noise_correlation: float = 0.8
    noise_structure: str = "time-block"

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if int(self.code_length) != self.code_length or self.code_length < 1:
            raise ConfigError("code_length must be a positive integer")
        if not (-math.pi / 2 - 1e-12 <= self.target_azimuth <= math.pi / 2 + 1e-12):
            raise ConfigError("target azimuth outside [-pi/2, pi/2]")
        if not self.noise_power > 0:
            raise ConfigError("noise power must be positive")
        if not 0 <= self.noise_correlation < 1:
            raise ConfigError("noise correlation must lie in [0, 1)")
        if self.noise_structure not in NOISE_STRUCTURES:
            raise ConfigError(f"noise structure must be one of {NOISE_STRUCTURES}")

    @property
    def num_paths(self) -> int:
        """Number of coefficient slots, M + 1."""
        return len(self.scatterers) + 1

    @property
    def window(self) -> int:
        """Recording window P = L + max delay."""
        return self.code_length + max((p.delay for p in self.scatterers), default=0)

    @property
    def waveform_length(self) -> int:
        return self.code_length * self.geometry.num_tx

    @property
    def filter_length(self) -> int:
        return self.window * self.geometry.num_rx

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "geometry": {
                "num_tx": int(g.num_tx),
                "num_rx": int(g.num_rx),
                "tx_spacing": float(g.tx_spacing),
                "rx_spacing": float(g.rx_spacing),
            },
            "code_length": int(self.code_length),
            "target_azimuth_deg": math.degrees(self.target_azimuth),
            "scatterers": [
                {"azimuth_deg": math.degrees(p.azimuth), "delay": int(p.delay)}
                for p in self.scatterers
            ],
            "noise": {
                "power": float(self.noise_power),
                "correlation": float(self.noise_correlation),
                "structure": self.noise_structure,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        try:
            g = doc["geometry"]
            geometry = ArrayGeometry(
                int(g["num_tx"]), int(g["num_rx"]),
                float(g.get("tx_spacing", 1.0)), float(g.get("rx_spacing", 0.5)),
            )
            noise = doc.get("noise", {})
            scat = tuple(
                PathSpec(math.radians(float(p["azimuth_deg"])), _as_int(p["delay"]))
                for p in doc.get("scatterers", [])
            )
            return cls(
                geometry=geometry,
                code_length=_as_int(doc["code_length"]),
                target_azimuth=math.radians(float(doc["target_azimuth_deg"])),
                scatterers=scat,
                noise_power=float(noise.get("power", 10.0)),
                noise_correlation=float(noise.get("correlation", 0.8)),
                noise_structure=str(noise.get("structure", "time-block")),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario document: {exc!r}") from exc

    def digest(self) -> str:
        """Stable hash of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _as_int(v) -> int:
    if isinstance(v, bool) or float(v) != int(v):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(v)


# ---------------------------------------------------------------------------
# Deterministic model objects
# ---------------------------------------------------------------------------

def steering_vector(azimuth: float, num_elements: int, spacing: float) -> np.ndarray:
    """ULA response ``exp(j 2 pi spacing n sin(azimuth))``, n = 0..N-1."""
    if num_elements < 1:
        raise ValueError("num_elements must be >= 1")
    phase = 2 * np.pi * spacing * np.arange(num_elements) * np.sin(azimuth)
    return np.exp(1j * phase)


def shift_matrix(l: int, L: int, P: int) -> np.ndarray:
    """L x P selector with ``J[i, j] = 1`` iff ``j = i + l``."""
    if L < 1 or P < L:
        raise ValueError(f"need 1 <= L <= P, got L={L}, P={P}")
    if l < 0 or l > P - L:
        raise ValueError(f"delay {l} does not fit a window of {P} samples for code length {L}")
    J = np.zeros((L, P))
    J[np.arange(L), np.arange(L) + l] = 1.0
    return J


def _tx(config: ScenarioConfig, theta: float) -> np.ndarray:
    g = config.geometry
    return steering_vector(theta, g.num_tx, g.tx_spacing)


def _rx(config: ScenarioConfig, theta: float) -> np.ndarray:
    g = config.geometry
    return steering_vector(theta, g.num_rx, g.rx_spacing)


def path_matrix(config: ScenarioConfig, k: int) -> np.ndarray:
    """Linear map from the stacked waveform to the stacked returns of path ``k``.

    ``k = 0`` is the direct path; ``k >= 1`` is the reciprocity-merged pair of
    single-bounce paths through scatterer ``k``.
    """
    M = len(config.scatterers)
    if not 0 <= k <= M:
        raise IndexError(f"path index {k} out of range 0..{M}")
    L, P = config.code_length, config.window
    th0 = config.target_azimuth
    if k == 0:
        J = shift_matrix(0, L, P)
        block = np.outer(_rx(config, th0), _tx(config, th0))
    else:
        path = config.scatterers[k - 1]
        J = shift_matrix(path.delay, L, P)
        thk = path.azimuth
        block = (np.outer(_rx(config, th0), _tx(config, thk))
                 + np.outer(_rx(config, thk), _tx(config, th0)))
    return np.kron(J.T, block)


@dataclass(frozen=True)
class NoiseCovariance:
    data: np.ndarray
    structure: str

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])


def noise_covariance(config: ScenarioConfig) -> NoiseCovariance:
    """Interference-plus-noise covariance: Toeplitz ``sigma^2 beta^|m-n|`` in fast time,
    independent across receive channels.

    ``time-block`` orders it as ``R~ kron I_NR`` (matching the vec ordering of
    the returns); ``channel-block`` is ``I_NR kron R~``.
    """
    P, NR = config.window, config.geometry.num_rx
    lag = np.abs(np.subtract.outer(np.arange(P), np.arange(P)))
    Rt = config.noise_power * config.noise_correlation ** lag
    if config.noise_structure == "time-block":
        R = np.kron(Rt, np.eye(NR))
    else:
        R = np.kron(np.eye(NR), Rt)
    return NoiseCovariance(R.astype(complex), config.noise_structure)


class SignalModel:
    """All deterministic objects of one scenario, built once and cached.

    Attributes
    ----------
    A : ndarray, shape (M+1, P*N_R, L*N_T)
        Path matrices.
    Rn, Rn_inv : ndarray
        Noise covariance and its inverse.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.A = np.stack([path_matrix(config, k) for k in range(config.num_paths)])
        self.noise = noise_covariance(config)
        self.Rn = self.noise.data
        chol = np.linalg.cholesky(self.Rn)
        inv_chol = np.linalg.inv(chol)
        self.Rn_inv = inv_chol.conj().T @ inv_chol
        self.Rn_inv = 0.5 * (self.Rn_inv + self.Rn_inv.conj().T)
        self.lambda_min = self.noise.lambda_min

    @property
    def num_paths(self) -> int:
        return self.A.shape[0]

    @property
    def waveform_length(self) -> int:
        return self.A.shape[2]

    @property
    def filter_length(self) -> int:
        return self.A.shape[1]

    def returns(self, s: np.ndarray) -> np.ndarray:
        """``Y(s) = [A_0 s, ..., A_M s]``, shape (P*N_R, M+1)."""
        s = np.asarray(s)
        if s.shape != (self.waveform_length,):
            raise ValueError(f"waveform must have length {self.waveform_length}")
        return np.einsum("kij,j->ik", self.A, s)

    @cached_property
    def whitened_cross(self) -> np.ndarray:
        """``C[i, j] = A_i^H R_n^{-1} A_j``; ``T(R_s)[i, j] = tr(C[i, j] R_s)``."""
        RA = np.einsum("pq,kqj->kpj", self.Rn_inv, self.A)
        return np.einsum("ipa,jpb->ijab", self.A.conj(), RA)


# ---------------------------------------------------------------------------
# Experiment scenarios
# ---------------------------------------------------------------------------

def reference_spherical_scenario(**overrides) -> ScenarioConfig:
    """Two scatterers at -10 and -30 degrees (delays 7 and 5), target at 30 degrees."""
    kw = dict(
        geometry=ArrayGeometry(4, 4, 1.0, 0.5),
        code_length=16,
        target_azimuth=math.radians(30.0),
        scatterers=(PathSpec(math.radians(-10.0), 7), PathSpec(math.radians(-30.0), 5)),
        noise_power=10.0,
        noise_correlation=0.8,
    )
    kw.update(overrides)
    return ScenarioConfig(**kw)


def reference_annular_scenario(**overrides) -> ScenarioConfig:
    """Two scatterers at -30 and -10 degrees (delays 3 and 7), target at 30 degrees."""
    kw = dict(
        geometry=ArrayGeometry(4, 4, 1.0, 0.5),
        code_length=16,
        target_azimuth=math.radians(30.0),
        scatterers=(PathSpec(math.radians(-30.0), 3), PathSpec(math.radians(-10.0), 7)),
        noise_power=10.0,
        noise_correlation=0.8,
    )
    kw.update(overrides)
    return ScenarioConfig(**kw)
