"""Ground-truth evaluation of a designed waveform/filter pair."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .results import to_db
from .rounding import trial_rng
from .scenario import ScenarioConfig, SignalModel, shift_matrix, steering_vector

__all__ = [
    "PatternGrid",
    "sinr",
    "antenna_pattern",
    "default_grid",
    "sample_spherical",
    "sample_annular",
]

SAMPLE_STREAM = 7


def _model(scenario) -> SignalModel:
    return scenario if isinstance(scenario, SignalModel) else SignalModel(scenario)


def sinr(w: np.ndarray, s: np.ndarray, u: np.ndarray, scenario) -> float:
    """Output SINR ``|w^H Y(s) u|^2 / (w^H R_n w)``."""
    model = _model(scenario)
    w = np.asarray(w, complex)
    u = np.asarray(u, complex)
    if w.shape != (model.filter_length,):
        raise ValueError(f"filter must have length {model.filter_length}")
    if u.shape != (model.num_paths,):
        raise ValueError(f"coefficient vector must have length {model.num_paths}")
    den = float(np.vdot(w, model.Rn @ w).real)
    if not np.any(w) or den <= 0:
        raise ValueError("filter must be nonzero")
    num = abs(np.vdot(w, model.returns(s) @ u)) ** 2
    return float(num / den)


@dataclass(frozen=True)
class PatternGrid:
    azimuths: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        if np.shape(self.azimuths) != np.shape(self.gains):
            raise ValueError("azimuths and gains must have equal lengths")

    @property
    def peak_azimuth(self) -> float:
        return float(self.azimuths[int(np.argmax(self.gains))])

    def rows(self):
        for az, g in zip(self.azimuths, self.gains):
            yield math.degrees(az), float(g), to_db(float(g))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["azimuth_deg", "gain_linear", "gain_db"])
            for deg, g, db in self.rows():
                out.writerow([repr(round(deg, 10)), repr(g), "-inf" if db == -math.inf else repr(db)])


def default_grid(step_deg: float = 0.25) -> np.ndarray:
    """Azimuths from -90 to 90 degrees inclusive at ``step_deg`` spacing (radians)."""
    n = int(round(180.0 / step_deg))
    return np.radians(np.linspace(-90.0, 90.0, n + 1))


def antenna_pattern(w: np.ndarray, s: np.ndarray, scenario, azimuth_grid=None) -> PatternGrid:
    """Transmit-receive pattern ``|w^H (J_0^T kron b(theta) a(theta)^T) s|``."""
    config = scenario.config if isinstance(scenario, SignalModel) else scenario
    grid = default_grid() if azimuth_grid is None else np.asarray(azimuth_grid, float)
    if np.any(np.abs(grid) > math.pi / 2 + 1e-12):
        raise ValueError("azimuths must lie in [-pi/2, pi/2]")
    geo = config.geometry
    L, P = config.code_length, config.window
    S = np.asarray(s, complex).reshape(L, geo.num_tx).T      # N_T x L
    W = np.asarray(w, complex).reshape(P, geo.num_rx).T      # N_R x P
    # w^H vec(b a^T S J0) = tr(W^H b a^T S J0) = a^T (S J0 W^H) b
    SJ = S @ shift_matrix(0, L, P)                           # N_T x P
    core = SJ @ W.conj().T                                   # N_T x N_R
    gains = np.empty(grid.size)
    for n, th in enumerate(grid):
        a = steering_vector(th, geo.num_tx, geo.tx_spacing)
        b = steering_vector(th, geo.num_rx, geo.rx_spacing)
        gains[n] = abs(a @ core @ b)
    return PatternGrid(grid, gains)


def sample_spherical(set, count: int, seed: int) -> list[np.ndarray]:
    """Uniform samples from the complex ball ``||u - u0|| <= r``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    u0, r = set.center, float(set.radius)
    dim = u0.size
    out = []
    for i in range(count):
        rng = trial_rng(seed, SAMPLE_STREAM, i)
        z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        rho = r * rng.random() ** (1.0 / (2 * dim))
        nz = np.linalg.norm(z)
        out.append(u0 + (rho / nz) * z if nz > 0 else u0.copy())
    return out


def sample_annular(set, count: int, seed: int) -> list[np.ndarray]:
    """Amplitudes uniform in ``[eta(k), xi(k)]``, phases uniform in ``[-pi, pi)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for i in range(count):
        rng = trial_rng(seed, SAMPLE_STREAM, i)
        amp = set.lower + (set.upper - set.lower) * rng.random(set.dim)
        amp = np.clip(amp, set.lower, set.upper)
        phase = rng.uniform(-math.pi, math.pi, set.dim)
        out.append(amp * np.exp(1j * phase))
    return out
