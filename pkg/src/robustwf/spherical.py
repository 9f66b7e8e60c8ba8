"""Worst-case design against a spherical uncertainty set ``||u - u0|| <= r``.

The receive filter is eliminated analytically (for fixed ``s`` and ``u``
the best filter is ``R_n^{-1} Y(s) u``), the inner minimization over the
ball is replaced by its Lagrange dual, and the resulting maximization over
the waveform covariance is relaxed to one semidefinite program.  A
unit-modulus waveform is recovered by Gaussian randomization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import conic
from .conic import ProgramBuilder, hermitian_components, hermitian_entry, imag_part, real_part
from .results import DesignResult, SolverReport
from .rounding import gaussian_draw, ordered_map, rank_one_factor, trial_rng, unit_modulus
from .scenario import ConfigError, ScenarioConfig, SignalModel

__all__ = [
    "SphericalSet",
    "DmsdrConfig",
    "InnerMinimum",
    "t_matrix",
    "t_matrix_trace",
    "inner_min_spherical",
    "spherical_dual",
    "assemble_p4",
    "P4Solution",
    "solve_p4",
    "design_spherical",
]


@dataclass(frozen=True)
class SphericalSet:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, complex).ravel()
        object.__setattr__(self, "center", c)
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ConfigError("radius must be a finite nonnegative number")

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, u: np.ndarray, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(u) - self.center)) <= self.radius * (1 + tol) + tol


@dataclass(frozen=True)
class DmsdrConfig:
    randomization_trials: int = 100
    dual_tolerance: float = 1e-10
    sdp_tolerance: float = conic.DEFAULT_TOLERANCE
    rank_one_ratio: float = 1e-6
    rng_seed: int = 0
    max_iterations: int = conic.DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.randomization_trials < 1:
            raise ConfigError("randomization_trials must be >= 1")
        if not (self.dual_tolerance > 0 and self.sdp_tolerance > 0):
            raise ConfigError("tolerances must be positive")
        if not 0 < self.rank_one_ratio < 1:
            raise ConfigError("rank_one_ratio must lie in (0, 1)")


def _model(scenario) -> SignalModel:
    return scenario if isinstance(scenario, SignalModel) else SignalModel(scenario)


def t_matrix(waveform: np.ndarray, scenario) -> np.ndarray:
    """``T(s) = Y(s)^H R_n^{-1} Y(s)``, the (M+1)x(M+1) matrix of the filter-optimal SINR."""
    model = _model(scenario)
    Y = model.returns(waveform)
    T = Y.conj().T @ model.Rn_inv @ Y
    return 0.5 * (T + T.conj().T)


def t_matrix_trace(R_s: np.ndarray, scenario) -> np.ndarray:
    """Same matrix as a linear function of a waveform covariance: ``T[i,j] = tr(A_i^H R_n^-1 A_j R_s)``."""
    model = _model(scenario)
    R_s = np.asarray(R_s, complex)
    n = model.waveform_length
    if R_s.shape != (n, n):
        raise ValueError(f"waveform covariance must be {n} x {n}")
    T = np.einsum("ijab,ba->ij", model.whitened_cross, R_s)
    return 0.5 * (T + T.conj().T)


class InnerMinimum(NamedTuple):
    value: float
    minimizer: np.ndarray
    multiplier: float


def spherical_dual(T: np.ndarray, center: np.ndarray, radius: float, mu: float) -> float:
    """Lagrange dual function ``-mu^2 u0^H (T + mu I)^{-1} u0 + mu (u0^H u0 - r^2)``."""
    u0 = np.asarray(center, complex)
    if mu == 0:
        return 0.0
    x = np.linalg.solve(T + mu * np.eye(T.shape[0]), u0)
    return float((-mu * mu * (u0.conj() @ x) + mu * (np.vdot(u0, u0) - radius ** 2)).real)


def inner_min_spherical(T: np.ndarray, set: SphericalSet, tol: float = 1e-10) -> InnerMinimum:
    """Minimize ``u^H T u`` over the ball through its scalar dual.

    ``T`` is eigendecomposed once; the stationarity condition of the dual
    becomes the secular equation ``||T (T + mu I)^{-1} u0|| = r``, solved by
    safeguarded Newton steps on ``1/r - 1/||.||`` inside a bracket whose
    upper end is grown geometrically.
    """
    T = 0.5 * (np.asarray(T, complex) + np.asarray(T, complex).conj().T)
    u0 = set.center
    r = float(set.radius)
    if T.shape != (u0.size, u0.size):
        raise ValueError("T and the uncertainty center have inconsistent sizes")
    norm0 = float(np.linalg.norm(u0))
    if r >= norm0:
        return InnerMinimum(0.0, np.zeros_like(u0), 0.0)
    if r == 0:
        return InnerMinimum(float(np.vdot(u0, T @ u0).real), u0.copy(), math.inf)

    lam, V = np.linalg.eigh(T)
    lam = np.clip(lam, 0.0, None)
    c = V.conj().T @ u0
    w = np.abs(c) ** 2
    top = float(lam[-1])
    null = lam <= 1e-13 * max(top, 1e-300)
    if top <= 0 or float(np.sum(w[~null])) <= r * r:
        # a point of null(T) lies inside the ball
        u = V[:, null] @ c[null]
        return InnerMinimum(0.0, u, 0.0)

    lam_r, w_r = lam[~null], w[~null]

    def dist(mu):
        return math.sqrt(float(np.sum(w_r * lam_r ** 2 / (lam_r + mu) ** 2)))

    lo, hi = 0.0, max(top, 1.0)
    while dist(hi) > r:
        lo, hi = hi, 2.0 * hi
    mu = 0.5 * (lo + hi)
    converged = False
    for _ in range(200):
        h = dist(mu)
        psi = 1.0 / r - 1.0 / h
        if psi > 0:
            lo = mu
        else:
            hi = mu
        dh = -float(np.sum(w_r * lam_r ** 2 / (lam_r + mu) ** 3)) / h
        dpsi = dh / (h * h)
        step = mu - psi / dpsi if dpsi != 0 else math.nan
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if abs(step - mu) <= tol * max(1.0, mu) or hi - lo <= tol * max(1.0, mu):
            mu = step
            converged = True
            break
        mu = step
    if not converged:
        mu = hi
    coef = mu * c / (lam + mu)
    u = V @ coef
    value = float(np.sum(lam * np.abs(coef) ** 2))
    return InnerMinimum(value, u, float(mu))


# ---------------------------------------------------------------------------
# Relaxed waveform program
# ---------------------------------------------------------------------------

def assemble_p4(scenario, set: SphericalSet) -> tuple[conic.ConicProgram, conic.Layout]:
    """Semidefinite relaxation over ``(R_s, mu, t)``::

        minimize t
        s.t. [[t + mu (u0^H u0 - r^2), mu u0^H], [mu u0, T(R_s) + mu I]] >= 0
             diag(R_s) = 1,  R_s >= 0,  mu >= 0

    ``-t*`` is the relaxation's value of the worst-case SINR.  The LMI is
    carried by a slack Hermitian variable ``S`` tied to it entrywise.
    """
    model = _model(scenario)
    n = model.waveform_length
    K = model.num_paths
    if set.dim != K:
        raise ValueError(f"uncertainty center has {set.dim} entries, scenario has {K} paths")
    u0 = set.center
    shift = float(np.vdot(u0, u0).real) - set.radius ** 2
    C = model.whitened_cross

    b = ProgramBuilder()
    Rs = b.hermitian("Rs", n)
    S = b.hermitian("S", K + 1)
    mu = b.nonneg("mu", 1)
    t = b.free("t", 1)

    for k in range(n):
        E = np.zeros((n, n))
        E[k, k] = 1.0
        b.add_equality({Rs: E}, 1.0)

    for i, j, part in hermitian_components(K + 1):
        terms = [(S, hermitian_entry(K + 1, i, j, part))]
        if i == 0 and j == 0:
            terms += [(t, [-1.0]), (mu, [-shift])]
        elif i == 0:
            v = np.conj(u0[j - 1])
            terms.append((mu, [-(v.real if part == "re" else v.imag)]))
        else:
            Cij = C[i - 1, j - 1]
            H = real_part(Cij) if part == "re" else imag_part(Cij)
            terms.append((Rs, -H))
            if i == j:
                terms.append((mu, [-1.0]))
        b.add_equality(terms, 0.0)

    b.set_objective({t: [1.0]})
    return b.build()


@dataclass(frozen=True)
class P4Solution:
    R_s: np.ndarray
    mu: float
    t: float
    dual_value: float
    report: SolverReport

    @property
    def sdr_bound(self) -> float:
        """Relaxation value of the worst-case SINR.

        The dual objective bounds ``t*`` from below, so of the two computed
        estimates of ``-t*`` the larger one is kept.
        """
        return -min(self.t, self.dual_value)


def solve_p4(scenario, set: SphericalSet, tolerance: float = conic.DEFAULT_TOLERANCE,
             max_iterations: int = conic.DEFAULT_MAX_ITERATIONS) -> P4Solution:
    program, layout = assemble_p4(scenario, set)
    sol = conic.require_optimal(conic.solve(program, tolerance, max_iterations), "P4")
    x = sol.primal
    return P4Solution(
        layout.value(x, "Rs"),
        float(layout.value(x, "mu")[0]),
        float(layout.value(x, "t")[0]),
        float(sol.dual_objective_value),
        SolverReport.from_solution("P4", sol),
    )


def design_spherical(scenario, set: SphericalSet, cfg: DmsdrConfig = DmsdrConfig()) -> DesignResult:
    """Relax, randomize, and synthesize the robust waveform/filter pair."""
    model = _model(scenario)
    p4 = solve_p4(model, set, cfg.sdp_tolerance, cfg.max_iterations)
    R = p4.R_s

    def evaluate(s):
        return inner_min_spherical(t_matrix(s, model), set, cfg.dual_tolerance)

    factor = rank_one_factor(R, cfg.rank_one_ratio)
    if factor is not None:
        candidates = [unit_modulus(factor)]
        rank_one = True
    else:
        L = np.linalg.cholesky(0.5 * (R + R.conj().T)
                               + 1e-12 * float(np.trace(R).real) / R.shape[0] * np.eye(R.shape[0]))
        candidates = [unit_modulus(gaussian_draw(R, trial_rng(cfg.rng_seed, 0, q), L))
                      for q in range(cfg.randomization_trials)]
        rank_one = False
    mins = ordered_map(evaluate, candidates)
    gammas = [m.value for m in mins]
    best = int(np.argmax(gammas))  # first maximum on ties
    s_star = candidates[best]
    u_star = mins[best].minimizer
    w_star = model.Rn_inv @ (model.returns(s_star) @ u_star)
    status = "ok"
    if max(gammas) <= 0:
        status = "degraded"
        # any filter is worst-case optimal here; use the nominal matched filter
        w_star = model.Rn_inv @ (model.returns(s_star) @ set.center)
    cfg_scn = model.config
    return DesignResult(
        algorithm="dmsdr",
        waveform=s_star,
        filter=w_star,
        worst_case_sinr=float(gammas[best]),
        sdr_bound=p4.sdr_bound,
        worst_u=u_star,
        gammas=gammas,
        best_trial=best,
        rank_one=rank_one,
        status=status,
        solver_reports=[p4.report],
        scenario_hash=cfg_scn.digest(),
        rng_seed=cfg.rng_seed,
    )
