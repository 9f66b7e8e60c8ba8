"""Worst-case design against an annular set ``eta(k) <= |u(k)| <= xi(k)``.

The non-convex inner minimization over ``u`` is lifted to ``R_u = u u^H``
and relaxed.  Its dual turns the max-min problem into a single maximization
that is concave separately in the filter covariance ``W`` and in the
waveform covariance ``R_s``; the two blocks are optimized alternately, every
step being one SDP.  Waveform and filter are then recovered by Gaussian
randomization.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import conic
from .conic import ProgramBuilder, hermitian_components, hermitian_entry, imag_part, real_part
from .results import DesignResult, IterationTrace, SolverReport
from .rounding import gaussian_draw, ordered_map, rank_one_factor, trial_rng, unit_modulus
from .scenario import ConfigError, SignalModel

__all__ = [
    "AnnularSet",
    "DmdsdrConfig",
    "MonotonicityError",
    "AnnularInnerMinimum",
    "inner_min_annular_sdr",
    "assemble_inner_dual",
    "inner_dual_value",
    "inner_min_annular_bruteforce",
    "assemble_pw_prime",
    "assemble_p_rs",
    "LoopResult",
    "initial_code",
    "dmdsdr_loop",
    "upper_bound",
    "synthesize_annular",
    "design_annular",
]

WAVEFORM_STREAM = 0
FILTER_STREAM = 1
INIT_STREAM = 2


@dataclass(frozen=True)
class AnnularSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float).ravel()
        hi = np.asarray(self.upper, float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ConfigError("lower and upper amplitude bounds must have the same nonzero length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("amplitude bounds must be finite")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ConfigError("amplitude bounds must satisfy 0 <= lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def theta(cls, a: float, b: float, c: float, d: float) -> "AnnularSet":
        """Lower bounds ``[a, b, c]``, upper bounds ``[a+d, b+d, c+d]``."""
        lo = np.array([a, b, c], float)
        return cls(lo, lo + d)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def f(self) -> np.ndarray:
        return self.lower ** 2

    @property
    def g(self) -> np.ndarray:
        return self.upper ** 2

    @property
    def pinned(self) -> np.ndarray:
        """Coordinates whose modulus is fixed (lower == upper)."""
        return self.lower == self.upper

    def contains(self, u: np.ndarray, tol: float = 1e-12) -> bool:
        a = np.abs(np.asarray(u))
        return bool(np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol))


@dataclass(frozen=True)
class DmdsdrConfig:
    relative_gap: float = 1e-3
    max_outer_iterations: int = 50
    randomization_trials: int = 100
    sdp_tolerance: float = conic.DEFAULT_TOLERANCE
    rng_seed: int = 0
    rank_one_ratio: float = 1e-6
    max_iterations: int = conic.DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if not self.relative_gap > 0:
            raise ConfigError("relative_gap must be positive")
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be >= 1")
        if self.randomization_trials < 1:
            raise ConfigError("randomization_trials must be >= 1")
        if not self.sdp_tolerance > 0:
            raise ConfigError("sdp_tolerance must be positive")
        if not 0 < self.rank_one_ratio < 1:
            raise ConfigError("rank_one_ratio must lie in (0, 1)")

    @property
    def monotonicity_slack(self) -> float:
        return 10.0 * self.sdp_tolerance


class MonotonicityError(RuntimeError):
    """The alternating loop produced a decreasing step beyond the solver slack."""

    def __init__(self, iteration: int, before: float, after: float, what: str):
        self.iteration, self.before, self.after = iteration, before, after
        super().__init__(f"iteration {iteration}: {what} decreased from {before!r} to {after!r}")


def _model(scenario) -> SignalModel:
    return scenario if isinstance(scenario, SignalModel) else SignalModel(scenario)


def _check_dim(set: AnnularSet, model: SignalModel) -> None:
    if set.dim != model.num_paths:
        raise ValueError(f"annular set has {set.dim} entries, scenario has {model.num_paths} paths")


def _solve(program, name, tolerance, max_iterations):
    return conic.require_optimal(conic.solve(program, tolerance, max_iterations), name)


# ---------------------------------------------------------------------------
# Inner minimization
# ---------------------------------------------------------------------------

class AnnularInnerMinimum(NamedTuple):
    value: float
    R_u: np.ndarray
    report: SolverReport


def _assemble_inner_primal(M_obj: np.ndarray, set: AnnularSet):
    K = set.dim
    b = ProgramBuilder()
    Ru = b.hermitian("Ru", K)
    free = ~set.pinned
    nfree = int(np.sum(free))
    if nfree:
        lo = b.nonneg("lo", nfree)
        hi = b.nonneg("hi", nfree)
    slot = 0
    for k in range(K):
        E = np.zeros((K, K))
        E[k, k] = 1.0
        if set.pinned[k]:
            b.add_equality({Ru: E}, set.f[k])
            continue
        sel = np.zeros(nfree)
        sel[slot] = 1.0
        b.add_equality([(Ru, E), (lo, -sel)], set.f[k])
        b.add_equality([(Ru, E), (hi, sel)], set.g[k])
        slot += 1
    b.set_objective({Ru: M_obj})
    return b.build()


def inner_min_annular_sdr(M_obj: np.ndarray, set: AnnularSet,
                          tolerance: float = conic.DEFAULT_TOLERANCE,
                          max_iterations: int = conic.DEFAULT_MAX_ITERATIONS) -> AnnularInnerMinimum:
    """``min tr(M R_u)`` over ``R_u >= 0`` with ``f <= diag(R_u) <= g``.

    The value is the smaller of the primal and dual objectives, i.e. the
    estimate on the lower-bound side of the certified gap.
    """
    M_obj = np.atleast_2d(np.asarray(M_obj, complex))
    if M_obj.shape != (set.dim, set.dim):
        raise ValueError("objective matrix and annular set have inconsistent sizes")
    M_obj = 0.5 * (M_obj + M_obj.conj().T)
    program, layout = _assemble_inner_primal(M_obj, set)
    sol = _solve(program, "annular inner SDR", tolerance, max_iterations)
    value = min(sol.objective_value, sol.dual_objective_value)
    return AnnularInnerMinimum(value, layout.value(sol.primal, "Ru"),
                               SolverReport.from_solution("annular inner SDR", sol))


def _add_dual_rows(b: ProgramBuilder, set: AnnularSet, G_terms, Z: str, mult):
    """Rows of ``G - Z + sum_k (h_k - mu_k) E_k = 0``, one per real component.

    ``G_terms(i, j, part)`` returns the builder terms of that component of G.
    ``mult`` maps a coordinate k to its list of (variable, coefficient) pairs
    standing for ``h_k - mu_k``.
    """
    K = set.dim
    for i, j, part in hermitian_components(K):
        terms = list(G_terms(i, j, part))
        terms.append((Z, -hermitian_entry(K, i, j, part)))
        if i == j:
            terms.extend(mult(i))
        b.add_equality(terms, 0.0)


def _dual_multipliers(b: ProgramBuilder, set: AnnularSet):
    """Declare the diagonal multipliers; returns (objective terms, per-k row terms).

    For a coordinate with ``f_k < g_k`` the usual pair ``mu_k, h_k >= 0``
    is used.  For a pinned coordinate only ``h_k - mu_k`` is identified, so
    it is carried by a single free variable ``d_k = mu_k - h_k`` with
    objective ``d_k f_k``.
    """
    free = np.flatnonzero(~set.pinned)
    pinned = np.flatnonzero(set.pinned)
    obj = []
    rows = {}
    if free.size:
        mu = b.nonneg("mu", free.size)
        h = b.nonneg("h", free.size)
        obj += [(mu, set.f[free]), (h, -set.g[free])]
        for slot, k in enumerate(free):
            e = np.zeros(free.size)
            e[slot] = 1.0
            rows[int(k)] = [(h, e), (mu, -e)]
    if pinned.size:
        d = b.free("d", pinned.size)
        obj.append((d, set.f[pinned]))
        for slot, k in enumerate(pinned):
            e = np.zeros(pinned.size)
            e[slot] = 1.0
            rows[int(k)] = [(d, -e)]
    return obj, lambda k: rows[k]


def assemble_inner_dual(M_obj: np.ndarray, set: AnnularSet):
    """Dual of the relaxed inner problem: ``max mu^T f - h^T g`` s.t.
    ``M - Z + sum_k (h_k - mu_k) E_k = 0``, ``Z >= 0``, ``mu, h >= 0``
    (posed as minimization of the negated objective)."""
    M_obj = np.atleast_2d(np.asarray(M_obj, complex))
    M_obj = 0.5 * (M_obj + M_obj.conj().T)
    K = set.dim
    b = ProgramBuilder()
    Z = b.hermitian("Z", K)
    obj, mult = _dual_multipliers(b, set)
    for i, j, part in hermitian_components(K):
        # the constant M moves to the right-hand side
        rhs = -conic.component(M_obj, i, j, part)
        terms = [(Z, -hermitian_entry(K, i, j, part))]
        if i == j:
            terms.extend(mult(i))
        b.add_equality(terms, rhs)
    b.set_objective([(name, -np.asarray(c)) for name, c in obj])
    return b.build()


def inner_dual_value(M_obj: np.ndarray, set: AnnularSet,
                     tolerance: float = conic.DEFAULT_TOLERANCE) -> float:
    program, _ = assemble_inner_dual(M_obj, set)
    sol = _solve(program, "annular inner dual", tolerance, conic.DEFAULT_MAX_ITERATIONS)
    return -sol.objective_value


def inner_min_annular_bruteforce(M_obj: np.ndarray, set: AnnularSet,
                                 phase_points: int = 64, amp_points: int = 3) -> float:
    """Grid minimum of ``u^H M u`` over the annular set.

    Amplitudes run over ``amp_points`` evenly spaced values in each
    ``[eta(k), xi(k)]`` and phases over ``phase_points`` values; the first
    phase is fixed to zero since ``u^H M u`` ignores a common phase.  The
    grid minimum over-estimates the true minimum.
    """
    M_obj = np.atleast_2d(np.asarray(M_obj, complex))
    K = set.dim
    if K > 4:
        raise ValueError("brute-force grid is limited to at most 4 coordinates")
    if M_obj.shape != (K, K):
        raise ValueError("objective matrix and annular set have inconsistent sizes")
    if phase_points < 1 or amp_points < 1:
        raise ValueError("grid sizes must be positive")
    M_obj = 0.5 * (M_obj + M_obj.conj().T)
    phases = np.exp(2j * np.pi * np.arange(phase_points) / phase_points)
    amps = [np.linspace(lo, hi, amp_points) if hi > lo else np.array([lo])
            for lo, hi in zip(set.lower, set.upper)]
    # candidate values per coordinate (first coordinate: real amplitudes only)
    axes = [amps[0].astype(complex)] + [np.outer(a, phases).ravel() for a in amps[1:]]
    best = math.inf
    head = np.stack(np.meshgrid(*axes[:-1], indexing="ij"), -1).reshape(-1, K - 1) if K > 1 else None
    last = axes[-1]
    if K == 1:
        u = last[:, None]
        return float(np.min(np.einsum("ni,ij,nj->n", u.conj(), M_obj, u).real))
    chunk = max(1, 2_000_000 // max(1, last.size))
    for start in range(0, head.shape[0], chunk):
        hpart = head[start:start + chunk]
        n_h, n_l = hpart.shape[0], last.size
        U = np.empty((n_h, n_l, K), complex)
        U[:, :, :-1] = hpart[:, None, :]
        U[:, :, -1] = last[None, :]
        vals = np.einsum("abi,ij,abj->ab", U.conj(), M_obj, U).real
        best = min(best, float(vals.min()))
    return best


# ---------------------------------------------------------------------------
# Alternating steps
# ---------------------------------------------------------------------------

def assemble_pw_prime(R_s: np.ndarray, scenario, set: AnnularSet):
    """W-step with fixed waveform covariance, normalized by ``tr(R_n W) = 1``::

        maximize mu^T f - h^T g
        s.t. G(W) - Z + sum_k (h_k - mu_k) E_k = 0,  G(i,j) = tr(A_i^H W A_j R_s)
             tr(R_n W) = 1,  W >= 0,  Z >= 0,  mu, h >= 0
    """
    model = _model(scenario)
    _check_dim(set, model)
    R_s = np.asarray(R_s, complex)
    A = model.A
    K, n = set.dim, model.filter_length
    # tr(A_i^H W A_j R_s) = tr(W B_ij) with B_ij = A_j R_s A_i^H
    AR = np.einsum("kpa,ab->kpb", A, R_s)
    B = np.einsum("jpb,iqb->ijpq", AR, A.conj())

    b = ProgramBuilder()
    W = b.hermitian("W", n)
    Z = b.hermitian("Z", K)
    obj, mult = _dual_multipliers(b, set)

    def G_terms(i, j, part):
        H = real_part(B[i, j]) if part == "re" else imag_part(B[i, j])
        return [(W, H)]

    _add_dual_rows(b, set, G_terms, Z, mult)
    b.add_equality({W: model.Rn}, 1.0)
    b.set_objective([(name, -np.asarray(c)) for name, c in obj])
    return b.build()


def assemble_p_rs(W: np.ndarray, scenario, set: AnnularSet):
    """R_s-step with fixed filter covariance::

        maximize (mu^T f - h^T g) / tr(R_n W)
        s.t. G~(R_s) - Z + sum_k (h_k - mu_k) E_k = 0,  G~(i,j) = tr(A_i^H W A_j R_s)
             diag(R_s) = 1,  R_s >= 0,  Z >= 0,  mu, h >= 0
    """
    model = _model(scenario)
    _check_dim(set, model)
    W = np.asarray(W, complex)
    A = model.A
    K, n = set.dim, model.waveform_length
    scale = float(np.trace(model.Rn @ W).real)
    if not scale > 0:
        raise ValueError("filter covariance must satisfy tr(R_n W) > 0")
    WA = np.einsum("pq,kqb->kpb", W, A)
    D = np.einsum("ipa,jpb->ijab", A.conj(), WA)

    b = ProgramBuilder()
    Rs = b.hermitian("Rs", n)
    Z = b.hermitian("Z", K)
    obj, mult = _dual_multipliers(b, set)

    def G_terms(i, j, part):
        H = real_part(D[i, j]) if part == "re" else imag_part(D[i, j])
        return [(Rs, H)]

    _add_dual_rows(b, set, G_terms, Z, mult)
    for k in range(n):
        E = np.zeros((n, n))
        E[k, k] = 1.0
        b.add_equality({Rs: E}, 1.0)
    b.set_objective([(name, -np.asarray(c) / scale) for name, c in obj])
    return b.build()


def upper_bound(scenario, set: AnnularSet) -> float:
    """``N_T L tr(A A^H) / lambda_min(R_n)`` with ``A = sum_k xi(k) A_k``."""
    model = _model(scenario)
    _check_dim(set, model)
    A = np.einsum("k,kij->ij", set.upper, model.A)
    cfg = model.config
    return float(cfg.geometry.num_tx * cfg.code_length * np.sum(np.abs(A) ** 2) / model.lambda_min)


@dataclass
class LoopResult:
    R_s: np.ndarray
    W: np.ndarray
    trace: IterationTrace
    reports: list
    converged: bool
    initial_waveform: np.ndarray


def initial_code(length: int, seed: int) -> np.ndarray:
    """Pseudo-random phase code (uniform phases) from ``seed``."""
    rng = trial_rng(seed, INIT_STREAM, 0)
    return unit_modulus(np.exp(2j * np.pi * rng.random(length)))


def dmdsdr_loop(scenario, set: AnnularSet, cfg: DmdsdrConfig = DmdsdrConfig(),
                initial_waveform: np.ndarray | None = None) -> LoopResult:
    """Alternate W-steps and R_s-steps until the relative gain drops below the gap."""
    model = _model(scenario)
    _check_dim(set, model)
    s0 = initial_code(model.waveform_length, cfg.rng_seed) if initial_waveform is None \
        else np.asarray(initial_waveform, complex)
    R_s = np.outer(s0, s0.conj())
    trace = IterationTrace(upper_bound=upper_bound(model, set))
    reports = []
    slack = cfg.monotonicity_slack
    W = None
    converged = False
    p_rs = math.nan
    for m in range(cfg.max_outer_iterations):
        name = f"W-step (iteration {m})"
        prog, layout = assemble_pw_prime(R_s, model, set)
        sol = _solve(prog, name, cfg.sdp_tolerance, cfg.max_iterations)
        reports.append(SolverReport.from_solution(name, sol))
        p_w = -sol.objective_value
        W = layout.value(sol.primal, "W")
        if not math.isnan(p_rs) and p_w < p_rs - slack * (1 + abs(p_rs)):
            raise MonotonicityError(m, p_rs, p_w, "W-step value")
        trace.p_rs.append(p_rs)
        trace.p_w.append(p_w)

        name = f"Rs-step (iteration {m + 1})"
        prog, layout = assemble_p_rs(W, model, set)
        sol = _solve(prog, name, cfg.sdp_tolerance, cfg.max_iterations)
        reports.append(SolverReport.from_solution(name, sol))
        p_next = -sol.objective_value
        if p_next < p_w - slack * (1 + abs(p_w)):
            raise MonotonicityError(m + 1, p_w, p_next, "Rs-step value")
        R_s = layout.value(sol.primal, "Rs")
        p_rs = p_next
        gain = p_next - p_w
        if (gain / p_w if p_w > 0 else gain) <= cfg.relative_gap:
            converged = True
            break
    # the last R_s-step value closes the trace
    trace.p_rs.append(p_rs)
    return LoopResult(R_s, W, trace, reports, converged, s0)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def _sdr_value(M_obj, set, cfg):
    return inner_min_annular_sdr(M_obj, set, cfg.sdp_tolerance, cfg.max_iterations)


def waveform_objective(s: np.ndarray, W: np.ndarray, model: SignalModel) -> np.ndarray:
    Y = model.returns(s)
    return Y.conj().T @ W @ Y / float(np.trace(W @ model.Rn).real)


def filter_objective(w: np.ndarray, s: np.ndarray, model: SignalModel) -> np.ndarray:
    v = model.returns(s).conj().T @ w
    return np.outer(v, v.conj()) / float(np.vdot(w, model.Rn @ w).real)


def synthesize_annular(R_s: np.ndarray, W: np.ndarray, scenario, set: AnnularSet,
                       cfg: DmdsdrConfig = DmdsdrConfig(), trace: IterationTrace | None = None,
                       reports: list | None = None) -> DesignResult:
    """Pick the waveform, then the filter, each by randomization from its covariance."""
    model = _model(scenario)
    reports = list(reports or [])
    Q = cfg.randomization_trials

    fac_s = rank_one_factor(R_s, cfg.rank_one_ratio)
    if fac_s is not None:
        waveforms = [unit_modulus(fac_s)]
    else:
        L = np.linalg.cholesky(0.5 * (R_s + R_s.conj().T)
                               + 1e-12 * float(np.trace(R_s).real) / R_s.shape[0] * np.eye(R_s.shape[0]))
        waveforms = [unit_modulus(gaussian_draw(R_s, trial_rng(cfg.rng_seed, WAVEFORM_STREAM, q), L))
                     for q in range(Q)]
    s_mins = ordered_map(lambda s: _sdr_value(waveform_objective(s, W, model), set, cfg), waveforms)
    gammas = [m.value for m in s_mins]
    best_s = int(np.argmax(gammas))
    s_star = waveforms[best_s]
    reports += [m.report for m in s_mins]

    fac_w = rank_one_factor(W, cfg.rank_one_ratio)
    if fac_w is not None:
        filters = [fac_w]
    else:
        Lw = np.linalg.cholesky(0.5 * (W + W.conj().T)
                                + 1e-12 * float(np.trace(W).real) / W.shape[0] * np.eye(W.shape[0]))
        filters = [gaussian_draw(W, trial_rng(cfg.rng_seed, FILTER_STREAM, q), Lw) for q in range(Q)]
    w_mins = ordered_map(lambda w: _sdr_value(filter_objective(w, s_star, model), set, cfg), filters)
    fgammas = [m.value for m in w_mins]
    best_w = int(np.argmax(fgammas))
    reports += [m.report for m in w_mins]

    w_star = filters[best_w]
    w_star = w_star / np.linalg.norm(w_star)
    value = float(fgammas[best_w])
    sdr = trace.interleaved()[-1] if trace is not None and len(trace) else math.nan
    return DesignResult(
        algorithm="dmdsdr",
        waveform=s_star,
        filter=w_star,
        worst_case_sinr=value,
        sdr_bound=sdr,
        worst_u=None,
        gammas=gammas,
        filter_gammas=fgammas,
        best_trial=best_s if fac_s is None else 0,
        best_filter_trial=best_w if fac_w is None else 0,
        rank_one=fac_s is not None,
        status="ok" if value > 0 else "degraded",
        solver_reports=reports,
        trace=trace,
        scenario_hash=model.config.digest(),
        rng_seed=cfg.rng_seed,
    )


def design_annular(scenario, set: AnnularSet, cfg: DmdsdrConfig = DmdsdrConfig()) -> DesignResult:
    model = _model(scenario)
    loop = dmdsdr_loop(model, set, cfg)
    result = synthesize_annular(loop.R_s, loop.W, model, set, cfg, loop.trace, loop.reports)
    if not loop.converged:
        result.status = "degraded"
    return result
