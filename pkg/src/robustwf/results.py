"""Design results and their JSON form."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["SolverReport", "IterationTrace", "DesignResult", "to_db", "interleave", "deinterleave"]


def to_db(x: float) -> float:
    """10 log10, with -inf for nonpositive input."""
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def interleave(z: np.ndarray) -> list[float]:
    z = np.asarray(z, complex).ravel()
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out.tolist()


def deinterleave(v) -> np.ndarray:
    v = np.asarray(v, float)
    if v.ndim != 1 or v.size % 2:
        raise ValueError("interleaved complex array must have even length")
    return v[0::2] + 1j * v[1::2]


@dataclass(frozen=True)
class SolverReport:
    """Certification record of one conic solve."""

    subproblem: str
    status: str
    primal_infeasibility: float
    dual_infeasibility: float
    duality_gap: float
    iterations: int
    objective: float

    @classmethod
    def from_solution(cls, name: str, sol) -> "SolverReport":
        r = sol.residuals
        return cls(name, sol.status.value, r.primal_infeasibility, r.dual_infeasibility,
                   r.duality_gap, sol.iterations, sol.objective_value)

    @property
    def max_residual(self) -> float:
        return max(self.primal_infeasibility, self.dual_infeasibility, self.duality_gap)


@dataclass
class IterationTrace:
    """Lower-bound values of the alternating loop.

    ``p_rs[m]`` is the R_s-step value obtained with the filter covariance of
    iteration ``m - 1`` (undefined, stored as NaN, for ``m = 0`` where the
    waveform is the initial code); ``p_w[m]`` is the W-step value obtained
    with the waveform covariance of iteration ``m``.
    """

    p_rs: list[float] = field(default_factory=list)
    p_w: list[float] = field(default_factory=list)
    upper_bound: float = math.inf

    def __len__(self) -> int:
        return len(self.p_w)

    def interleaved(self) -> list[float]:
        """p_Rs(0), p_W(0), p_Rs(1), p_W(1), ... with the undefined p_Rs(0) dropped."""
        out = []
        for a, b in zip(self.p_rs, self.p_w):
            if not math.isnan(a):
                out.append(a)
            out.append(b)
        if len(self.p_rs) > len(self.p_w):
            out.append(self.p_rs[-1])
        return out

    def rows(self) -> list[tuple[int, float, float, float]]:
        n = max(len(self.p_rs), len(self.p_w))
        rows = []
        for m in range(n):
            a = self.p_rs[m] if m < len(self.p_rs) else math.nan
            b = self.p_w[m] if m < len(self.p_w) else math.nan
            rows.append((m, a, b, self.upper_bound))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("iter,p_rs,p_w,upper_bound\n")
            for m, a, b, ub in self.rows():
                fh.write(f"{m},{_fmt(a)},{_fmt(b)},{_fmt(ub)}\n")

    def to_dict(self) -> dict:
        return {"p_rs": [_num(v) for v in self.p_rs], "p_w": [_num(v) for v in self.p_w],
                "upper_bound": _num(self.upper_bound)}

    @classmethod
    def from_dict(cls, doc) -> "IterationTrace":
        return cls([_denum(v) for v in doc["p_rs"]], [_denum(v) for v in doc["p_w"]],
                   _denum(doc["upper_bound"]))


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def _denum(v):
    return math.nan if v is None else float(v)


@dataclass
class DesignResult:
    """Synthesized waveform/filter pair.

    ``worst_case_sinr`` is linear scale.  For the spherical design it is the
    exact worst case of the returned waveform; for the annular design it is
    the semidefinite-relaxation lower bound of the worst case.  ``sdr_bound``
    is the relaxation value the synthesized pair is compared against.
    """

    algorithm: str
    waveform: np.ndarray
    filter: np.ndarray
    worst_case_sinr: float
    sdr_bound: float
    worst_u: Optional[np.ndarray]
    gammas: list[float]
    filter_gammas: list[float] = field(default_factory=list)
    best_trial: int = -1
    best_filter_trial: int = -1
    rank_one: bool = False
    status: str = "ok"
    solver_reports: list[SolverReport] = field(default_factory=list)
    trace: Optional[IterationTrace] = None
    scenario_hash: str = ""
    rng_seed: int = 0

    @property
    def degraded(self) -> bool:
        return self.status != "ok"

    @property
    def worst_case_sinr_db(self) -> float:
        return to_db(self.worst_case_sinr)

    def to_dict(self) -> dict:
        doc = {
            "algorithm": self.algorithm,
            "scenario_hash": self.scenario_hash,
            "rng_seed": int(self.rng_seed),
            "status": self.status,
            "degraded": self.degraded,
            "worst_case_sinr": float(self.worst_case_sinr),
            "worst_case_sinr_db": _num(self.worst_case_sinr_db) if self.worst_case_sinr > 0 else None,
            "sdr_bound": float(self.sdr_bound),
            "rank_one": bool(self.rank_one),
            "best_trial": int(self.best_trial),
            "best_filter_trial": int(self.best_filter_trial),
            "waveform": interleave(self.waveform),
            "filter": interleave(self.filter),
            "worst_u": None if self.worst_u is None else interleave(self.worst_u),
            "gammas": [float(g) for g in self.gammas],
            "filter_gammas": [float(g) for g in self.filter_gammas],
            "solver_reports": [r.__dict__.copy() for r in self.solver_reports],
            "trace": None if self.trace is None else self.trace.to_dict(),
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DesignResult":
        return cls(
            algorithm=doc["algorithm"],
            waveform=deinterleave(doc["waveform"]),
            filter=deinterleave(doc["filter"]),
            worst_case_sinr=float(doc["worst_case_sinr"]),
            sdr_bound=float(doc["sdr_bound"]),
            worst_u=None if doc.get("worst_u") is None else deinterleave(doc["worst_u"]),
            gammas=list(doc.get("gammas", [])),
            filter_gammas=list(doc.get("filter_gammas", [])),
            best_trial=int(doc.get("best_trial", -1)),
            best_filter_trial=int(doc.get("best_filter_trial", -1)),
            rank_one=bool(doc.get("rank_one", False)),
            status=doc.get("status", "ok"),
            solver_reports=[SolverReport(**r) for r in doc.get("solver_reports", [])],
            trace=None if doc.get("trace") is None else IterationTrace.from_dict(doc["trace"]),
            scenario_hash=doc.get("scenario_hash", ""),
            rng_seed=int(doc.get("rng_seed", 0)),
        )
