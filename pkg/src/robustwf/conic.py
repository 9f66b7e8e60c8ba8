"""Small dense conic programs: representation, modeling helpers and solver.

Every design subproblem in this package is a linear program over a product
of positive semidefinite (PSD) blocks, a nonnegative orthant and free
variables::

    minimize    c^T x + offset
    subject to  A x = b,   x in K

PSD blocks are real symmetric and scalarized with ``svec`` (lower triangle,
off-diagonal entries scaled by sqrt(2), so that ``<A, X> = svec(A) @
svec(X)``).  Complex Hermitian matrix variables enter through the real
symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``;
:class:`ProgramBuilder` hides that bookkeeping.

The solver is an infeasible primal-dual path-following method with the
HKM search direction and Mehrotra predictor-corrector steps, using dense
factorizations throughout.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "PSD",
    "NonNegative",
    "Free",
    "ConeSpec",
    "ConicProgram",
    "ConicProgramError",
    "SolverFailure",
    "require_optimal",
    "Status",
    "Residuals",
    "ConicSolution",
    "ProgramBuilder",
    "hermitian_embed",
    "hermitian_deembed",
    "svec",
    "smat",
    "solve",
    "DEFAULT_TOLERANCE",
    "DEFAULT_MAX_ITERATIONS",
]

DEFAULT_TOLERANCE = 1e-7
DEFAULT_MAX_ITERATIONS = 200


class ConicProgramError(ValueError):
    """Raised for malformed programs, before any iteration happens."""


class SolverFailure(RuntimeError):
    """A subproblem did not solve to certified optimality."""

    def __init__(self, subproblem: str, solution: "ConicSolution"):
        self.subproblem = subproblem
        self.solution = solution
        r = solution.residuals
        super().__init__(
            f"{subproblem}: status {solution.status.value} after {solution.iterations} iterations "
            f"(pinf={r.primal_infeasibility:.2e}, dinf={r.dual_infeasibility:.2e}, "
            f"gap={r.duality_gap:.2e}; {solution.message})"
        )


def require_optimal(solution: "ConicSolution", subproblem: str) -> "ConicSolution":
    if solution.status is not Status.OPTIMAL:
        raise SolverFailure(subproblem, solution)
    return solution


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------

def hermitian_embed(H: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``.

    The embedding preserves positive semidefiniteness, doubles every
    eigenvalue's multiplicity, doubles traces and doubles the real inner
    product ``Re tr(A^H B)``.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.conj().T), initial=0.0) > atol * scale:
        raise ValueError("matrix is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def hermitian_deembed(X: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hermitian_embed` for a (possibly unstructured) 2n x 2n matrix.

    The two copies of the real and imaginary parts are averaged, and the
    result is symmetrized, so small solver asymmetries cancel.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0] // 2
    re = 0.5 * (X[:n, :n] + X[n:, n:])
    im = 0.5 * (X[n:, :n] - X[:n, n:])
    H = re + 1j * im
    return 0.5 * (H + H.conj().T)


def _tril(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(n)


def svec(X: np.ndarray) -> np.ndarray:
    """Scaled lower-triangle vectorization of a symmetric matrix."""
    X = np.asarray(X, dtype=float)
    i, j = _tril(X.shape[0])
    v = X[i, j].copy()
    v[i != j] *= math.sqrt(2.0)
    return v


def smat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != v.size:
        raise ValueError(f"vector of length {v.size} is not an svec")
    i, j = _tril(n)
    w = v.copy()
    w[i != j] /= math.sqrt(2.0)
    X = np.zeros((n, n))
    X[i, j] = w
    X[j, i] = w
    return X


# ---------------------------------------------------------------------------
# Program representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PSD:
    dim: int

    @property
    def size(self) -> int:
        return self.dim * (self.dim + 1) // 2


@dataclass(frozen=True)
class NonNegative:
    count: int

    @property
    def size(self) -> int:
        return self.count


@dataclass(frozen=True)
class Free:
    count: int

    @property
    def size(self) -> int:
        return self.count


Block = Union[PSD, NonNegative, Free]


@dataclass(frozen=True)
class ConeSpec:
    """Ordered product of cone blocks; the scalarized variable is their concatenation."""

    blocks: tuple[Block, ...]

    def __post_init__(self):
        for blk in self.blocks:
            n = blk.dim if isinstance(blk, PSD) else blk.count
            if not isinstance(blk, (PSD, NonNegative, Free)):
                raise ConicProgramError(f"unknown cone block {blk!r}")
            if int(n) != n or n < 1:
                raise ConicProgramError(f"cone block {blk!r} must have dimension >= 1")

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    def offsets(self) -> list[int]:
        out, k = [], 0
        for b in self.blocks:
            out.append(k)
            k += b.size
        return out

    def to_list(self) -> list[dict]:
        out = []
        for b in self.blocks:
            if isinstance(b, PSD):
                out.append({"kind": "psd", "dim": b.dim})
            elif isinstance(b, NonNegative):
                out.append({"kind": "nonneg", "count": b.count})
            else:
                out.append({"kind": "free", "count": b.count})
        return out


@dataclass(frozen=True)
class ConicProgram:
    """``minimize c^T x + offset  s.t.  A x = b,  x in cone`` (all real data)."""

    objective: np.ndarray
    equalities: sp.csr_matrix
    rhs: np.ndarray
    cone: ConeSpec
    objective_offset: float = 0.0

    def validate(self) -> None:
        c = np.asarray(self.objective)
        A = self.equalities
        b = np.asarray(self.rhs)
        n = self.cone.size
        if c.ndim != 1 or c.size != n:
            raise ConicProgramError(f"objective has length {c.size}, cone size is {n}")
        if A.shape != (b.size, n):
            raise ConicProgramError(
                f"equality matrix has shape {A.shape}, expected ({b.size}, {n})"
            )
        if b.size == 0:
            raise ConicProgramError("program has no equality constraints")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b))
                and np.all(np.isfinite(A.data)) and math.isfinite(self.objective_offset)):
            raise ConicProgramError("program data must be finite")

    @property
    def num_variables(self) -> int:
        return self.cone.size

    @property
    def num_equalities(self) -> int:
        return int(np.asarray(self.rhs).size)

    def to_json(self, path) -> None:
        """Debug dump (triplet-form equalities) for cross-checking with other solvers."""
        A = self.equalities.tocoo()
        doc = {
            "objective": np.asarray(self.objective).tolist(),
            "objective_offset": float(self.objective_offset),
            "equalities": {
                "shape": list(A.shape),
                "rows": A.row.tolist(),
                "cols": A.col.tolist(),
                "vals": A.data.tolist(),
            },
            "rhs": np.asarray(self.rhs).tolist(),
            "cone": self.cone.to_list(),
            "svec": "lower triangle, row-major, off-diagonals scaled by sqrt(2)",
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "ConicProgram":
        with open(path) as fh:
            doc = json.load(fh)
        eq = doc["equalities"]
        A = sp.coo_matrix((eq["vals"], (eq["rows"], eq["cols"])), shape=tuple(eq["shape"])).tocsr()
        blocks = []
        for item in doc["cone"]:
            if item["kind"] == "psd":
                blocks.append(PSD(item["dim"]))
            elif item["kind"] == "nonneg":
                blocks.append(NonNegative(item["count"]))
            else:
                blocks.append(Free(item["count"]))
        return cls(np.array(doc["objective"], float), A, np.array(doc["rhs"], float),
                   ConeSpec(tuple(blocks)), float(doc.get("objective_offset", 0.0)))


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class Residuals:
    primal_infeasibility: float
    dual_infeasibility: float
    duality_gap: float

    def max(self) -> float:
        return max(self.primal_infeasibility, self.dual_infeasibility, self.duality_gap)


@dataclass(frozen=True)
class ConicSolution:
    primal: np.ndarray
    dual: np.ndarray
    slack: np.ndarray
    objective_value: float
    dual_objective_value: float
    status: Status
    residuals: Residuals
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def kkt_residuals(program: ConicProgram, x, y, s) -> Residuals:
    """Relative primal/dual infeasibility and duality gap of a candidate triple.

    ``s`` is the full-length dual slack; entries on free blocks are ignored
    (their dual slack is zero by definition).
    """
    A = program.equalities
    b = np.asarray(program.rhs, float)
    c = np.asarray(program.objective, float)
    s = np.array(s, float)
    for off, blk in zip(program.cone.offsets(), program.cone.blocks):
        if isinstance(blk, Free):
            s[off:off + blk.size] = 0.0
    rp = b - A @ x
    rd = c - A.T @ y - s
    pobj = float(c @ x)
    dobj = float(b @ y)
    return Residuals(
        float(np.linalg.norm(rp) / (1.0 + np.linalg.norm(b))),
        float(np.linalg.norm(rd) / (1.0 + np.linalg.norm(c))),
        float(abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))),
    )


# ---------------------------------------------------------------------------
# Modeling layer
# ---------------------------------------------------------------------------

@dataclass
class _Var:
    name: str
    kind: str           # "herm", "sym", "nonneg", "free"
    n: int              # matrix order or vector length
    block: int          # index into the block list


@dataclass
class Layout:
    """Maps the scalarized solution vector back to named variables."""

    cone: ConeSpec
    variables: dict[str, _Var] = field(default_factory=dict)

    def value(self, x: np.ndarray, name: str) -> np.ndarray:
        var = self.variables[name]
        off = self.cone.offsets()[var.block]
        blk = self.cone.blocks[var.block]
        chunk = np.asarray(x[off:off + blk.size], float)
        if var.kind == "herm":
            return hermitian_deembed(smat(chunk, 2 * var.n))
        if var.kind == "sym":
            S = smat(chunk, var.n)
            return 0.5 * (S + S.T)
        return chunk.copy()


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Coefficients are given in natural units: for a Hermitian variable ``X``
    a Hermitian matrix ``H`` stands for the real functional ``tr(H X)``; for
    a symmetric variable a symmetric matrix ``C`` stands for ``<C, X>``; for
    vector variables a vector stands for the dot product.
    """

    def __init__(self):
        self._blocks: list[Block] = []
        self._vars: dict[str, _Var] = {}
        self._rows: list[dict[str, np.ndarray]] = []
        self._rhs: list[float] = []
        self._objective: dict[str, np.ndarray] = {}
        self._offset = 0.0

    def _add(self, name, kind, n, block):
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        self._vars[name] = _Var(name, kind, n, len(self._blocks))
        self._blocks.append(block)
        return name

    def hermitian(self, name: str, n: int) -> str:
        return self._add(name, "herm", n, PSD(2 * n))

    def symmetric(self, name: str, n: int) -> str:
        return self._add(name, "sym", n, PSD(n))

    def nonneg(self, name: str, count: int) -> str:
        return self._add(name, "nonneg", count, NonNegative(count))

    def free(self, name: str, count: int) -> str:
        return self._add(name, "free", count, Free(count))

    def _scalarize(self, name: str, coef) -> np.ndarray:
        var = self._vars[name]
        coef = np.asarray(coef)
        if var.kind == "herm":
            # tr(H X) = <embed(H), embed(X)> / 2
            return svec(hermitian_embed(coef, atol=1e-9)) * 0.5
        if var.kind == "sym":
            return svec(0.5 * (coef + coef.T))
        coef = np.asarray(coef, float).reshape(-1)
        if coef.size != var.n:
            raise ValueError(f"coefficient for {name!r} has length {coef.size}, expected {var.n}")
        return coef

    def _terms(self, terms) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, coef in terms.items() if isinstance(terms, dict) else terms:
            v = self._scalarize(name, coef)
            out[name] = out[name] + v if name in out else v
        return out

    def add_equality(self, terms, rhs: float) -> None:
        """Add ``sum_k <coef_k, var_k> = rhs``; ``terms`` is a dict or list of pairs."""
        self._rows.append(self._terms(terms))
        self._rhs.append(float(rhs))

    def set_objective(self, terms, offset: float = 0.0) -> None:
        """Set the minimization objective."""
        self._objective = self._terms(terms)
        self._offset = float(offset)

    def build(self) -> tuple[ConicProgram, Layout]:
        cone = ConeSpec(tuple(self._blocks))
        offsets = cone.offsets()
        n = cone.size

        def place(terms: dict[str, np.ndarray]):
            idx, val = [], []
            for name, v in terms.items():
                off = offsets[self._vars[name].block]
                nz = np.flatnonzero(v)
                idx.append(off + nz)
                val.append(v[nz])
            if not idx:
                return np.zeros(0, int), np.zeros(0)
            return np.concatenate(idx), np.concatenate(val)

        rows, cols, vals = [], [], []
        for r, terms in enumerate(self._rows):
            ci, cv = place(terms)
            rows.append(np.full(ci.size, r))
            cols.append(ci)
            vals.append(cv)
        A = sp.csr_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, int),
              np.concatenate(cols) if cols else np.zeros(0, int))),
            shape=(len(self._rows), n),
        )
        c = np.zeros(n)
        ci, cv = place(self._objective)
        np.add.at(c, ci, cv)
        program = ConicProgram(c, A, np.array(self._rhs), cone, self._offset)
        program.validate()
        return program, Layout(cone, dict(self._vars))


def hermitian_entry(n: int, i: int, j: int, part: str) -> np.ndarray:
    """Hermitian ``H`` with ``tr(H X) = Re X[i, j]`` (part="re") or ``Im X[i, j]`` (part="im")."""
    E = np.zeros((n, n), complex)
    E[j, i] = 1.0  # tr(E X) = X[i, j]
    return real_part(E) if part == "re" else imag_part(E)


def real_part(C: np.ndarray) -> np.ndarray:
    """Hermitian ``H`` with ``tr(H X) = Re tr(C X)`` for every Hermitian ``X``."""
    C = np.asarray(C, complex)
    return 0.5 * (C + C.conj().T)


def imag_part(C: np.ndarray) -> np.ndarray:
    """Hermitian ``H`` with ``tr(H X) = Im tr(C X)`` for every Hermitian ``X``."""
    C = np.asarray(C, complex)
    return 0.5j * (C.conj().T - C)


def hermitian_components(n: int) -> list[tuple[int, int, str]]:
    """Real scalar components of an n x n Hermitian matrix (n^2 of them)."""
    out = []
    for i in range(n):
        for j in range(i, n):
            out.append((i, j, "re"))
            if i != j:
                out.append((i, j, "im"))
    return out


def component(M: np.ndarray, i: int, j: int, part: str) -> float:
    return float(M[i, j].real if part == "re" else M[i, j].imag)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class _PsdBlock:
    __slots__ = ("n", "sl", "A", "C", "sparse")

    def __init__(self, n, sl, A, C):
        self.n = n
        self.sl = sl
        self.A = A              # (m, n, n) dense symmetric
        self.C = C              # (n, n)
        self.sparse = []        # per row: None or (p, q, vals)
        for Ai in A:
            nz = np.nonzero(Ai)
            if nz[0].size <= 2 * n:
                self.sparse.append((nz[0], nz[1], Ai[nz]))
            else:
                self.sparse.append(None)


def _step_psd(X, dX, L=None) -> float:
    """Largest alpha with X + alpha dX PSD (inf if unrestricted)."""
    if L is None:
        L = np.linalg.cholesky(X)
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _positive_definite(mats) -> bool:
    try:
        for M in mats:
            np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def _step_lin(x, dx) -> float:
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve(program: ConicProgram, tolerance: float = DEFAULT_TOLERANCE,
          max_iterations: int = DEFAULT_MAX_ITERATIONS, verbose: bool = False) -> ConicSolution:
    """Solve a conic program to relative KKT residuals below ``tolerance``.

    Returns the certified solution; on ``MaxIterations`` (or numerical
    breakdown) the best iterate seen is returned with that status.
    """
    program.validate()
    if not tolerance > 0:
        raise ConicProgramError("tolerance must be positive")
    return _Solver(program, tolerance, max_iterations, verbose).run()


class _Solver:
    def __init__(self, program: ConicProgram, tol: float, max_iter: int, verbose: bool = False):
        self.program = program
        self.verbose = verbose
        self.tol = tol
        self.max_iter = max_iter
        A = program.equalities.tocsr().astype(float)
        b = np.asarray(program.rhs, float)
        c = np.asarray(program.objective, float)
        m = b.size

        row_norm = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
        row_norm[row_norm == 0] = 1.0
        self.D = 1.0 / row_norm
        As = sp.diags(self.D) @ A
        bs = self.D * b
        self.sb = max(1.0, float(np.linalg.norm(bs)))
        self.sc = max(1.0, float(np.linalg.norm(c)))
        bs = bs / self.sb
        cs = c / self.sc
        self.m = m
        self.b = bs
        self.As = As.tocsc()

        self.psd: list[_PsdBlock] = []
        lin_idx, free_idx = [], []
        for off, blk in zip(program.cone.offsets(), program.cone.blocks):
            sl = slice(off, off + blk.size)
            if isinstance(blk, PSD):
                n = blk.dim
                sub = self.As[:, sl].toarray()
                mats = np.empty((m, n, n))
                for r in range(m):
                    mats[r] = smat(sub[r], n)
                self.psd.append(_PsdBlock(n, sl, mats, smat(cs[sl], n)))
            elif isinstance(blk, NonNegative):
                lin_idx.append(np.arange(off, off + blk.size))
            else:
                free_idx.append(np.arange(off, off + blk.size))
        self.lin = np.concatenate(lin_idx) if lin_idx else np.zeros(0, int)
        self.free = np.concatenate(free_idx) if free_idx else np.zeros(0, int)
        self.Al = self.As[:, self.lin].toarray()
        self.Af = self.As[:, self.free].toarray()
        self.cl = cs[self.lin]
        self.cf = cs[self.free]
        self.nu = sum(p.n for p in self.psd) + self.lin.size

    # -- assembly helpers ---------------------------------------------------
    def _Aop(self, Xs, xl, xf):
        out = self.Al @ xl + self.Af @ xf
        for blk, X in zip(self.psd, Xs):
            out += np.tensordot(blk.A, X, axes=([1, 2], [0, 1]))
        return out

    def _ATy(self, y, blk):
        return np.tensordot(y, blk.A, axes=(0, 0))

    def _pack(self, Xs, xl, xf):
        x = np.zeros(self.program.cone.size)
        for blk, X in zip(self.psd, Xs):
            x[blk.sl] = svec(X)
        x[self.lin] = xl
        x[self.free] = xf
        return x

    def _unscaled(self, Xs, xl, xf, y, Ss, sl):
        x = self._pack(Xs, xl, xf) * self.sb
        s = self._pack(Ss, sl, np.zeros(self.free.size)) * self.sc
        yy = self.D * y * self.sc
        return x, yy, s

    def _initial_point(self):
        Xs, Ss = [], []
        b_abs = 1.0 + np.abs(self.b)
        for blk in self.psd:
            n = blk.n
            normA = np.sqrt(np.sum(blk.A ** 2, axis=(1, 2)))
            xi = max(10.0, math.sqrt(n), n * float(np.max(b_abs / (1.0 + normA))))
            zeta = max(10.0, math.sqrt(n), float(np.max(normA)), float(np.linalg.norm(blk.C)))
            Xs.append(xi * np.eye(n))
            Ss.append(zeta * np.eye(n))
        nl = self.lin.size
        if nl:
            normA = np.sqrt(np.sum(self.Al ** 2, axis=0))
            xi = max(10.0, math.sqrt(nl), float(np.max(b_abs)) / (1.0 + float(np.max(normA))))
            zeta = max(10.0, math.sqrt(nl), float(np.max(normA)), float(np.linalg.norm(self.cl)))
            xl = np.full(nl, xi)
            sl = np.full(nl, zeta)
        else:
            xl = np.zeros(0)
            sl = np.zeros(0)
        xf = np.zeros(self.free.size)
        y = np.zeros(self.m)
        return Xs, xl, xf, y, Ss, sl

    # -- main loop -------------------------------------------------------------
    def run(self) -> ConicSolution:
        program = self.program
        Xs, xl, xf, y, Ss, sl = self._initial_point()
        best = None
        status = Status.MAX_ITERATIONS
        message = "iteration limit reached"
        nf = self.free.size
        m = self.m
        it = 0
        for it in range(self.max_iter + 1):
            x, yy, s = self._unscaled(Xs, xl, xf, y, Ss, sl)
            res = kkt_residuals(program, x, yy, s)
            if self.verbose:
                print(f"{it:3d} pinf={res.primal_infeasibility:.2e} dinf={res.dual_infeasibility:.2e} "
                      f"gap={res.duality_gap:.2e} obj={float(program.objective @ x):.9e}")
            if best is None or res.max() < best[0].max():
                best = (res, x, yy, s, it)
            if res.max() <= self.tol:
                status, message = Status.OPTIMAL, "converged"
                best = (res, x, yy, s, it)
                break
            cert = self._certificate(Xs, xl, xf, y, Ss, sl)
            if cert is not None:
                status, message = cert
                best = (res, x, yy, s, it)
                break
            if it == self.max_iter:
                break

            # residuals of the scaled problem
            rp = self.b - self._Aop(Xs, xl, xf)
            Rd = [blk.C - self._ATy(y, blk) - S for blk, S in zip(self.psd, Ss)]
            rdl = self.cl - self.Al.T @ y - sl
            rdf = self.cf - self.Af.T @ y
            mu = (sum(float(np.sum(X * S)) for X, S in zip(Xs, Ss)) + float(xl @ sl)) / max(self.nu, 1)

            try:
                Lx = [np.linalg.cholesky(X) for X in Xs]
                Ls = [np.linalg.cholesky(S) for S in Ss]
            except np.linalg.LinAlgError:
                message = "lost positive definiteness"
                break
            Sinv = [sla.cho_solve((L, True), np.eye(L.shape[0])) for L in Ls]

            Mmat = np.zeros((m, m))
            for blk, X, Si in zip(self.psd, Xs, Sinv):
                n = blk.n
                B = np.empty((m, n, n))
                for j in range(m):
                    sj = blk.sparse[j]
                    if sj is None:
                        B[j] = X @ blk.A[j] @ Si
                    else:
                        p, q, v = sj
                        B[j] = X[:, p] @ (v[:, None] * Si[q, :])
                Mmat += blk.A.reshape(m, -1) @ B.reshape(m, -1).T
            if xl.size:
                Mmat += (self.Al * (xl / sl)) @ self.Al.T
            Mmat = 0.5 * (Mmat + Mmat.T)
            K = np.zeros((m + nf, m + nf))
            K[:m, :m] = Mmat
            K[:m, m:] = self.Af
            K[m:, :m] = self.Af.T
            try:
                lu = sla.lu_factor(K, check_finite=False)
            except (ValueError, np.linalg.LinAlgError):
                message = "singular Newton system"
                break

            def direction(target, corr_psd, corr_lin):
                rhs = rp.copy()
                Hs = []
                for k, (blk, X, Si, R) in enumerate(zip(self.psd, Xs, Sinv, Rd)):
                    n = blk.n
                    T = target * np.eye(n)
                    if corr_psd is not None:
                        T = T - corr_psd[k]
                    H = T @ Si - X
                    Hs.append(H)
                    G = H - X @ R @ Si
                    rhs -= np.tensordot(blk.A, G, axes=([1, 2], [0, 1]))
                if xl.size:
                    tl = target - (corr_lin if corr_lin is not None else 0.0)
                    hl = tl / sl - xl
                    rhs -= self.Al @ (hl - xl * rdl / sl)
                else:
                    hl = np.zeros(0)
                sol = sla.lu_solve(lu, np.concatenate([rhs, rdf]), check_finite=False)
                for refine in range(3):
                    dy = sol[:m]
                    dxf = sol[m:]
                    dSs, dXs = [], []
                    for blk, X, Si, R, H in zip(self.psd, Xs, Sinv, Rd, Hs):
                        dS = R - self._ATy(dy, blk)
                        dX = H - X @ dS @ Si
                        dSs.append(0.5 * (dS + dS.T))
                        dXs.append(0.5 * (dX + dX.T))
                    if xl.size:
                        dsl = rdl - self.Al.T @ dy
                        dxl = hl - xl * dsl / sl
                    else:
                        dsl = dxl = np.zeros(0)
                    # iterative refinement against the exact linearized equations
                    e_p = rp - self._Aop(dXs, dxl, dxf)
                    e_f = rdf - self.Af.T @ dy
                    if refine == 2 or np.linalg.norm(e_p) + np.linalg.norm(e_f) <= 1e-14 * (
                            1.0 + np.linalg.norm(rp) + np.linalg.norm(rdf)):
                        break
                    sol = sol + sla.lu_solve(lu, np.concatenate([e_p, e_f]), check_finite=False)
                return dXs, dxl, dxf, dy, dSs, dsl

            def max_steps(dXs, dxl, dSs, dsl):
                ap = min([_step_psd(X, dX, L) for X, dX, L in zip(Xs, dXs, Lx)]
                         + [_step_lin(xl, dxl)] + [math.inf])
                ad = min([_step_psd(S, dS, L) for S, dS, L in zip(Ss, dSs, Ls)]
                         + [_step_lin(sl, dsl)] + [math.inf])
                return ap, ad

            try:
                pred = direction(0.0, None, None)
                ap, ad = max_steps(pred[0], pred[1], pred[4], pred[5])
                ap_a, ad_a = min(1.0, ap), min(1.0, ad)
                mu_aff = (sum(float(np.sum((X + ap_a * dX) * (S + ad_a * dS)))
                              for X, dX, S, dS in zip(Xs, pred[0], Ss, pred[4]))
                          + float((xl + ap_a * pred[1]) @ (sl + ad_a * pred[5]))) / max(self.nu, 1)
                sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
                corr_psd = [dX @ dS for dX, dS in zip(pred[0], pred[4])]
                corr_lin = pred[1] * pred[5]
                dXs, dxl, dxf, dy, dSs, dsl = direction(sigma * mu, corr_psd, corr_lin)
                ap, ad = max_steps(dXs, dxl, dSs, dsl)
            except np.linalg.LinAlgError:
                message = "numerical breakdown in step computation"
                break
            tau = min(0.995, 0.9 + 0.09 * min(ap_a, ad_a))
            ap = min(1.0, tau * ap)
            ad = min(1.0, tau * ad)

            # shorten steps that rounding pushed out of the cone interior
            for _ in range(30):
                Xn = [0.5 * (M + M.T) for M in (X + ap * dX for X, dX in zip(Xs, dXs))]
                if _positive_definite(Xn) and np.all(xl + ap * dxl > 0):
                    break
                ap *= 0.8
            for _ in range(30):
                Sn = [0.5 * (M + M.T) for M in (S + ad * dS for S, dS in zip(Ss, dSs))]
                if _positive_definite(Sn) and np.all(sl + ad * dsl > 0):
                    break
                ad *= 0.8

            Xs = Xn
            xl = xl + ap * dxl
            xf = xf + ap * dxf
            y = y + ad * dy
            Ss = Sn
            sl = sl + ad * dsl

        res, x, yy, s, it_best = best
        if status is not Status.OPTIMAL and res.max() <= self.tol:
            status, message = Status.OPTIMAL, "converged"
        c = np.asarray(program.objective, float)
        return ConicSolution(
            primal=x,
            dual=yy,
            slack=s,
            objective_value=float(c @ x) + program.objective_offset,
            dual_objective_value=float(np.asarray(program.rhs) @ yy) + program.objective_offset,
            status=status,
            residuals=res,
            iterations=it,
            message=message,
        )

    def _certificate(self, Xs, xl, xf, y, Ss, sl):
        """Farkas-style checks on the normalized iterates."""
        by = float(self.b @ y)
        if by > 0:
            r = [self._ATy(y, blk) / by + S / by for blk, S in zip(self.psd, Ss)]
            rl = (self.Al.T @ y + sl) / by
            rf = self.Af.T @ y / by
            nrm = math.sqrt(sum(float(np.sum(R * R)) for R in r) + float(rl @ rl) + float(rf @ rf))
            if nrm <= self.tol:
                return Status.INFEASIBLE, f"Farkas certificate found, residual {nrm:.2e}"
        cs = -(sum(float(np.sum(blk.C * X)) for blk, X in zip(self.psd, Xs))
               + float(self.cl @ xl) + float(self.cf @ xf))
        if cs > 0:
            ray = self._Aop(Xs, xl, xf) / cs
            nrm = float(np.linalg.norm(ray))
            if nrm <= self.tol:
                return Status.UNBOUNDED, f"improving ray found, residual {nrm:.2e}"
        return None
