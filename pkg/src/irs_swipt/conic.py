"""Standard-form convex conic programs and the single solve() backend.

A :class:`ConicProblem` is a linear objective over a flat real variable
vector ``x`` together with an affine map ``s = b - A x`` whose segments are
constrained to an ordered list of cones drawn from {zero, nonnegative,
second-order, PSD (svec-packed), exponential}.  A name registry maps every
model symbol to its index range in ``x``.

Complex Hermitian PSD variables are handled exclusively through the real
embedding  ``X -> [[Re X, -Im X], [Im X, Re X]]``:  a d-dimensional
Hermitian variable occupies an svec slice of length d(2d+1) whose matrix is
constrained to the real-symmetric PSD cone.  Traces double under the
embedding, and the decode map halves them back.

The backend is Clarabel's interior-point method.  Its svec convention
(column-major upper triangle, off-diagonals scaled by sqrt(2)) is adopted
as the packing convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import clarabel

__all__ = [
    "Aff",
    "ProblemBuilder",
    "ConicProblem",
    "ConicSolution",
    "HermitianEmbedding",
    "embed_hermitian_psd",
    "solve",
]

_LN2 = float(np.log(2.0))


# ---------------------------------------------------------------------------
# svec packing (Clarabel convention) and the complex-Hermitian real embedding
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _svec_index_maps(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rows, cols, scale) of the packed upper triangle of an n x n matrix."""
    rows, cols, scale = [], [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
            scale.append(1.0 if i == j else np.sqrt(2.0))
    return np.array(rows), np.array(cols), np.array(scale)


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


def svec(m: np.ndarray) -> np.ndarray:
    """Pack a real symmetric matrix so that svec(A) . svec(B) = tr(AB)."""
    n = m.shape[0]
    rows, cols, scale = _svec_index_maps(n)
    return np.asarray(m)[rows, cols] * scale


def smat(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    n = int(round((np.sqrt(8 * len(s) + 1) - 1) / 2))
    rows, cols, scale = _svec_index_maps(n)
    m = np.zeros((n, n))
    vals = np.asarray(s) / scale
    m[rows, cols] = vals
    m[cols, rows] = vals
    return m


def real_embedding(x: np.ndarray) -> np.ndarray:
    """Real-symmetric embedding of a complex Hermitian matrix."""
    re, im = np.real(x), np.imag(x)
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class HermitianEmbedding:
    """PSD block descriptor plus encode/decode maps for one Hermitian dim."""

    dim: int

    @property
    def embedded_dim(self) -> int:
        return 2 * self.dim

    @property
    def block_len(self) -> int:
        return svec_len(2 * self.dim)

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Hermitian d x d  ->  svec of the embedded 2d x 2d matrix."""
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.dim, self.dim):
            raise ValueError(f"expected shape {(self.dim, self.dim)}, got {x.shape}")
        return svec(real_embedding(x))

    def decode(self, s: np.ndarray) -> np.ndarray:
        """svec slice -> Hermitian d x d (block-averaging the embedding)."""
        m = smat(np.asarray(s, dtype=float))
        d = self.dim
        a, b = m[:d, :d], m[:d, d:]
        bt, c = m[d:, :d], m[d:, d:]
        return 0.5 * (a + c) + 0.5j * (bt - b)

    def trace_functional(self, c: np.ndarray) -> np.ndarray:
        """Coefficients t with  t . x_block = tr(c X)  for Hermitian c."""
        return 0.5 * self.encode(c)


def embed_hermitian_psd(dim: int) -> HermitianEmbedding:
    """Descriptor + encode/decode maps for a Hermitian PSD variable."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return HermitianEmbedding(dim)


# ---------------------------------------------------------------------------
# affine expressions
# ---------------------------------------------------------------------------

_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0, dtype=np.float64)


class Aff:
    """Sparse affine expression  sum(coef * x[idx]) + const."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx=None, coef=None, const: float = 0.0):
        self.idx = _EMPTY_I if idx is None else np.asarray(idx, dtype=np.int64)
        self.coef = _EMPTY_F if coef is None else np.asarray(coef, dtype=np.float64)
        self.const = float(const)

    @staticmethod
    def constant(c: float) -> "Aff":
        return Aff(const=c)

    @staticmethod
    def total(parts: list["Aff"]) -> "Aff":
        if not parts:
            return Aff()
        return Aff(
            np.concatenate([p.idx for p in parts]),
            np.concatenate([p.coef for p in parts]),
            sum(p.const for p in parts),
        )

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.idx, self.coef, self.const + other)
        return Aff.total([self, other])

    __radd__ = __add__

    def __neg__(self):
        return Aff(self.idx, -self.coef, -self.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.idx, self.coef, self.const - other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c: float):
        return Aff(self.idx, self.coef * float(c), self.const * float(c))

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return float(x[self.idx] @ self.coef + self.const)


# ---------------------------------------------------------------------------
# variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarVec:
    """A registered slice of the variable vector."""

    name: str
    start: int
    size: int

    def __getitem__(self, i: int) -> Aff:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Aff([self.start + i], [1.0])

    def __len__(self) -> int:
        return self.size

    def sum(self) -> Aff:
        return Aff(np.arange(self.start, self.start + self.size), np.ones(self.size))


@dataclass(frozen=True)
class HermVar:
    """A Hermitian PSD matrix variable stored as an embedded svec slice."""

    name: str
    start: int
    emb: HermitianEmbedding

    @property
    def size(self) -> int:
        return self.emb.block_len

    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)

    def trace_with(self, c: np.ndarray) -> Aff:
        """Affine expression for tr(c X), c Hermitian."""
        return Aff(self.indices(), self.emb.trace_functional(c))

    def trace(self) -> Aff:
        return self.trace_with(np.eye(self.emb.dim, dtype=complex))


# ---------------------------------------------------------------------------
# problem container and builder
# ---------------------------------------------------------------------------


@dataclass
class ConicProblem:
    n: int
    obj_coef: np.ndarray          # maximize obj_coef . x + obj_const
    obj_const: float
    a_mat: sp.csc_matrix          # s = b - A x
    b_vec: np.ndarray
    cones: list                   # clarabel cone objects, in row order
    registry: dict                # name -> VarVec | HermVar
    cone_summary: list = field(default_factory=list)


@dataclass
class ConicSolution:
    status: str                   # optimal | infeasible | unbounded | max-iter | numerical-failure
    objective: float
    values: dict
    x: np.ndarray | None
    residuals: dict
    iterations: int
    raw_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    @property
    def usable(self) -> bool:
        """Optimal, or stalled at the backend's reduced tolerances."""
        return self.status == "optimal" or (
            self.raw_status == "AlmostSolved" and self.x is not None
        )


class _RowBucket:
    __slots__ = ("rows", "cols", "vals", "rhs")

    def __init__(self):
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []

    def add(self, aff: Aff) -> None:
        r = len(self.rhs)
        self.rows.append(np.full(len(aff.idx), r, dtype=np.int64))
        self.cols.append(aff.idx)
        self.vals.append(-aff.coef)      # s = b - A x  with  s = aff(x)
        self.rhs.append(aff.const)

    def __len__(self) -> int:
        return len(self.rhs)


class ProblemBuilder:
    """Incremental assembly of a :class:`ConicProblem` (maximization)."""

    def __init__(self):
        self._n = 0
        self.registry: dict = {}
        self._obj_parts: list[Aff] = []
        self._obj_const = 0.0
        self._eq = _RowBucket()
        self._nonneg = _RowBucket()
        self._soc: list[_RowBucket] = []
        self._psd: list[tuple[int, _RowBucket]] = []   # (embedded matrix dim, rows)
        self._exp: list[_RowBucket] = []

    # -- variables ---------------------------------------------------------

    def _register(self, obj) -> None:
        if obj.name in self.registry:
            raise ValueError(f"duplicate symbol {obj.name!r}")
        self.registry[obj.name] = obj

    def free(self, name: str, size: int = 1) -> VarVec:
        v = VarVec(name, self._n, size)
        self._n += size
        self._register(v)
        return v

    def nonneg(self, name: str, size: int = 1) -> VarVec:
        v = self.free(name, size)
        for i in range(size):
            self.add_ge0(v[i])
        return v

    def herm_psd(self, name: str, dim: int) -> HermVar:
        emb = embed_hermitian_psd(dim)
        h = HermVar(name, self._n, emb)
        self._n += emb.block_len
        self._register(h)
        bucket = _RowBucket()
        for i in h.indices():
            bucket.add(Aff([i], [1.0]))
        self._psd.append((emb.embedded_dim, bucket))
        return h

    # -- objective and constraints ------------------------------------------

    def maximize(self, aff: Aff) -> None:
        self._obj_parts.append(aff)

    def add_eq(self, aff: Aff) -> None:
        """aff == 0."""
        self._eq.add(aff)

    def add_ge0(self, aff: Aff) -> None:
        """aff >= 0."""
        self._nonneg.add(aff)

    def add_le(self, lhs: Aff, rhs) -> None:
        """lhs <= rhs (rhs affine or scalar)."""
        rhs = Aff.constant(rhs) if isinstance(rhs, (int, float)) else rhs
        self.add_ge0(rhs - lhs)

    def add_soc(self, entries: list[Aff]) -> None:
        """(e0, e1, ..., em) in the second-order cone: e0 >= ||(e1..em)||."""
        bucket = _RowBucket()
        for e in entries:
            bucket.add(e)
        self._soc.append(bucket)

    def add_expcone(self, x: Aff, y: Aff, z: Aff) -> None:
        """(x, y, z) in the exponential cone: y > 0, y*exp(x/y) <= z (closure)."""
        bucket = _RowBucket()
        bucket.add(x)
        bucket.add(y)
        bucket.add(z)
        self._exp.append(bucket)

    def perspective_log_hypograph(self, u: Aff, t: Aff, z: Aff) -> None:
        """Constrain z <= t * log2(u / t)  (closure at t = 0: u >= 0, z <= 0)."""
        self.add_expcone(z * _LN2, t, u)

    def add_psd_expr(self, terms: list[tuple[float, HermVar]],
                     scalars: list[tuple[np.ndarray, Aff]] | None = None,
                     const: np.ndarray | None = None, dim: int | None = None) -> None:
        """Constrain  sum(c * X_herm) + sum(C_mat * aff) + const  to be PSD.

        All summands are Hermitian of the same dimension; the constraint is
        emitted in the embedded svec space.
        """
        if dim is None:
            dim = terms[0][1].emb.dim if terms else const.shape[0]
        emb = embed_hermitian_psd(dim)
        m = emb.block_len
        affs = [Aff() for _ in range(m)]
        if const is not None:
            enc = emb.encode(const)
            for i in range(m):
                affs[i] = affs[i] + enc[i]
        for coef, hv in terms or []:
            if hv.emb.dim != dim:
                raise ValueError("dimension mismatch in PSD expression")
            idx = hv.indices()
            for i in range(m):
                affs[i] = affs[i] + Aff([idx[i]], [coef])
        for cmat, a in scalars or []:
            enc = emb.encode(cmat)
            for i in range(m):
                if enc[i] != 0.0:
                    affs[i] = affs[i] + a * enc[i]
        bucket = _RowBucket()
        for a in affs:
            bucket.add(a)
        self._psd.append((emb.embedded_dim, bucket))

    def add_quad_le_affine(self, ys: list[Aff], t: Aff) -> None:
        """sum(y_i^2) <= t  via the second-order cone."""
        self.add_soc([(t + 1.0) * 0.5, (t - 1.0) * 0.5] + list(ys))

    # -- assembly ------------------------------------------------------------

    def build(self) -> ConicProblem:
        obj = Aff.total(self._obj_parts)
        c = np.zeros(self._n)
        np.add.at(c, obj.idx, obj.coef)

        buckets: list[tuple[object, _RowBucket]] = []
        summary = []
        if len(self._eq):
            buckets.append((clarabel.ZeroConeT(len(self._eq)), self._eq))
            summary.append(("zero", len(self._eq)))
        if len(self._nonneg):
            buckets.append((clarabel.NonnegativeConeT(len(self._nonneg)), self._nonneg))
            summary.append(("nonneg", len(self._nonneg)))
        for bkt in self._soc:
            buckets.append((clarabel.SecondOrderConeT(len(bkt)), bkt))
            summary.append(("soc", len(bkt)))
        for dim, bkt in self._psd:
            assert len(bkt) == svec_len(dim)
            buckets.append((clarabel.PSDTriangleConeT(dim), bkt))
            summary.append(("psd", len(bkt)))
        for bkt in self._exp:
            buckets.append((clarabel.ExponentialConeT(), bkt))
            summary.append(("exp", 3))

        rows, cols, vals, rhs = [], [], [], []
        cones = []
        offset = 0
        for cone, bkt in buckets:
            for r, ci, vi in zip(bkt.rows, bkt.cols, bkt.vals):
                rows.append(r + offset)
                cols.append(ci)
                vals.append(vi)
            rhs.extend(bkt.rhs)
            offset += len(bkt)
            cones.append(cone)

        m = offset
        if rows:
            a_mat = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(m, self._n),
            ).tocsc()
        else:
            a_mat = sp.csc_matrix((m, self._n))
        return ConicProblem(
            n=self._n,
            obj_coef=c,
            obj_const=float(self._obj_const + obj.const),
            a_mat=a_mat,
            b_vec=np.asarray(rhs, dtype=float),
            cones=cones,
            registry=dict(self.registry),
            cone_summary=summary,
        )


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostSolved": "max-iter",
    "AlmostPrimalInfeasible": "infeasible",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max-iter",
    "MaxTime": "max-iter",
}


def solve(problem: ConicProblem, tol: float = 1e-8, max_iter: int = 200,
          verbose: bool = False) -> ConicSolution:
    """Solve a conic problem; callers must branch on ``status``."""
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_gap_abs = tol * 1e-4
    p_mat = sp.csc_matrix((problem.n, problem.n))
    solver = clarabel.DefaultSolver(
        p_mat, -problem.obj_coef, problem.a_mat, problem.b_vec, problem.cones, settings
    )
    raw = solver.solve()
    status = _STATUS_MAP.get(str(raw.status), "numerical-failure")

    x = np.asarray(raw.x) if status in ("optimal", "max-iter") else None
    values: dict = {}
    if x is not None:
        for name, var in problem.registry.items():
            if isinstance(var, HermVar):
                values[name] = var.emb.decode(x[var.start:var.start + var.size])
            else:
                values[name] = x[var.start:var.start + var.size].copy()
    objective = (
        float(problem.obj_coef @ x + problem.obj_const) if x is not None else np.nan
    )
    residuals = {
        "r_prim": float(getattr(raw, "r_prim", np.nan)),
        "r_dual": float(getattr(raw, "r_dual", np.nan)),
        "solve_time": float(getattr(raw, "solve_time", np.nan)),
    }
    return ConicSolution(
        status=status,
        objective=objective,
        values=values,
        x=x,
        residuals=residuals,
        iterations=int(getattr(raw, "iterations", -1)),
        raw_status=str(raw.status),
    )
