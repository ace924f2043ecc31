"""Typed convex constraint atoms and the program container the solver consumes.

Every constraint is an atom f(x) <= 0 from one of five families:

  affine          a.x + b <= 0
  quadratic       sum_t alpha_t ||G_t x[I_t]||^2 - (c.x + d) <= 0
  soc             ||A x[I] + b|| - (c.x + d) <= 0
  rate-bound      a.x + b + sum_t alpha_t ||G_t x[I_t]||^2 - log2(a_in.x + b_in) <= 0
  quotient-log    a.x + b + log2(c0 + sum_k c_k / x[i_k]) <= 0,  c_k >= 0

The rate-bound family with no quadratic terms degenerates to the plain
negative-log bound t <= log2(affine).  All atoms expose analytic value,
gradient, and Hessian; the quotient-log family is convex because the log of
a sum of log-convex terms is convex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

LOG2E = math.log2(math.e)


@dataclass
class QuadTerm:
    """alpha * ||G @ x[idx]||^2 with a precomputed curvature block."""

    idx: np.ndarray
    G: np.ndarray
    alpha: float = 1.0
    block: np.ndarray = field(init=False)  # 2*alpha*G^T G, constant Hessian piece

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64)
        self.G = np.asarray(self.G, dtype=float)
        self.block = 2.0 * self.alpha * (self.G.T @ self.G)

    def value(self, x):
        y = self.G @ x[self.idx]
        return self.alpha * float(y @ y)

    def grad_local(self, x):
        # 2*alpha*G^T G x_I
        return self.block @ x[self.idx]


class Atom:
    kind = "abstract"

    def __init__(self, name: str, n: int):
        self.name = name
        self.n = int(n)

    # barrier-side value (smoothed where applicable)
    def value(self, x) -> float:
        raise NotImplementedError

    # true constraint residual (unsmoothed)
    def residual(self, x) -> float:
        return self.value(x)

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def domain_ok(self, x) -> bool:
        return True


class AffineAtom(Atom):
    kind = "affine"

    def __init__(self, name, n, a, b):
        super().__init__(name, n)
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def value(self, x):
        return float(self.a @ x) + self.b

    def grad(self, x):
        return self.a.copy()

    def hess(self, x):
        return np.zeros((self.n, self.n))

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "a": self.a.tolist(), "b": self.b}


class QuadAtom(Atom):
    """sum of quadratic terms bounded by an affine form (power budgets)."""

    kind = "quadratic"

    def __init__(self, name, n, terms, c=None, d=0.0):
        super().__init__(name, n)
        self.terms = list(terms)
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        self.d = float(d)

    def value(self, x):
        return sum(t.value(x) for t in self.terms) - float(self.c @ x) - self.d

    def grad(self, x):
        g = -self.c.copy()
        for t in self.terms:
            g[t.idx] += t.grad_local(x)
        return g

    def hess(self, x):
        H = np.zeros((self.n, self.n))
        for t in self.terms:
            H[np.ix_(t.idx, t.idx)] += t.block
        return H

    def to_dict(self):
        return {
            "kind": self.kind, "name": self.name, "c": self.c.tolist(), "d": self.d,
            "terms": [{"idx": t.idx.tolist(), "G": t.G.tolist(), "alpha": t.alpha}
                      for t in self.terms],
        }


class SocAtom(Atom):
    """||A x[idx] + b|| <= c.x + d, smoothed for the barrier.

    The barrier uses sqrt(||r||^2 + sigma^2); residual() checks the
    unsmoothed cone.
    """

    kind = "soc"

    def __init__(self, name, n, idx, A, b, c, d, smoothing=None):
        super().__init__(name, n)
        self.idx = np.asarray(idx, dtype=np.int64)
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.d = float(d)
        scale = abs(self.d) + float(np.linalg.norm(self.b)) + 1.0
        self.smoothing = 1e-9 * scale if smoothing is None else float(smoothing)

    def _r(self, x):
        return self.A @ x[self.idx] + self.b

    def value(self, x):
        r = self._r(x)
        s = math.sqrt(float(r @ r) + self.smoothing ** 2)
        return s - float(self.c @ x) - self.d

    def residual(self, x):
        r = self._r(x)
        return float(np.linalg.norm(r)) - float(self.c @ x) - self.d

    def grad(self, x):
        r = self._r(x)
        s = math.sqrt(float(r @ r) + self.smoothing ** 2)
        g = -self.c.copy()
        g[self.idx] += self.A.T @ (r / s)
        return g

    def hess(self, x):
        r = self._r(x)
        s = math.sqrt(float(r @ r) + self.smoothing ** 2)
        At_r = self.A.T @ r
        B = (self.A.T @ self.A) / s - np.outer(At_r, At_r) / s ** 3
        H = np.zeros((self.n, self.n))
        H[np.ix_(self.idx, self.idx)] += B
        return H

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "idx": self.idx.tolist(),
                "A": self.A.tolist(), "b": self.b.tolist(), "c": self.c.tolist(),
                "d": self.d, "smoothing": self.smoothing}


class LogRateAtom(Atom):
    """affine + convex quadratic - log2(affine) <= 0 (composite rate bound)."""

    kind = "rate-bound"

    def __init__(self, name, n, a_out, b_out, terms, a_in, b_in):
        super().__init__(name, n)
        self.a_out = np.asarray(a_out, dtype=float)
        self.b_out = float(b_out)
        self.terms = list(terms)
        self.a_in = np.asarray(a_in, dtype=float)
        self.b_in = float(b_in)

    def _arg(self, x):
        return float(self.a_in @ x) + self.b_in

    def domain_ok(self, x):
        return self._arg(x) > 0.0

    def value(self, x):
        q = sum(t.value(x) for t in self.terms)
        return float(self.a_out @ x) + self.b_out + q - math.log2(self._arg(x))

    def grad(self, x):
        u = self._arg(x)
        g = self.a_out - (LOG2E / u) * self.a_in
        for t in self.terms:
            g[t.idx] += t.grad_local(x)
        return g

    def hess(self, x):
        u = self._arg(x)
        H = (LOG2E / u ** 2) * np.outer(self.a_in, self.a_in)
        for t in self.terms:
            H[np.ix_(t.idx, t.idx)] += t.block
        return H

    def to_dict(self):
        return {
            "kind": self.kind, "name": self.name,
            "a_out": self.a_out.tolist(), "b_out": self.b_out,
            "a_in": self.a_in.tolist(), "b_in": self.b_in,
            "terms": [{"idx": t.idx.tolist(), "G": t.G.tolist(), "alpha": t.alpha}
                      for t in self.terms],
        }


class QuotientLogAtom(Atom):
    """affine + log2(c0 + sum_k c_k / x[i_k]) <= 0 with nonnegative c."""

    kind = "quotient-log"

    def __init__(self, name, n, a_out, b_out, quot_idx, quot_coef, c0):
        super().__init__(name, n)
        self.a_out = np.asarray(a_out, dtype=float)
        self.b_out = float(b_out)
        idx = np.asarray(quot_idx, dtype=np.int64)
        coef = np.asarray(quot_coef, dtype=float)
        if np.any(coef < 0):
            raise ValueError("quotient numerators must be nonnegative")
        # merge duplicate slack indices so derivatives stay simple
        uniq, inv = np.unique(idx, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inv, coef)
        self.quot_idx = uniq
        self.quot_coef = merged
        self.c0 = float(c0)
        if self.c0 < 0:
            raise ValueError("constant inside the log must be nonnegative")

    def _S(self, x):
        return self.c0 + float(np.sum(self.quot_coef / x[self.quot_idx]))

    def domain_ok(self, x):
        xs = x[self.quot_idx]
        return bool(np.all(xs > 0.0)) and self._S(x) > 0.0

    def value(self, x):
        return float(self.a_out @ x) + self.b_out + math.log2(self._S(x))

    def grad(self, x):
        xs = x[self.quot_idx]
        S = self.c0 + float(np.sum(self.quot_coef / xs))
        dS = -self.quot_coef / xs ** 2
        g = self.a_out.copy()
        g[self.quot_idx] += (LOG2E / S) * dS
        return g

    def hess(self, x):
        xs = x[self.quot_idx]
        S = self.c0 + float(np.sum(self.quot_coef / xs))
        dS = -self.quot_coef / xs ** 2
        d2S = 2.0 * self.quot_coef / xs ** 3
        H = np.zeros((self.n, self.n))
        H[self.quot_idx, self.quot_idx] += (LOG2E / S) * d2S
        H[np.ix_(self.quot_idx, self.quot_idx)] -= (LOG2E / S ** 2) * np.outer(dS, dS)
        return H

    def to_dict(self):
        return {"kind": self.kind, "name": self.name,
                "a_out": self.a_out.tolist(), "b_out": self.b_out,
                "quot_idx": self.quot_idx.tolist(),
                "quot_coef": self.quot_coef.tolist(), "c0": self.c0}


@dataclass
class VariableInfo:
    name: str
    size: int
    offset: int


class ConvexProgram:
    """Variable census + atom list; objective is one designated variable."""

    def __init__(self, objective_var: str = "eta"):
        self.objective_var = objective_var
        self.variables: list[VariableInfo] = []
        self._offsets: dict[str, VariableInfo] = {}
        self.atoms: list[Atom] = []

    @property
    def n(self) -> int:
        return sum(v.size for v in self.variables)

    def add_variable(self, name: str, size: int = 1) -> np.ndarray:
        if name in self._offsets:
            raise ValueError(f"duplicate variable {name}")
        info = VariableInfo(name, int(size), self.n)
        self.variables.append(info)
        self._offsets[name] = info
        return self.index(name)

    def index(self, name: str) -> np.ndarray:
        info = self._offsets[name]
        return np.arange(info.offset, info.offset + info.size, dtype=np.int64)

    @property
    def objective_index(self) -> int:
        return int(self._offsets[self.objective_var].offset)

    def add_atom(self, atom: Atom):
        if atom.n != self.n:
            raise ValueError(f"atom {atom.name} built for dimension {atom.n}, program has {self.n}")
        self.atoms.append(atom)

    # ---- text serialization (documented in docs/formats.md) ----

    def to_text(self) -> str:
        return json.dumps({
            "format": "seagrid-program-v1",
            "objective": self.objective_var,
            "variables": [{"name": v.name, "size": v.size} for v in self.variables],
            "atoms": [a.to_dict() for a in self.atoms],
        })

    @classmethod
    def from_text(cls, text: str) -> "ConvexProgram":
        doc = json.loads(text)
        if doc.get("format") != "seagrid-program-v1":
            raise ValueError("unknown program format")
        prog = cls(doc["objective"])
        for v in doc["variables"]:
            prog.add_variable(v["name"], v["size"])
        n = prog.n
        for d in doc["atoms"]:
            kind = d["kind"]
            if kind == "affine":
                atom = AffineAtom(d["name"], n, d["a"], d["b"])
            elif kind == "quadratic":
                terms = [QuadTerm(t["idx"], t["G"], t["alpha"]) for t in d["terms"]]
                atom = QuadAtom(d["name"], n, terms, d["c"], d["d"])
            elif kind == "soc":
                atom = SocAtom(d["name"], n, d["idx"], d["A"], d["b"], d["c"],
                               d["d"], d["smoothing"])
            elif kind == "rate-bound":
                terms = [QuadTerm(t["idx"], t["G"], t["alpha"]) for t in d["terms"]]
                atom = LogRateAtom(d["name"], n, d["a_out"], d["b_out"], terms,
                                   d["a_in"], d["b_in"])
            elif kind == "quotient-log":
                atom = QuotientLogAtom(d["name"], n, d["a_out"], d["b_out"],
                                       d["quot_idx"], d["quot_coef"], d["c0"])
            else:
                raise ValueError(f"unknown atom kind {kind}")
            prog.add_atom(atom)
        return prog


@dataclass
class AtomEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def evaluate_atom(atom: Atom, x) -> AtomEval:
    x = np.asarray(x, dtype=float)
    if not atom.domain_ok(x):
        raise ValueError(f"point outside domain of atom {atom.name}")
    return AtomEval(atom.value(x), atom.grad(x), atom.hess(x))


def complex_to_real_map(h: np.ndarray) -> np.ndarray:
    """Real matrix G with ||G v||^2 = ||H^H w||^2 for v = [Re w; Im w].

    h may be a vector (MISO link, one receive antenna) or a matrix whose
    columns are per-receive-antenna channels.  Two rows per column: the real
    and imaginary parts of that column's inner product with w.
    """
    H = np.atleast_2d(np.asarray(h))
    if H.shape[0] == 1 and np.asarray(h).ndim == 1:
        H = H.T  # vector becomes a single column
    nt, nr = H.shape
    G = np.zeros((2 * nr, 2 * nt))
    for c in range(nr):
        hr, hi = H[:, c].real, H[:, c].imag
        G[2 * c, :nt] = hr
        G[2 * c, nt:] = hi
        G[2 * c + 1, :nt] = -hi
        G[2 * c + 1, nt:] = hr
    return G


def complex_to_real_vec(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    return np.concatenate([w.real, w.imag])


def real_to_complex_vec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    k = v.shape[0] // 2
    return v[:k] + 1j * v[k:]
