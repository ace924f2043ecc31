"""Log-barrier interior-point solver for the two subproblem families.

Maximizes a single designated variable subject to the program's atoms via the
standard barrier path: minimize t*f0(x) - sum ln(-f_i(x)), t <- mu*t, with
damped Newton centering, Armijo backtracking, and a domain-restricted line
search so iterates stay strictly feasible.  Dense symmetric factorization
throughout; the hot accumulation loops go through the kernels backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .atoms import (LOG2E, AffineAtom, Atom, ConvexProgram, LogRateAtom,
                    QuadAtom, QuotientLogAtom, SocAtom)


@dataclass
class SolverSettings:
    eps: float = 1e-8                 # duality-gap tolerance m/t
    mu: float = 10.0                  # barrier multiplier
    max_newton_per_stage: int = 80
    max_total_newton: int = 4000
    newton_tol: float = 1e-10         # stop stage when decrement^2/2 below this
    armijo_c: float = 0.01
    backtrack: float = 0.5
    min_step: float = 1e-13
    keep_trace: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.mu <= 1:
            raise ValueError("mu must exceed 1")


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    max_violation: float
    barrier_iterations: int
    termination: str                  # converged | iteration-cap | numerical-failure
    trace: list = field(default_factory=list)


@dataclass
class FeasibilityReport:
    residuals: list       # (atom name, signed residual)
    max_residual: float
    ok: bool


def check_feasible(program: ConvexProgram, x, tol: float = 1e-8) -> FeasibilityReport:
    x = np.asarray(x, dtype=float)
    rows = []
    worst = -math.inf
    for atom in program.atoms:
        if atom.domain_ok(x):
            r = atom.residual(x)
        else:
            r = math.inf
        rows.append((atom.name, r))
        worst = max(worst, r)
    return FeasibilityReport(rows, worst, worst <= tol)


class ProgramEvaluator:
    """Stacked evaluation of all atoms: values, barrier gradient and Hessian.

    Affine parts of every atom live in one dense (m x n) matrix; quadratic
    terms are concatenated with ragged index arrays so the curvature
    accumulation is a single kernel call; log/soc/quotient extras are small
    per-atom loops.
    """

    def __init__(self, program: ConvexProgram):
        self.program = program
        self.n = program.n
        m = len(program.atoms)
        self.m = m
        A = np.zeros((m, self.n))
        b = np.zeros(m)
        term_row, term_blocks, term_idx, term_G, term_alpha = [], [], [], [], []
        log_row, log_A, log_b = [], [], []
        self.soc = []        # (row, atom)
        self.quot = []       # (row, atom)
        for i, atom in enumerate(program.atoms):
            if isinstance(atom, AffineAtom):
                A[i] = atom.a
                b[i] = atom.b
            elif isinstance(atom, QuadAtom):
                A[i] = -atom.c
                b[i] = -atom.d
                for t in atom.terms:
                    term_row.append(i); term_idx.append(t.idx)
                    term_blocks.append(t.block); term_G.append(t)
            elif isinstance(atom, LogRateAtom):
                A[i] = atom.a_out
                b[i] = atom.b_out
                for t in atom.terms:
                    term_row.append(i); term_idx.append(t.idx)
                    term_blocks.append(t.block); term_G.append(t)
                log_row.append(i); log_A.append(atom.a_in); log_b.append(atom.b_in)
            elif isinstance(atom, SocAtom):
                A[i] = -atom.c
                b[i] = -atom.d
                self.soc.append((i, atom))
            elif isinstance(atom, QuotientLogAtom):
                A[i] = atom.a_out
                b[i] = atom.b_out
                self.quot.append((i, atom))
            else:
                raise TypeError(f"unsupported atom {atom.kind}")
        self.A, self.b = A, b
        self.nterms = len(term_row)
        if self.nterms:
            self.term_row = np.asarray(term_row, dtype=np.int64)
            self.terms = term_G
            self.idx_ptr = np.zeros(self.nterms + 1, dtype=np.int64)
            for t, idx in enumerate(term_idx):
                self.idx_ptr[t + 1] = self.idx_ptr[t] + idx.shape[0]
            self.idx_flat = np.concatenate(term_idx).astype(np.int64)
            self.blocks_flat = np.concatenate([blk.ravel() for blk in term_blocks])
            self.contrib = np.zeros(self.idx_ptr[-1])
        self.nlog = len(log_row)
        if self.nlog:
            self.log_row = np.asarray(log_row, dtype=np.int64)
            self.log_A = np.asarray(log_A)
            self.log_b = np.asarray(log_b)
        self._gmat = np.zeros((m, self.n))

    def values(self, x):
        """All atom values (barrier side); None when outside some domain."""
        vals = self.A @ x + self.b
        if self.nterms:
            for t, term in enumerate(self.terms):
                y = term.G @ x[term.idx]
                vals[self.term_row[t]] += term.alpha * float(y @ y)
        if self.nlog:
            args = self.log_A @ x + self.log_b
            if np.any(args <= 0):
                return None
            vals[self.log_row] -= np.log2(args)
        for i, atom in self.soc:
            r = atom.A @ x[atom.idx] + atom.b
            vals[i] += math.sqrt(float(r @ r) + atom.smoothing ** 2)
        for i, atom in self.quot:
            xs = x[atom.quot_idx]
            if np.any(xs <= 0):
                return None
            vals[i] += math.log2(atom.c0 + float(np.sum(atom.quot_coef / xs)))
        return vals

    def barrier_grad_hess(self, x, vals):
        """Gradient and Hessian of phi = -sum ln(-f_i) at a strictly feasible x."""
        w1 = 1.0 / (-vals)
        G = self._gmat
        np.copyto(G, self.A)
        if self.nterms:
            for t, term in enumerate(self.terms):
                lo = self.idx_ptr[t]
                hi = self.idx_ptr[t + 1]
                self.contrib[lo:hi] = term.block @ x[term.idx]
            kernels.scatter_rows(G, self.term_row, self.idx_flat, self.idx_ptr,
                                 self.contrib)
        if self.nlog:
            args = self.log_A @ x + self.log_b
            G[self.log_row] -= (LOG2E / args)[:, None] * self.log_A
        soc_cache = []
        for i, atom in self.soc:
            r = atom.A @ x[atom.idx] + atom.b
            s = math.sqrt(float(r @ r) + atom.smoothing ** 2)
            At_r = atom.A.T @ r
            G[i, atom.idx] += At_r / s
            soc_cache.append((i, atom, s, At_r))
        quot_cache = []
        for i, atom in self.quot:
            xs = x[atom.quot_idx]
            S = atom.c0 + float(np.sum(atom.quot_coef / xs))
            dS = -atom.quot_coef / xs ** 2
            G[i, atom.quot_idx] += (LOG2E / S) * dS
            quot_cache.append((i, atom, xs, S, dS))
        grad = G.T @ w1
        H = (G * (w1 ** 2)[:, None]).T @ G
        if self.nterms:
            kernels.accum_blocks(H, self.blocks_flat, self.idx_flat, self.idx_ptr,
                                 w1[self.term_row])
        if self.nlog:
            wlog = w1[self.log_row] * LOG2E / args ** 2
            H += (self.log_A * wlog[:, None]).T @ self.log_A
        for i, atom, s, At_r in soc_cache:
            B = (atom.A.T @ atom.A) / s - np.outer(At_r, At_r) / s ** 3
            kernels.accum_block(H, B, atom.idx, w1[i])
        for i, atom, xs, S, dS in quot_cache:
            d2S = 2.0 * atom.quot_coef / xs ** 3
            H[atom.quot_idx, atom.quot_idx] += w1[i] * (LOG2E / S) * d2S
            kernels.accum_outer(H, dS, atom.quot_idx, -w1[i] * LOG2E / S ** 2)
        return grad, H


def _solve_newton_system(H, g):
    """Solve H d = -g with a regularization ladder on factorization failure."""
    reg = 0.0
    base = max(np.trace(H) / H.shape[0], 1.0)
    for _ in range(12):
        try:
            c, low = sla.cho_factor(H + reg * np.eye(H.shape[0]), check_finite=False)
            return sla.cho_solve((c, low), -g, check_finite=False)
        except np.linalg.LinAlgError:
            reg = max(2.0 * reg, 1e-14 * base)
        except ValueError:
            return None
    return None


def solve(program: ConvexProgram, x0, settings: SolverSettings | None = None) -> Solution:
    settings = settings or SolverSettings()
    x = np.array(x0, dtype=float)
    ev = ProgramEvaluator(program)
    obj = program.objective_index
    m = ev.m
    vals = ev.values(x)
    if vals is None or np.any(vals >= 0):
        bad = "domain" if vals is None else program.atoms[int(np.argmax(vals))].name
        raise ValueError(f"start point not strictly feasible ({bad})")

    def merit(t, x, vals):
        return -t * x[obj] + float(-np.sum(np.log(-vals)))

    # match the barrier pull along the objective so the first centering
    # residual starts O(1) instead of O(||grad phi||)
    grad_phi0, _ = ev.barrier_grad_hess(x, vals)
    t = max(1.0, float(grad_phi0[obj]))
    best_x, best_obj = x.copy(), x[obj]
    total_newton = 0
    termination = "converged"
    stage_capped = False
    trace = []
    while m / t > settings.eps:
        # centering at this t
        centered = False
        for _ in range(settings.max_newton_per_stage):
            if total_newton >= settings.max_total_newton:
                termination = "iteration-cap"
                break
            grad_phi, H = ev.barrier_grad_hess(x, vals)
            g = grad_phi.copy()
            g[obj] -= t
            d = _solve_newton_system(H, g)
            if d is None:
                termination = "numerical-failure"
                break
            lam2 = float(-g @ d)
            if lam2 <= 2 * settings.newton_tol:
                centered = True
                break
            # backtracking line search, domain-restricted
            m0 = merit(t, x, vals)
            slope = -lam2
            alpha = 1.0
            nx = nvals = None
            while alpha >= settings.min_step:
                cand = x + alpha * d
                cvals = ev.values(cand)
                if cvals is not None and np.all(cvals < 0):
                    if merit(t, cand, cvals) <= m0 + settings.armijo_c * alpha * slope:
                        nx, nvals = cand, cvals
                        break
                alpha *= settings.backtrack
            total_newton += 1
            if nx is None:
                # cannot make progress at this stage; accept current center
                if lam2 > 1e-4:
                    termination = "numerical-failure"
                else:
                    centered = True
                break
            x, vals = nx, nvals
            if settings.keep_trace:
                trace.append((t, total_newton, float(x[obj]), float(np.max(vals)), lam2))
        if not centered:
            stage_capped = True
        if x[obj] > best_obj:
            best_obj, best_x = float(x[obj]), x.copy()
        if termination != "converged":
            break
        t *= settings.mu
    if termination == "converged" and stage_capped:
        # gap certificate needs true centers; a capped stage voids it
        termination = "iteration-cap"
    if best_obj > x[obj]:
        x = best_x
    rep = check_feasible(program, x)
    return Solution(x, float(x[obj]), rep.max_residual, total_newton, termination, trace)
