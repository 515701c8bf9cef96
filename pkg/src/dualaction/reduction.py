"""Saddle-point reduction of the dual action functional.

Zero-mean loops split into head modes 1..N and tail modes
[-M..-1] u [N+1..M].  Once 2 pi (N+1) > h_hi, the dual functional is
strictly convex in the tail with explicit coercivity constant

    delta = 1/h_hi - 1/(2 pi (N+1))

in the H^1 metric, so each head point x owns a unique tail minimizer
Y(x).  The reduced functional psi(x) = Psi(x + Y(x)) is smooth, shares
critical points, Morse indices and nullities with the full dual
functional, and is the object every search and flow in this package
runs on.

Implementation notes: everything is computed on flat coefficient
vectors over the nonzero modes of a ``LoopGrid``.  Coordinate gradients
are g_k = 2 pi k (what_k - xhat_k) where w = grad H*_t(J xdot); the
H^1-metric gradient is g_k / (2 pi k)^2 blockwise.  The infinite tail is
truncated at M, certified a posteriori by the doubling audit.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .convex_model import HamiltonianModel
from .errors import CoercivityViolation, TailSingular
from .loop_fourier import FourierLoop, LoopGrid, cached_grid, standard_J

__all__ = ["choose_N", "SpectralDual", "ReducedManifold", "reduction"]


def choose_N(H: HamiltonianModel) -> tuple[int, float]:
    """Smallest head cutoff with 2 pi (N+1) > h_hi, and the coercivity delta.

    delta is the minimum over tail modes of the spectral lower bound of
    the tail Hessian relative to the H^1 norm: 1/h_hi for k <= -1 and
    1/h_hi - 1/(2 pi k) for k >= N+1, minimized at k = N+1.
    """
    N = 0
    while 2.0 * np.pi * (N + 1) <= H.h_hi:
        N += 1
    delta = 1.0 / H.h_hi - 1.0 / (2.0 * np.pi * (N + 1))
    return N, delta


class SpectralDual:
    """The dual action functional on the flat coefficient space of a grid.

    Provides value, coordinate gradient and coordinate Hessian of
    Psi(x) = -pi sum k |xhat_k|^2 + int H*_t(J xdot) dt over loops with
    modes |k| <= M; the pointwise conjugates at one loop are cached so a
    Newton step reuses them between the gradient and the Hessian.
    """

    def __init__(self, H: HamiltonianModel, grid: LoopGrid):
        self.H, self.grid = H, grid
        self._J = standard_J(H.n)
        self.ks = 2.0 * np.pi * grid.mode_of_block
        self._cache: dict[bytes, tuple] = {}

    def _conj_at(self, vec: np.ndarray):
        key = vec.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        g = self.grid
        JD = g.derivative_values(vec) @ self._J.T
        Y = self.H.conj_argmax_nodes(g.t, JD)
        vals = np.sum(JD * Y, axis=1) - self.H.value_nodes(g.t, Y)
        out = (JD, Y, vals)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = out
        return out

    def value(self, vec: np.ndarray) -> float:
        _, _, vals = self._conj_at(vec)
        quad = np.pi * float(np.sum(self.grid.mode_of_block * vec**2))
        return -quad + float(np.mean(vals))

    def gradient(self, vec: np.ndarray) -> np.ndarray:
        """Coordinate gradient: block k is 2 pi k (what_k - xhat_k)."""
        _, Y, _ = self._conj_at(vec)
        return self.ks * (self.grid.analyze(Y) - vec)

    def hessian(self, vec: np.ndarray) -> np.ndarray:
        g = self.grid
        JD, Y, _ = self._conj_at(vec)
        W = self.H.conj_hess_nodes(g.t, JD, warm=Y)
        C = g.weighted_gram(W)
        return -np.diag(self.ks) + self.ks[:, None] * C * self.ks[None, :]

    def h1_norm_dual(self, grad_part: np.ndarray, ks_part: np.ndarray) -> float:
        """H^1-metric norm of a coordinate-gradient fragment."""
        return float(np.sqrt(np.sum((grad_part / ks_part) ** 2)))


class ReducedManifold:
    """Reduction data: head cutoff N, tail truncation M, tail solver state."""

    def __init__(
        self,
        H: HamiltonianModel,
        N: int | None = None,
        M: int | None = None,
        Q: int | None = None,
        tail_grad_tol: float = 1e-11,
        warn_override=None,
    ):
        if not H.uniform_convexity:
            raise CoercivityViolation(
                "saddle-point reduction requires uniform quadratic convexity; "
                "subquadratic profiles must use full-space minimization"
            )
        self.H = H
        N_auto, delta = choose_N(H)
        if N is None:
            N = N_auto
        elif N < N_auto and warn_override is not None:
            warn_override(f"N={N} overrides the computed minimum {N_auto}; coercivity may fail")
        self.N, self.delta = N, delta
        if M is None:
            M = max(24, 2 * N + 8)
        if M <= N:
            raise ValueError("tail truncation M must exceed the head cutoff N")
        self.M = M
        self.grid: LoopGrid = cached_grid(H.n, M, Q if Q is not None else max(64, 4 * M))
        self.tail_grad_tol = tail_grad_tol
        self.dual = SpectralDual(H, self.grid)
        block_modes = self.grid.mode_of_block
        self.head_idx = np.where((block_modes >= 1) & (block_modes <= N))[0]
        self.tail_idx = np.where((block_modes < 1) | (block_modes > N))[0]
        self.head_dim = self.head_idx.size
        self.tail_dim = self.tail_idx.size
        self._ks = self.dual.ks
        self._warm: dict[bytes, np.ndarray] = {}
        self._chord = None  # last tail Cholesky factor, reused across nearby solves
        self._last_tail = None
        self.newton_iterations = 0

    # -- conversions -----------------------------------------------------------

    def head_vector(self, x: FourierLoop) -> np.ndarray:
        return self.grid.to_vector(x)[self.head_idx]

    def head_loop(self, head: np.ndarray) -> FourierLoop:
        full = np.zeros(self.grid.dim)
        full[self.head_idx] = head
        return self.grid.to_loop(full)

    def full_loop(self, full: np.ndarray, mean=None) -> FourierLoop:
        return self.grid.to_loop(full, mean=mean)

    def h1_norm(self, vec_part: np.ndarray, idx: np.ndarray) -> float:
        return self.dual.h1_norm_dual(vec_part, self._ks[idx])

    # -- tail solve --------------------------------------------------------------

    def _warm_key(self, head: np.ndarray) -> bytes:
        return np.round(head, 6).tobytes()

    def solve_tail(self, head: np.ndarray, warm: np.ndarray | None = None, max_iter: int = 60):
        """Minimize Psi over the truncated tail at the given head point.

        Returns the full coefficient vector (head fixed, tail at the
        minimizer).  Strict convexity makes the minimizer unique; a
        Cholesky failure of the tail Hessian raises CoercivityViolation.
        """
        full = np.zeros(self.grid.dim)
        full[self.head_idx] = head
        if warm is not None:
            full[self.tail_idx] = warm
        else:
            cached = self._warm.get(self._warm_key(head))
            if cached is not None:
                full[self.tail_idx] = cached
            elif self._last_tail is not None:
                # warm-start from the previous solve: the tail map is
                # Lipschitz, so along flows and line searches this is close
                full[self.tail_idx] = self._last_tail
        # chord phase: reuse the last factorization (the tail Hessian is
        # Lipschitz in the head, so warm-started chord steps usually finish
        # the solve without a fresh assembly)
        if self._chord is not None:
            gt = self.dual.gradient(full)[self.tail_idx]
            rn = self.h1_norm(gt, self.tail_idx)
            for _ in range(8):
                if rn < self.tail_grad_tol:
                    self._remember(head, full)
                    return full
                trial = full.copy()
                trial[self.tail_idx] -= cho_solve(self._chord, gt, check_finite=False)
                gt_t = self.dual.gradient(trial)[self.tail_idx]
                rn_t = self.h1_norm(gt_t, self.tail_idx)
                if rn_t > 0.5 * rn:
                    break
                full, gt, rn = trial, gt_t, rn_t
        val = self.dual.value(full)
        for _ in range(max_iter):
            gt = self.dual.gradient(full)[self.tail_idx]
            if self.h1_norm(gt, self.tail_idx) < self.tail_grad_tol:
                break
            Att = self.dual.hessian(full)[np.ix_(self.tail_idx, self.tail_idx)]
            try:
                cho = cho_factor(Att, check_finite=False)
            except LinAlgError as exc:
                raise CoercivityViolation(
                    "tail Hessian has nonpositive curvature; N or M misconfigured"
                ) from exc
            self._chord = cho
            step = cho_solve(cho, gt, check_finite=False)
            self.newton_iterations += 1
            lam, decrement = 1.0, float(gt @ step)
            for _ in range(40):
                trial = full.copy()
                trial[self.tail_idx] -= lam * step
                tval = self.dual.value(trial)
                if tval <= val - 1e-4 * lam * decrement + 1e-15 * abs(val):
                    full, val = trial, tval
                    break
                lam *= 0.5
            else:
                full[self.tail_idx] -= step
                val = self.dual.value(full)
        else:
            gt = self.dual.gradient(full)[self.tail_idx]
            raise CoercivityViolation(
                f"tail Newton stalled with residual {self.h1_norm(gt, self.tail_idx):.3e}"
            )
        self._remember(head, full)
        return full

    def _remember(self, head, full):
        if len(self._warm) > 4096:
            self._warm.clear()
        self._last_tail = full[self.tail_idx].copy()
        self._warm[self._warm_key(head)] = self._last_tail

    def tail_gradient_norm(self, full: np.ndarray) -> float:
        return self.h1_norm(self.dual.gradient(full)[self.tail_idx], self.tail_idx)

    # -- reduced functional --------------------------------------------------------

    def value(self, head: np.ndarray) -> float:
        return self.dual.value(self.solve_tail(head))

    def gradient(self, head: np.ndarray) -> np.ndarray:
        """Coordinate gradient of psi: the head block of the full gradient
        (exact because the tail gradient vanishes at (x, Y(x)))."""
        full = self.solve_tail(head)
        return self.dual.gradient(full)[self.head_idx]

    def gradient_h1(self, head: np.ndarray) -> np.ndarray:
        return self.gradient(head) / self._ks[self.head_idx] ** 2

    def gradient_norm(self, head: np.ndarray) -> float:
        return self.h1_norm(self.gradient(head), self.head_idx)

    def hessian(self, head: np.ndarray) -> np.ndarray:
        """Second derivative of psi as the Schur complement
        A_hh - A_ht A_tt^{-1} A_th of the full coordinate Hessian."""
        full = self.solve_tail(head)
        A = self.dual.hessian(full)
        Ahh = A[np.ix_(self.head_idx, self.head_idx)]
        Aht = A[np.ix_(self.head_idx, self.tail_idx)]
        Att = A[np.ix_(self.tail_idx, self.tail_idx)]
        try:
            cho = cho_factor(Att, check_finite=False)
        except LinAlgError as exc:
            raise TailSingular("tail block of the dual Hessian is singular") from exc
        S = Ahh - Aht @ cho_solve(cho, Aht.T, check_finite=False)
        return 0.5 * (S + S.T)

    def h1_gram_head(self) -> np.ndarray:
        return np.diag(self._ks[self.head_idx] ** 2)

    def index_nullity(self, head: np.ndarray, zero_tol: float = 1e-7):
        """Morse index and nullity of psi at a critical point, from the
        spectrum of the reduced Hessian form against the H^1 Gram."""
        if self.head_dim == 0:
            return 0, 0, np.zeros(0)
        lam = eigh(self.hessian(head), self.h1_gram_head(), eigvals_only=True)
        index = int(np.sum(lam < -zero_tol))
        nullity = int(np.sum(np.abs(lam) <= zero_tol))
        return index, nullity, lam

    def full_index_nullity(self, full: np.ndarray, zero_tol: float = 1e-7):
        """Index/nullity of the full (head + truncated tail) dual Hessian."""
        A = self.dual.hessian(full)
        G = np.diag(self._ks**2)
        lam = eigh(A, G, eigvals_only=True)
        return int(np.sum(lam < -zero_tol)), int(np.sum(np.abs(lam) <= zero_tol))

    def tail_least_eig_h1(self, full: np.ndarray) -> float:
        """Least eigenvalue of the tail Hessian against the tail H^1 Gram."""
        Att = self.dual.hessian(full)[np.ix_(self.tail_idx, self.tail_idx)]
        G = np.diag(self._ks[self.tail_idx] ** 2)
        return float(eigh(Att, G, eigvals_only=True)[0])

    # -- audits -----------------------------------------------------------------

    def audit_tail_truncation(self, heads, tol: float = 1e-8) -> float:
        """Max |psi_M - psi_{2M}| over the given head points (doubling test)."""
        other = ReducedManifold(self.H, N=self.N, M=2 * self.M, tail_grad_tol=self.tail_grad_tol)
        worst = 0.0
        for head in heads:
            worst = max(worst, abs(self.value(head) - other.value(head)))
        return worst


def reduction(H: HamiltonianModel, N=None, M=None, Q=None, **kw) -> ReducedManifold:
    return ReducedManifold(H, N=N, M=M, Q=Q, **kw)
