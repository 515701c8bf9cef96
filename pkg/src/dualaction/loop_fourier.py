"""Truncated Fourier loops in R^{2n} and their H^{1/2}/H^1 structure.

A loop is stored spectrally in the basis ``e^{-2 pi k J t}`` of rotating
planes: ``x(t) = sum_k e^{-2 pi k J t} xhat_k`` with real coefficient
vectors ``xhat_k`` in R^{2n}.  Here ``J`` is the standard complex
structure mapping (q, p) to (-p, q); coordinates are ordered
(q_1..q_n, p_1..p_n).  In this basis the derivative, the spectral
projectors, the zero-mean primitive and the Sobolev norms are all
mode-diagonal.

Pointwise values are produced on demand at uniform quadrature nodes; the
nonlinear functionals elsewhere in the package require the node count Q
to satisfy Q >= 4*M to keep quadrature of products alias-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonzeroMean

__all__ = [
    "FourierLoop",
    "LoopGrid",
    "standard_J",
    "rotation",
    "symplectic_quadform",
    "primitive_zero_mean",
    "loop_distance_mod_shift",
]


def standard_J(n: int) -> np.ndarray:
    """Matrix of the complex structure (q, p) -> (-p, q) on R^{2n}."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def rotation(n: int, angle: float | np.ndarray) -> np.ndarray:
    """e^{angle * J} as a (..., 2n, 2n) stack: cos(a) I + sin(a) J."""
    a = np.asarray(angle)
    I = np.eye(2 * n)
    J = standard_J(n)
    return np.cos(a)[..., None, None] * I + np.sin(a)[..., None, None] * J


@dataclass(frozen=True)
class FourierLoop:
    """Immutable truncated Fourier loop.

    Attributes
    ----------
    n : half-dimension; the loop takes values in R^{2n}.
    coeffs : array of shape (2M+1, 2n); row ``k + M`` holds xhat_k.
        The mean (k = 0 coefficient) is ``coeffs[M]``.
    """

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[0] % 2 != 1 or c.shape[1] != 2 * self.n:
            raise ValueError(f"coefficient array has bad shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, n: int, M: int = 0) -> "FourierLoop":
        return cls(n, np.zeros((2 * M + 1, 2 * n)))

    @classmethod
    def constant(cls, v) -> "FourierLoop":
        v = np.asarray(v, dtype=float)
        return cls(v.size // 2, v.reshape(1, -1))

    @classmethod
    def from_modes(cls, n: int, modes: dict[int, np.ndarray]) -> "FourierLoop":
        M = max((abs(k) for k in modes), default=0)
        c = np.zeros((2 * M + 1, 2 * n))
        for k, v in modes.items():
            c[k + M] = np.asarray(v, dtype=float)
        return cls(n, c)

    # -- basic accessors ---------------------------------------------------

    @property
    def M(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[self.M]

    def coeff(self, k: int) -> np.ndarray:
        if abs(k) > self.M:
            return np.zeros(2 * self.n)
        return self.coeffs[k + self.M]

    def mode_numbers(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def with_mean(self, v) -> "FourierLoop":
        c = self.coeffs.copy()
        c[self.M] = np.asarray(v, dtype=float)
        return FourierLoop(self.n, c)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "FourierLoop") -> "FourierLoop":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        M = max(self.M, other.M)
        c = np.zeros((2 * M + 1, 2 * self.n))
        c[M - self.M : M + self.M + 1] += self.coeffs
        c[M - other.M : M + other.M + 1] += other.coeffs
        return FourierLoop(self.n, c)

    def __sub__(self, other: "FourierLoop") -> "FourierLoop":
        return self + (-1.0) * other

    def __rmul__(self, a: float) -> "FourierLoop":
        return FourierLoop(self.n, float(a) * self.coeffs)

    # -- evaluation and calculus -------------------------------------------

    def evaluate(self, t) -> np.ndarray:
        """Pointwise values; ``t`` scalar or 1-d array, result (..., 2n)."""
        t = np.asarray(t, dtype=float)
        ks = self.mode_numbers()
        ang = -2.0 * np.pi * np.multiply.outer(t, ks)  # (..., 2M+1)
        Jc = self.coeffs @ standard_J(self.n).T  # rows (J xhat_k)^T
        vals = np.tensordot(np.cos(ang), self.coeffs, axes=(-1, 0))
        vals += np.tensordot(np.sin(ang), Jc, axes=(-1, 0))
        return vals

    def derivative(self) -> "FourierLoop":
        """Loop with coefficients (-2 pi k J) xhat_k and zero mean."""
        ks = self.mode_numbers()[:, None]
        c = -2.0 * np.pi * ks * (self.coeffs @ standard_J(self.n).T)
        return FourierLoop(self.n, c)

    def project(self, part: str) -> "FourierLoop":
        """Keep only the indicated spectral part: 'plus', 'minus' or 'zero'."""
        c = np.zeros_like(self.coeffs)
        M = self.M
        if part == "plus":
            c[M + 1 :] = self.coeffs[M + 1 :]
        elif part == "minus":
            c[:M] = self.coeffs[:M]
        elif part == "zero":
            c[M] = self.coeffs[M]
        else:
            raise ValueError(f"unknown part {part!r}")
        return FourierLoop(self.n, c)

    def zero_mean_part(self) -> "FourierLoop":
        return self.with_mean(np.zeros(2 * self.n))

    def time_shift(self, theta: float) -> "FourierLoop":
        """The loop t -> x(t + theta); mode k picks up e^{-2 pi k J theta}."""
        ks = self.mode_numbers()
        R = rotation(self.n, -2.0 * np.pi * theta * ks)  # (2M+1, 2n, 2n)
        c = np.einsum("kab,kb->ka", R, self.coeffs)
        return FourierLoop(self.n, c)

    # -- norms ---------------------------------------------------------------

    def l2_norm_sq(self) -> float:
        return float(np.sum(self.coeffs**2))

    def sobolev_half_norm_sq(self) -> float:
        """|xhat_0|^2 + 2 pi sum_k |k| |xhat_k|^2."""
        ks = np.abs(self.mode_numbers())
        w = 2.0 * np.pi * ks
        w[self.M] = 1.0
        return float(np.sum(w[:, None] * self.coeffs**2))

    def h1_norm_sq(self) -> float:
        """Squared L^2 norm of the derivative (zero-mean H^1 metric)."""
        ks = self.mode_numbers()
        return float(np.sum((2.0 * np.pi * ks[:, None]) ** 2 * self.coeffs**2))

    def max_mode(self) -> int:
        """Largest |k| carrying a nonzero coefficient."""
        nz = np.nonzero(np.any(self.coeffs != 0.0, axis=1))[0]
        if nz.size == 0:
            return 0
        return int(np.max(np.abs(nz - self.M)))


def symplectic_quadform(x: FourierLoop) -> float:
    """(1/2) int J xdot . x dt, computed spectrally as pi sum_k k |xhat_k|^2.

    Equals ( ||P+ x||^2 - ||P- x||^2 ) / 2 in the H^{1/2} norm.
    """
    ks = x.mode_numbers()
    return float(np.pi * np.sum(ks[:, None] * x.coeffs**2))


def primitive_zero_mean(v: FourierLoop, tol: float = 1e-12) -> FourierLoop:
    """Zero-mean primitive of a zero-mean loop; inverts ``derivative``.

    Mode k maps by (-2 pi k J)^{-1} = J/(2 pi k).
    """
    if np.linalg.norm(v.mean) > tol:
        raise NonzeroMean(f"primitive requires zero mean, |mean| = {np.linalg.norm(v.mean):.3e}")
    ks = v.mode_numbers().astype(float)
    ks[v.M] = np.inf  # k = 0 row is zero anyway
    c = (v.coeffs @ standard_J(v.n).T) / (2.0 * np.pi * ks[:, None])
    c[v.M] = 0.0
    return FourierLoop(v.n, c)


def loop_distance_mod_shift(x: FourierLoop, y: FourierLoop, refine: int = 64) -> float:
    """L^2 distance between loops minimized over time shifts of ``y``.

    Coarse shift grid followed by a golden-section refinement; used by the
    critical-point deduplicator.
    """
    thetas = np.linspace(0.0, 1.0, refine, endpoint=False)
    dists = [np.sqrt((x - y.time_shift(th)).l2_norm_sq()) for th in thetas]
    i = int(np.argmin(dists))
    lo, hi = thetas[i] - 1.0 / refine, thetas[i] + 1.0 / refine

    def f(th):
        return np.sqrt((x - y.time_shift(th)).l2_norm_sq())

    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1, c2 = b - phi * (b - a), a + phi * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(40):
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - phi * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + phi * (b - a)
            f2 = f(c2)
    return min(f1, f2, dists[i])


class LoopGrid:
    """Shared trig tables for loops with modes |k| <= M sampled at Q nodes.

    Solvers work with flat coefficient vectors over the nonzero modes
    [-M..-1, 1..M] (each mode a 2n-block, layout fixed by ``modes``);
    this class provides vectorized synthesis/analysis between those
    vectors and values at the uniform nodes t_j = j/Q, plus the dense
    synthesis tensor used for Galerkin Hessian assembly.
    """

    def __init__(self, n: int, M: int, Q: int | None = None):
        if Q is None:
            Q = max(64, 4 * M)
        if Q < 4 * M:
            raise ValueError(f"need Q >= 4M for alias-free quadrature, got Q={Q}, M={M}")
        self.n, self.M, self.Q = n, M, Q
        self.t = np.arange(Q) / Q
        self.J = standard_J(n)
        self.modes = np.concatenate([np.arange(-M, 0), np.arange(1, M + 1)])
        self.nm = self.modes.size  # number of nonzero modes
        self.dim = 2 * n * self.nm  # flat vector length
        ang = 2.0 * np.pi * np.outer(self.t, self.modes)  # (Q, nm)
        self.cos = np.cos(ang)
        self.sin = np.sin(ang)
        # H^1 Gram diagonal: block k has weight (2 pi k)^2
        self.h1_weights = np.repeat((2.0 * np.pi * self.modes) ** 2, 2 * n)
        self.mode_of_block = np.repeat(self.modes, 2 * n)

    # -- flat vector <-> FourierLoop ----------------------------------------

    def to_vector(self, x: FourierLoop) -> np.ndarray:
        if x.max_mode() > self.M:
            raise ValueError("loop carries modes beyond the grid cutoff")
        out = np.zeros(self.dim)
        for i, k in enumerate(self.modes):
            out[2 * self.n * i : 2 * self.n * (i + 1)] = x.coeff(int(k))
        return out

    def to_loop(self, vec: np.ndarray, mean=None) -> FourierLoop:
        c = np.zeros((2 * self.M + 1, 2 * self.n))
        blocks = vec.reshape(self.nm, 2 * self.n)
        for i, k in enumerate(self.modes):
            c[k + self.M] = blocks[i]
        if mean is not None:
            c[self.M] = mean
        return FourierLoop(self.n, c)

    def block(self, vec: np.ndarray, k: int) -> np.ndarray:
        i = int(np.where(self.modes == k)[0][0])
        return vec[2 * self.n * i : 2 * self.n * (i + 1)]

    # -- synthesis / analysis ------------------------------------------------

    def values(self, vec: np.ndarray, mean=None) -> np.ndarray:
        """Node values (Q, 2n) of the loop with flat coefficients ``vec``."""
        A = vec.reshape(self.nm, 2 * self.n)
        vals = self.cos @ A - self.sin @ (A @ self.J.T)
        if mean is not None:
            vals = vals + np.asarray(mean)
        return vals

    def derivative_values(self, vec: np.ndarray) -> np.ndarray:
        """Node values of the derivative loop."""
        return self.values(self.derivative_vector(vec))

    def derivative_vector(self, vec: np.ndarray) -> np.ndarray:
        A = vec.reshape(self.nm, 2 * self.n)
        dA = -2.0 * np.pi * self.modes[:, None] * (A @ self.J.T)
        return dA.ravel()

    def analyze(self, W: np.ndarray) -> np.ndarray:
        """Fourier coefficients (flat, nonzero modes) of node samples W.

        Implements xhat_k = (1/Q) sum_j e^{+2 pi k J t_j} w_j, exact for
        band-limited samples with |k| < Q/2.
        """
        A = (self.cos.T @ W + (self.sin.T @ W) @ self.J.T) / self.Q
        return A.ravel()

    def analyze_mean(self, W: np.ndarray) -> np.ndarray:
        return W.mean(axis=0)

    def quad(self, f_nodes: np.ndarray) -> float:
        """Uniform (trapezoidal) quadrature over the period."""
        return float(np.mean(f_nodes, axis=0))

    # -- Galerkin assembly -----------------------------------------------------

    @property
    def synthesis_tensor(self) -> np.ndarray:
        """P with P[j, :, i, :] = e^{-2 pi k_i J t_j}; shape (Q, 2n, nm, 2n)."""
        if not hasattr(self, "_P"):
            I = np.eye(2 * self.n)
            P = np.einsum("jk,ab->jakb", self.cos, I) - np.einsum(
                "jk,ab->jakb", self.sin, self.J
            )
            self._P = P
        return self._P

    def weighted_gram(self, W_nodes: np.ndarray) -> np.ndarray:
        """Galerkin matrix of multiplication by the matrix field W(t).

        Returns the (dim, dim) symmetric matrix with 2n-blocks
        B_{kl} = (1/Q) sum_j e^{2 pi k J t_j} W_j e^{-2 pi l J t_j};
        positive definite whenever every W_j is.
        """
        P = self.synthesis_tensor.reshape(self.Q, 2 * self.n, self.dim)
        WP = np.einsum("jab,jbK->jaK", W_nodes, P)
        B = np.einsum("jaK,jaL->KL", P, WP) / self.Q
        return 0.5 * (B + B.T)


@lru_cache(maxsize=32)
def cached_grid(n: int, M: int, Q: int) -> LoopGrid:
    return LoopGrid(n, M, Q)
