"""Direct and dual action functionals on Fourier loops.

The direct functional is
``Phi_H(x) = (1/2) int J xdot . x dt - int H_t(x) dt``;
its critical points are the 1-periodic Hamiltonian orbits.  Clarke's
dual functional on zero-mean loops,
``Psi(x) = -(1/2) int J xdot . x dt + int H*_t(J xdot) dt``,
trades the indefinite quadratic form for a convex leading term; its
critical points correspond to the orbits up to a unique translation v0,
with equal critical values.

All dual-side gradients live in the H^1 metric (xdot, ydot)_{L^2}; the
direct functional is evaluated only.  Time integrals use the uniform
node grid of the loop (Q >= 4M), and pointwise Fenchel conjugates are
solved in one vectorized damped-Newton sweep over the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex_model import HamiltonianModel
from .errors import BadModeSupport, LiftInconsistent, NonzeroMean, NotCritical
from .loop_fourier import FourierLoop, LoopGrid, cached_grid, standard_J, symplectic_quadform

__all__ = [
    "ActionEvaluation",
    "direct_action",
    "dual_action",
    "dual_gradient",
    "dual_hessian_apply",
    "dual_hessian_bilinear",
    "duality_gap",
    "lift_to_orbit",
    "orbit_residual_l2",
    "evaluate_dual",
]

MEAN_TOL = 1e-12


def _grid_for(H: HamiltonianModel, *loops: FourierLoop, Q: int | None = None) -> LoopGrid:
    M = max([1] + [x.max_mode() for x in loops])
    return cached_grid(H.n, M, Q if Q is not None else max(64, 4 * M))


def _require_zero_mean(x: FourierLoop, what: str):
    if np.linalg.norm(x.mean) > MEAN_TOL:
        raise NonzeroMean(f"{what} requires a zero-mean loop, |mean| = {np.linalg.norm(x.mean):.3e}")


def direct_action(H: HamiltonianModel, x: FourierLoop, Q: int | None = None) -> float:
    """Phi_H(x): spectral symplectic form minus quadrature of H_t(x(t))."""
    g = _grid_for(H, x, Q=Q)
    vals = H.value_nodes(g.t, g.values(g.to_vector(x.zero_mean_part()), mean=x.mean))
    return symplectic_quadform(x) - g.quad(vals)


def _dual_w_nodes(H: HamiltonianModel, g: LoopGrid, vec: np.ndarray):
    """J xdot at the nodes and the conjugate-gradient samples grad H*_t(J xdot)."""
    JD = g.derivative_values(vec) @ standard_J(H.n).T
    return JD, H.conj_grad_nodes(g.t, JD)


def dual_action(H: HamiltonianModel, x: FourierLoop, Q: int | None = None) -> float:
    """Psi(x) for a zero-mean loop x."""
    _require_zero_mean(x, "dual_action")
    g = _grid_for(H, x, Q=Q)
    vec = g.to_vector(x)
    JD = g.derivative_values(vec) @ standard_J(H.n).T
    return -symplectic_quadform(x) + g.quad(H.conj_value_nodes(g.t, JD))


def dual_gradient(H: HamiltonianModel, x: FourierLoop, Q: int | None = None) -> FourierLoop:
    """Gradient of Psi at x in the H^1 metric: the zero-mean primitive of
    J(x - grad H*_t(J xdot)).

    Mode k of the result is (what_k - xhat_k) / (2 pi k) where w is the
    conjugate-gradient loop.
    """
    _require_zero_mean(x, "dual_gradient")
    g = _grid_for(H, x, Q=Q)
    vec = g.to_vector(x)
    _, Wn = _dual_w_nodes(H, g, vec)
    wvec = g.analyze(Wn)
    diff = (wvec - vec).reshape(g.nm, 2 * H.n)
    coeff = diff / (2.0 * np.pi * g.modes[:, None])
    out = FourierLoop.zero(H.n, g.M)
    out.coeffs[g.modes + g.M] = coeff
    return out


def dual_hessian_bilinear(
    H: HamiltonianModel, x: FourierLoop, u: FourierLoop, v: FourierLoop, Q: int | None = None
) -> float:
    """Gateaux second differential
    d^2 Psi(x)[u, v] = -int J udot . v dt + int hess H*_t(J xdot) J udot . J vdot dt.
    """
    for w, name in ((x, "x"), (u, "u"), (v, "v")):
        _require_zero_mean(w, f"dual_hessian ({name})")
    g = _grid_for(H, x, u, v, Q=Q)
    J = standard_J(H.n)
    xv, uv, vv = g.to_vector(x), g.to_vector(u), g.to_vector(v)
    W = H.conj_hess_nodes(g.t, g.derivative_values(xv) @ J.T)
    Ju = g.derivative_values(uv) @ J.T
    Jv = g.derivative_values(vv) @ J.T
    term2 = g.quad(np.einsum("jab,jb,ja->j", W, Ju, Jv))
    ks = 2.0 * np.pi * g.mode_of_block
    term1 = -float(np.sum(ks * uv * vv))
    return term1 + term2


def dual_hessian_apply(
    H: HamiltonianModel, x: FourierLoop, u: FourierLoop, Q: int | None = None
) -> FourierLoop:
    """H^1-metric representative of d^2 Psi(x)[u, .] as a zero-mean loop."""
    _require_zero_mean(x, "dual_hessian_apply (x)")
    _require_zero_mean(u, "dual_hessian_apply (u)")
    g = _grid_for(H, x, u, Q=Q)
    J = standard_J(H.n)
    xv, uv = g.to_vector(x), g.to_vector(u)
    W = H.conj_hess_nodes(g.t, g.derivative_values(xv) @ J.T)
    Ju = g.derivative_values(uv) @ J.T
    ks = 2.0 * np.pi * g.mode_of_block
    bu = -ks * uv + ks * g.analyze(np.einsum("jab,jb->ja", W, Ju))
    coeff = (bu / ks**2).reshape(g.nm, 2 * H.n)
    out = FourierLoop.zero(H.n, g.M)
    out.coeffs[g.modes + g.M] = coeff
    return out


def duality_gap(H: HamiltonianModel, x: FourierLoop, y: FourierLoop, Q: int | None = None) -> float:
    """Psi(pi(x)) - (1/2)||P^- y||_{1/2}^2 - Phi_H(x + y), nonnegative.

    x is any H^1-regular loop, y may only carry modes k <= 0.  The gap
    vanishes exactly when J xdot = grad H_t(x + y) along the loop; in
    particular when y is constant and x + y is a periodic orbit.
    """
    if np.any(y.coeffs[y.M + 1 :] != 0.0):
        raise BadModeSupport("y must have modes k <= 0 only")
    gap = dual_action(H, x.zero_mean_part(), Q=Q)
    gap -= 0.5 * y.project("minus").sobolev_half_norm_sq()
    gap -= direct_action(H, x + y, Q=Q)
    return gap


def orbit_residual_l2(H: HamiltonianModel, orbit: FourierLoop, Q: int | None = None) -> float:
    """L^2 norm of xdot - X_H(t, x) along the loop."""
    g = _grid_for(H, orbit, Q=Q)
    vec = g.to_vector(orbit.zero_mean_part())
    Z = g.values(vec, mean=orbit.mean)
    D = g.derivative_values(vec)
    R = D - H.vector_field_nodes(g.t, Z)
    return float(np.sqrt(g.quad(np.sum(R**2, axis=1))))


def lift_to_orbit(
    H: HamiltonianModel,
    x: FourierLoop,
    grad_tol: float = 1e-9,
    consistency_tol: float = 1e-6,
    orbit_tol: float = 1e-6,
    Q: int | None = None,
) -> tuple[np.ndarray, FourierLoop]:
    """Translate a critical point of Psi into a periodic Hamiltonian orbit.

    Returns the unique v0 with grad H*_t(J xdot) = x + v0 (namely the time
    average of grad H*_t(J xdot) - x) and the orbit loop x + v0.

    Raises
    ------
    NotCritical        if the dual-gradient residual of x exceeds grad_tol.
    LiftInconsistent   if grad H*_t(J xdot) - x deviates from constant in L^2.
    """
    _require_zero_mean(x, "lift_to_orbit")
    resid = np.sqrt(dual_gradient(H, x, Q=Q).h1_norm_sq())
    if resid > grad_tol:
        raise NotCritical(f"dual gradient residual {resid:.3e} > {grad_tol:.1e}")
    g = _grid_for(H, x, Q=Q)
    vec = g.to_vector(x)
    _, Wn = _dual_w_nodes(H, g, vec)
    Xn = g.values(vec)
    v0 = g.analyze_mean(Wn - Xn)
    dev = Wn - Xn - v0
    dev_l2 = float(np.sqrt(g.quad(np.sum(dev**2, axis=1))))
    if dev_l2 > consistency_tol:
        raise LiftInconsistent(f"lift deviates from a constant by {dev_l2:.3e} in L^2")
    orbit = x.with_mean(v0)
    orn = orbit_residual_l2(H, orbit, Q=Q)
    if orn > orbit_tol:
        raise NotCritical(f"lifted loop misses Hamilton's equations by {orn:.3e}")
    return v0, orbit


@dataclass(frozen=True)
class ActionEvaluation:
    """Value, H^1 gradient and residual norm of the dual functional at a loop."""

    value: float
    gradient: FourierLoop
    residual_norm: float


def evaluate_dual(H: HamiltonianModel, x: FourierLoop, Q: int | None = None) -> ActionEvaluation:
    grad = dual_gradient(H, x, Q=Q)
    return ActionEvaluation(
        value=dual_action(H, x, Q=Q),
        gradient=grad,
        residual_norm=float(np.sqrt(grad.h1_norm_sq())),
    )
