"""Convex Hamiltonian models, gauge functions of convex bodies, and
numerical Fenchel conjugation.

A ``HamiltonianModel`` bundles value/gradient/Hessian oracles for a
time-periodic Hamiltonian on R^{2n} together with two-sided convexity
bounds (h_lo, h_hi) on the spatial Hessian.  Gauge domains carry the
positively 2-homogeneous function taking the value 1 on the boundary of
a convex body; composite Hamiltonians are built by applying a scalar
profile to the gauge.

Coordinates on R^{2n} are ordered (q_1..q_n, p_1..p_n) and the complex
structure J maps (q, p) to (-p, q).  The Hamiltonian vector field is
X_H = -J grad H, so orbits satisfy J xdot = grad H(x).
"""

from __future__ import annotations

import numpy as np

from .errors import ConvexityLoss, NewtonDivergence, SpectrumUnavailable
from .loop_fourier import standard_J

__all__ = [
    "HamiltonianModel",
    "QuadraticHamiltonian",
    "GaugeDomain",
    "EllipsoidGauge",
    "PerturbedBallGauge",
    "GaugeProfileHamiltonian",
    "LinearProfile",
    "PowerProfile",
    "WindowProfile",
    "CappedProfile",
    "TimePeriodicBump",
    "ellipsoid_gauge",
    "ball_gauge",
    "perturbed_ball_gauge",
    "profile_hamiltonian",
    "fenchel_conjugate",
    "conjugate_model",
    "slope_nonresonance_check",
    "estimate_convexity_bounds",
]


# ---------------------------------------------------------------------------
# Hamiltonian models
# ---------------------------------------------------------------------------


class HamiltonianModel:
    """Time-periodic Hamiltonian with value/gradient/Hessian oracles.

    Subclasses implement the batched node oracles; all oracles are pure
    after construction and safe to call concurrently.

    Attributes
    ----------
    n : half-dimension, state space is R^{2n}.
    h_lo, h_hi : two-sided bounds on the spatial Hessian over the sampled
        region.  ``uniform_convexity`` records whether they hold globally
        (quadratic convexity) or only away from degeneracies, as for
        p-homogeneous profiles.
    time_dependent : whether the oracles actually depend on t.
    """

    n: int
    h_lo: float
    h_hi: float
    uniform_convexity: bool = True
    time_dependent: bool = False

    # -- scalar conveniences -------------------------------------------------

    def value(self, t: float, z) -> float:
        return float(self.value_nodes(np.array([t]), np.asarray(z, dtype=float)[None, :])[0])

    def grad(self, t: float, z) -> np.ndarray:
        return self.grad_nodes(np.array([t]), np.asarray(z, dtype=float)[None, :])[0]

    def hess(self, t: float, z) -> np.ndarray:
        return self.hess_nodes(np.array([t]), np.asarray(z, dtype=float)[None, :])[0]

    def vector_field(self, t: float, z) -> np.ndarray:
        """X_H = -J grad H."""
        return -standard_J(self.n) @ self.grad(t, z)

    def vector_field_nodes(self, ts, Z) -> np.ndarray:
        return -(self.grad_nodes(ts, Z) @ standard_J(self.n).T)

    # -- batched oracles (must be overridden) ---------------------------------

    def value_nodes(self, ts: np.ndarray, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_nodes(self, ts: np.ndarray, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_nodes(self, ts: np.ndarray, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- Fenchel conjugate oracles --------------------------------------------
    # Defaults run a damped Newton on grad H(t, y) = w per node, warm-started
    # across nodes.  Models with closed-form conjugates override conj_argmax.

    def conj_argmax_nodes(self, ts: np.ndarray, W: np.ndarray, warm=None) -> np.ndarray:
        return _batched_fenchel_argmax(self, ts, W, warm)

    def conj_value_nodes(self, ts, W, warm=None) -> np.ndarray:
        Y = self.conj_argmax_nodes(ts, W, warm)
        return np.sum(W * Y, axis=1) - self.value_nodes(ts, Y)

    def conj_grad_nodes(self, ts, W, warm=None) -> np.ndarray:
        """Legendre reciprocity: grad H*_t(w) is the argmax y."""
        return self.conj_argmax_nodes(ts, W, warm)

    def conj_hess_nodes(self, ts, W, warm=None) -> np.ndarray:
        """hess H*_t(w) = (hess H_t(y))^{-1} at the argmax y."""
        Y = self.conj_argmax_nodes(ts, W, warm)
        return np.linalg.inv(self.hess_nodes(ts, Y))


class QuadraticHamiltonian(HamiltonianModel):
    """H(z) = (1/2) <A (z - b), z - b> + xi with A symmetric positive definite.

    Closed-form conjugate: H*(w) = (1/2) <A^{-1} w, w> + w . b - xi.
    """

    def __init__(self, A, b=None, xi: float = 0.0):
        A = np.asarray(A, dtype=float)
        self.A = 0.5 * (A + A.T)
        self.n = A.shape[0] // 2
        self.b = np.zeros(2 * self.n) if b is None else np.asarray(b, dtype=float)
        self.xi = float(xi)
        self.Ainv = np.linalg.inv(self.A)
        eigs = np.linalg.eigvalsh(self.A)
        if eigs[0] <= 0:
            raise ConvexityLoss("quadratic form is not positive definite")
        self.h_lo, self.h_hi = float(eigs[0]), float(eigs[-1])
        self.uniform_convexity = True
        self.time_dependent = False

    @classmethod
    def isotropic(cls, n: int, eta: float, b=None, xi: float = 0.0):
        """H = eta |z - b|^2 + xi (Hessian 2 eta I)."""
        return cls(2.0 * eta * np.eye(2 * n), b=b, xi=xi)

    def value_nodes(self, ts, Z):
        D = Z - self.b
        return 0.5 * np.sum(D * (D @ self.A), axis=1) + self.xi

    def grad_nodes(self, ts, Z):
        return (Z - self.b) @ self.A

    def hess_nodes(self, ts, Z):
        return np.broadcast_to(self.A, (Z.shape[0], 2 * self.n, 2 * self.n)).copy()

    def conj_argmax_nodes(self, ts, W, warm=None):
        return W @ self.Ainv + self.b

    def conj_value_nodes(self, ts, W, warm=None):
        return 0.5 * np.sum(W * (W @ self.Ainv), axis=1) + W @ self.b - self.xi

    def conj_hess_nodes(self, ts, W, warm=None):
        return np.broadcast_to(self.Ainv, (W.shape[0], 2 * self.n, 2 * self.n)).copy()


# ---------------------------------------------------------------------------
# Gauge domains
# ---------------------------------------------------------------------------


class GaugeDomain:
    """Positively 2-homogeneous gauge of a convex body, value 1 on the boundary.

    ``smoothing_radius`` is the radius of the ball inside which composite
    Hamiltonians replace the profile by a matched quadratic cap; see
    ``CappedProfile``.  ``known_spectrum`` supplies oracle actions of
    closed characteristics when available.
    """

    n: int
    smoothing_radius: float = 0.05
    quadratic_form = None  # 2n x 2n matrix G with gauge = z^T G z, if exact

    def gauge_values(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gauge_grads(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gauge_hessians(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gauge_eval(self, z) -> float:
        return float(self.gauge_values(np.asarray(z, dtype=float)[None, :])[0])

    def gauge_grad(self, z) -> np.ndarray:
        return self.gauge_grads(np.asarray(z, dtype=float)[None, :])[0]

    def gauge_hess(self, z) -> np.ndarray:
        return self.gauge_hessians(np.asarray(z, dtype=float)[None, :])[0]

    def minkowski_gauge(self, z) -> float:
        return float(np.sqrt(self.gauge_eval(z)))

    def spectrum_up_to(self, T_max: float) -> np.ndarray:
        """Sorted distinct oracle actions up to T_max, or raise."""
        raise SpectrumUnavailable(f"no spectrum oracle for {type(self).__name__}")

    @property
    def has_spectrum_oracle(self) -> bool:
        return False

    def cap_level(self) -> float:
        """Largest gauge level s0 whose sublevel set fits in the smoothing ball."""
        rng = np.random.default_rng(7)
        U = rng.standard_normal((256, 2 * self.n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        g_min = float(np.min(self.gauge_values(U)))
        return self.smoothing_radius**2 * g_min


class EllipsoidGauge(GaugeDomain):
    """Gauge of the ellipsoid sum_i (q_i^2 + p_i^2) / r_i^2 <= 1.

    Oracle spectrum: closed characteristics are the coordinate-plane
    circles with actions m * pi * r_i^2, m >= 1.  (The Hamiltonian flow of
    the gauge on the boundary has period pi r_i^2 in plane i.)
    """

    def __init__(self, radii, smoothing_radius: float = 0.05):
        radii = np.asarray(radii, dtype=float)
        if np.any(radii <= 0):
            raise ValueError("all radii must be positive")
        self.radii = radii
        self.n = radii.size
        self.smoothing_radius = smoothing_radius
        d = np.concatenate([1.0 / radii**2, 1.0 / radii**2])
        self.quadratic_form = np.diag(d)
        self._Ginv = np.diag(1.0 / d)

    def gauge_values(self, Z):
        return np.sum(Z * (Z @ self.quadratic_form), axis=1)

    def gauge_grads(self, Z):
        return 2.0 * Z @ self.quadratic_form

    def gauge_hessians(self, Z):
        H = 2.0 * self.quadratic_form
        return np.broadcast_to(H, (Z.shape[0], 2 * self.n, 2 * self.n)).copy()

    def support_sq(self, W: np.ndarray) -> np.ndarray:
        """sigma(w)^2 = w^T G^{-1} w = max of (w.y)^2 over the gauge-1 level."""
        return np.sum(W * (W @ self._Ginv), axis=1)

    @property
    def has_spectrum_oracle(self) -> bool:
        return True

    def spectrum_up_to(self, T_max: float) -> np.ndarray:
        base = np.pi * self.radii**2
        out = []
        for a in base:
            m = 1
            while m * a <= T_max + 1e-12:
                out.append(m * a)
                m += 1
        out = np.array(sorted(out))
        if out.size == 0:
            return out
        keep = np.concatenate([[True], np.diff(out) > 1e-12])
        return out[keep]


class PerturbedBallGauge(GaugeDomain):
    """n = 1 gauge r^2 * f(theta) with f(theta) = 1 + eps cos(m theta).

    A smooth star-shaped (strongly convex for small eps) deformation of
    the unit disk; no closed-form spectrum, the shooting enumerator
    computes one.
    """

    def __init__(self, eps: float, m: int = 2, smoothing_radius: float = 0.05):
        if abs(eps) >= 0.1:
            raise ValueError("perturbation too large for guaranteed convexity")
        self.eps = float(eps)
        self.m = int(m)
        self.n = 1
        self.smoothing_radius = smoothing_radius

    def _f(self, th):
        return 1.0 + self.eps * np.cos(self.m * th)

    def _fp(self, th):
        return -self.eps * self.m * np.sin(self.m * th)

    def _fpp(self, th):
        return -self.eps * self.m**2 * np.cos(self.m * th)

    def gauge_values(self, Z):
        q, p = Z[:, 0], Z[:, 1]
        th = np.arctan2(p, q)
        return (q**2 + p**2) * self._f(th)

    def gauge_grads(self, Z):
        q, p = Z[:, 0], Z[:, 1]
        th = np.arctan2(p, q)
        f, fp = self._f(th), self._fp(th)
        # d/dq (r^2 f) = 2 q f - p f',  d/dp = 2 p f + q f'
        return np.stack([2 * q * f - p * fp, 2 * p * f + q * fp], axis=1)

    def gauge_hessians(self, Z):
        q, p = Z[:, 0], Z[:, 1]
        r2 = q**2 + p**2
        th = np.arctan2(p, q)
        f, fp, fpp = self._f(th), self._fp(th), self._fpp(th)
        hqq = 2 * f - (p / r2) * (2 * q * fp - p * fpp)
        hpp = 2 * f + (q / r2) * (2 * p * fp + q * fpp)
        hqp = (q / r2) * (2 * q * fp - p * fpp) - fp
        H = np.empty((Z.shape[0], 2, 2))
        H[:, 0, 0], H[:, 1, 1] = hqq, hpp
        H[:, 0, 1] = H[:, 1, 0] = hqp
        return H


def ellipsoid_gauge(radii, smoothing_radius: float = 0.05) -> EllipsoidGauge:
    """Gauge domain of the ellipsoid with the given semi-axis radii."""
    return EllipsoidGauge(radii, smoothing_radius)


def ball_gauge(n: int, radius: float = 1.0, smoothing_radius: float = 0.05) -> EllipsoidGauge:
    return EllipsoidGauge([radius] * n, smoothing_radius)


def perturbed_ball_gauge(eps: float, m: int = 2, smoothing_radius: float = 0.05):
    return PerturbedBallGauge(eps, m, smoothing_radius)


# ---------------------------------------------------------------------------
# Scalar profiles
# ---------------------------------------------------------------------------


class Profile:
    """Scalar reparametrization s -> phi(s) applied to a gauge."""

    eta_at_infinity: float | None = None  # slope for large s, if linear there
    uniform: bool = True  # composite stays quadratically convex

    def phi(self, s):
        raise NotImplementedError

    def dphi(self, s):
        raise NotImplementedError

    def d2phi(self, s):
        raise NotImplementedError


class LinearProfile(Profile):
    """phi(s) = eta s + xi; the composite is eta * gauge + xi."""

    def __init__(self, eta: float, xi: float = 0.0):
        self.eta, self.xi = float(eta), float(xi)
        self.eta_at_infinity = self.eta

    def phi(self, s):
        return self.eta * np.asarray(s, dtype=float) + self.xi

    def dphi(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.eta)

    def d2phi(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))


class PowerProfile(Profile):
    """phi(s) = scale * s^{p/2}; subquadratic for p in (1, 2).

    With scale = 1 the minimal-period formula
    T = (p/2) ((2/(p-2)) Psi_min)^{(p-2)/p} applies verbatim to the
    minimum of the dual action of the composite.
    """

    def __init__(self, p: float, scale: float = 1.0):
        if not 1.0 < p:
            raise ValueError("need p > 1")
        self.p, self.scale = float(p), float(scale)
        self.uniform = False

    def phi(self, s):
        return self.scale * np.asarray(s, dtype=float) ** (self.p / 2)

    def dphi(self, s):
        return self.scale * (self.p / 2) * np.asarray(s, dtype=float) ** (self.p / 2 - 1)

    def d2phi(self, s):
        a = self.p / 2
        return self.scale * a * (a - 1) * np.asarray(s, dtype=float) ** (a - 2)


def _smoothstep(u):
    """Quintic smoothstep: S(0)=0, S(1)=1, S'=S''=0 at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _smoothstep_d(u):
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u**2 * (1.0 - u) ** 2


def _smoothstep_int(u):
    """Antiderivative of the quintic smoothstep with value 0 at u = 0."""
    u = np.clip(u, 0.0, 1.0)
    return 2.5 * u**4 - 3.0 * u**5 + u**6


class WindowProfile(Profile):
    """Near-flat profile that climbs once through the target slope.

    The derivative is ``slope0`` up to s1, then climbs along a quintic
    smoothstep of width ``width`` to ``slope_inf``, crossing the value
    ``orbit_slope`` exactly at s = 1 (with positive second derivative
    there).  The value is anchored by phi(1) = -anchor, so the constant
    loop at the origin has action anchor + (the total climb below 1),
    while non-constant orbits sit exactly on the gauge-1 level.
    """

    def __init__(
        self,
        slope0: float = 0.15,
        slope_inf: float = 4.0,
        width: float = 0.45,
        orbit_slope: float = np.pi,
        anchor: float = 2e-4,
    ):
        if not slope0 < orbit_slope < slope_inf:
            raise ValueError("need slope0 < orbit_slope < slope_inf")
        self.slope0, self.slope_inf = float(slope0), float(slope_inf)
        self.width, self.orbit_slope = float(width), float(orbit_slope)
        self.anchor = float(anchor)
        self.eta_at_infinity = self.slope_inf
        # place the climb so that dphi(1) = orbit_slope
        frac = (orbit_slope - slope0) / (slope_inf - slope0)
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _smoothstep(mid) < frac:
                lo = mid
            else:
                hi = mid
        self.u_star = 0.5 * (lo + hi)
        self.s1 = 1.0 - self.u_star * self.width
        self.s2 = self.s1 + self.width
        if self.s1 <= 0:
            raise ValueError("climb window extends below 0; reduce width")
        self._c0 = self._raw_int(1.0)

    def _raw_int(self, s):
        """Antiderivative of dphi with value 0 at s1."""
        s = np.asarray(s, dtype=float)
        u = np.clip((s - self.s1) / self.width, 0.0, 1.0)
        base = self.slope0 * (s - self.s1)
        climb = (self.slope_inf - self.slope0) * self.width * _smoothstep_int(u)
        over = np.where(
            s > self.s2, (self.slope_inf - self.slope0) * (s - self.s2), 0.0
        )
        return base + climb + over

    def phi(self, s):
        return self._raw_int(s) - self._c0 - self.anchor

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        u = (s - self.s1) / self.width
        return self.slope0 + (self.slope_inf - self.slope0) * _smoothstep(u)

    def d2phi(self, s):
        s = np.asarray(s, dtype=float)
        u = (s - self.s1) / self.width
        inside = (u > 0.0) & (u < 1.0)
        out = np.zeros_like(s)
        out[inside] = (
            (self.slope_inf - self.slope0) * _smoothstep_d(u[inside]) / self.width
        )
        return out


class CappedProfile(Profile):
    """Profile with a matched quadratic below the cap level s0.

    For s < s0 the base profile is replaced by its second-order Taylor
    polynomial at s0, which keeps the composite C^2 across the cap and
    gives it a genuine (bounded, positive definite) Hessian near the
    origin when the base profile degenerates there.
    """

    def __init__(self, base: Profile, s0: float):
        if s0 <= 0:
            raise ValueError("cap level must be positive")
        self.base, self.s0 = base, float(s0)
        self.eta_at_infinity = base.eta_at_infinity
        self._v = float(base.phi(s0))
        self._d = float(base.dphi(s0))
        self._h = float(base.d2phi(s0))
        if self._d - self._h * self.s0 <= 0:
            raise ConvexityLoss("cap slope at the origin is nonpositive; raise s0")
        self.uniform = True

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        d = s - self.s0
        capped = self._v + self._d * d + 0.5 * self._h * d**2
        return np.where(s < self.s0, capped, self.base.phi(np.maximum(s, self.s0)))

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        capped = self._d + self._h * (s - self.s0)
        return np.where(s < self.s0, capped, self.base.dphi(np.maximum(s, self.s0)))

    def d2phi(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.s0, self._h, self.base.d2phi(np.maximum(s, self.s0)))


# ---------------------------------------------------------------------------
# Time-periodic symmetry-breaking perturbation
# ---------------------------------------------------------------------------


class TimePeriodicBump:
    """V(t, z) = eps * rho(gauge(z)) * (cos(2 pi t) q - sin(2 pi t) p), n = 1.

    The radial bump rho is a C^2 cubic hump supported on gauge levels
    [a, b], so the constant orbit at the origin is preserved exactly.
    Along a gauge-level circle the time average of V is proportional to
    cos of the loop phase, which breaks each circle of orbits into one
    minimum and one maximum.
    """

    def __init__(
        self,
        domain: GaugeDomain,
        amplitude: float,
        a: float = 0.5,
        b: float = 1.6,
        phase: float = 0.0,
    ):
        if domain.n != 1:
            raise ValueError("symmetry-breaking bump is implemented for n = 1")
        self.domain, self.eps = domain, float(amplitude)
        self.a, self.b = float(a), float(b)
        self.phase = float(phase)
        peak = ((b - a) / 2.0) ** 2  # max of (s-a)(b-s)
        self._norm = peak**3

    def _rho(self, s):
        g = np.maximum((s - self.a) * (self.b - s), 0.0)
        return g**3 / self._norm

    def _drho(self, s):
        g = (s - self.a) * (self.b - s)
        gp = self.a + self.b - 2.0 * s
        out = 3.0 * g**2 * gp / self._norm
        return np.where(g > 0.0, out, 0.0)

    def _d2rho(self, s):
        g = (s - self.a) * (self.b - s)
        gp = self.a + self.b - 2.0 * s
        out = (6.0 * g * gp**2 - 6.0 * g**2) / self._norm
        return np.where(g > 0.0, out, 0.0)

    def _ell(self, ts):
        a = 2.0 * np.pi * ts + self.phase
        return np.stack([np.cos(a), -np.sin(a)], axis=1)

    def value_nodes(self, ts, Z):
        s = self.domain.gauge_values(Z)
        lin = np.sum(self._ell(ts) * Z, axis=1)
        return self.eps * self._rho(s) * lin

    def grad_nodes(self, ts, Z):
        s = self.domain.gauge_values(Z)
        gs = self.domain.gauge_grads(Z)
        ell = self._ell(ts)
        lin = np.sum(ell * Z, axis=1)
        return self.eps * (
            self._drho(s)[:, None] * lin[:, None] * gs + self._rho(s)[:, None] * ell
        )

    def hess_nodes(self, ts, Z):
        s = self.domain.gauge_values(Z)
        gs = self.domain.gauge_grads(Z)
        Hs = self.domain.gauge_hessians(Z)
        ell = self._ell(ts)
        lin = np.sum(ell * Z, axis=1)
        rp, rpp = self._drho(s), self._d2rho(s)
        out = rpp[:, None, None] * lin[:, None, None] * np.einsum("ia,ib->iab", gs, gs)
        out += rp[:, None, None] * lin[:, None, None] * Hs
        cross = np.einsum("ia,ib->iab", gs, ell)
        out += rp[:, None, None] * (cross + np.swapaxes(cross, 1, 2))
        return self.eps * out


def _perturbation_hessian_norm(pert: "TimePeriodicBump", samples: int = 600) -> float:
    """Sampled sup of the spectral norm of the perturbation Hessian."""
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((samples, 2 * pert.domain.n))
    Z *= rng.uniform(0.1, 2.0, samples)[:, None] / np.linalg.norm(Z, axis=1)[:, None]
    ts = rng.uniform(0.0, 1.0, samples)
    eigs = np.linalg.eigvalsh(pert.hess_nodes(ts, Z))
    return 1.2 * float(np.max(np.abs(eigs)))


# ---------------------------------------------------------------------------
# Composite gauge-profile Hamiltonian
# ---------------------------------------------------------------------------


class GaugeProfileHamiltonian(HamiltonianModel):
    """H(t, z) = phi(gauge(z)) + optional time-periodic perturbation.

    Gradient and Hessian come from the chain rule,
    grad H = phi'(s) grad s,  hess H = phi'(s) hess s + phi''(s) grad s (x) grad s.
    """

    def __init__(
        self,
        domain: GaugeDomain,
        profile: Profile,
        perturbation: TimePeriodicBump | None = None,
        bounds: tuple[float, float] | None = None,
        audit: bool = True,
    ):
        self.domain, self.profile = domain, profile
        self.perturbation = perturbation
        self.n = domain.n
        self.time_dependent = perturbation is not None
        self.uniform_convexity = getattr(profile, "uniform", True)
        if bounds is not None:
            self.h_lo, self.h_hi = bounds
        elif isinstance(domain, EllipsoidGauge) and getattr(profile, "uniform", True):
            self.h_lo, self.h_hi = self._ellipsoid_profile_bounds()
        else:
            self.h_lo, self.h_hi = estimate_convexity_bounds(self)
        if audit:
            self._audit_convexity()

    def _ellipsoid_profile_bounds(self, s_max: float = 16.0, grid: int = 4000):
        """Tight Hessian bounds for a profile over a quadratic-form gauge.

        With gauge z^T G z, the composite Hessian is
        2 phi'(s) G + 4 phi''(s) (Gz)(Gz)^T and z^T G^2 z ranges over
        [lmin s, lmax s] at gauge level s, so the eigenvalue extremes at
        level s are bracketed by the scalar expressions below; beyond the
        last profile knot phi'' vanishes and the bounds are constant.
        """
        lmax = float(np.max(np.linalg.eigvalsh(self.domain.quadratic_form)))
        lmin = float(np.min(np.linalg.eigvalsh(self.domain.quadratic_form)))
        s = np.linspace(1e-9, s_max, grid)
        d1, d2 = self.profile.dphi(s), self.profile.d2phi(s)
        upper = 2.0 * d1 * lmax + 4.0 * np.maximum(d2, 0.0) * lmax**2 * s / lmax
        lower = 2.0 * d1 * lmin + 4.0 * np.minimum(d2, 0.0) * lmax * s
        # grid sampling of a smooth profile: widen slightly so h_hi is a
        # genuine upper bound and h_lo a genuine lower bound
        h_lo, h_hi = 0.999 * float(np.min(lower)), 1.002 * float(np.max(upper))
        if self.perturbation is not None:
            margin = _perturbation_hessian_norm(self.perturbation)
            h_lo, h_hi = h_lo - margin, h_hi + margin
        if h_lo <= 0:
            raise ConvexityLoss(f"profile composite has h_lo = {h_lo:.3e} <= 0")
        return h_lo, h_hi

    def _audit_convexity(self, samples: int = 400):
        rng = np.random.default_rng(11)
        Z = rng.standard_normal((samples, 2 * self.n))
        Z *= np.exp(rng.uniform(np.log(0.05), np.log(2.5), samples))[:, None] / np.linalg.norm(
            Z, axis=1
        )[:, None]
        ts = rng.uniform(0.0, 1.0, samples)
        eigs = np.linalg.eigvalsh(self.hess_nodes(ts, Z))
        if np.min(eigs) <= 0.0:
            raise ConvexityLoss(
                f"assembled Hessian loses positive-definiteness (min eig {np.min(eigs):.3e})"
            )

    def value_nodes(self, ts, Z):
        out = self.profile.phi(self.domain.gauge_values(Z))
        if self.perturbation is not None:
            out = out + self.perturbation.value_nodes(ts, Z)
        return out

    def grad_nodes(self, ts, Z):
        s = self.domain.gauge_values(Z)
        out = self.profile.dphi(s)[:, None] * self.domain.gauge_grads(Z)
        if self.perturbation is not None:
            out = out + self.perturbation.grad_nodes(ts, Z)
        return out

    def hess_nodes(self, ts, Z):
        s = self.domain.gauge_values(Z)
        gs = self.domain.gauge_grads(Z)
        out = self.profile.dphi(s)[:, None, None] * self.domain.gauge_hessians(Z)
        out += self.profile.d2phi(s)[:, None, None] * np.einsum("ia,ib->iab", gs, gs)
        if self.perturbation is not None:
            out = out + self.perturbation.hess_nodes(ts, Z)
        return out

    # -- conjugate via the scalar radial reduction -----------------------------
    # For an exact quadratic-form gauge z^T G z the conjugate reduces to the
    # one-dimensional problem  H*(w) = sup_{rho >= 0} sigma(w) sqrt(rho) - phi(rho)
    # with sigma(w)^2 = w^T G^{-1} w; the argmax is y = sqrt(rho) G^{-1} w / sigma.

    @property
    def _power_ellipsoid(self) -> bool:
        return (
            isinstance(self.domain, EllipsoidGauge)
            and isinstance(self.profile, PowerProfile)
            and self.perturbation is None
        )

    def conj_argmax_nodes(self, ts, W, warm=None):
        if isinstance(self.domain, EllipsoidGauge):
            y0 = self._radial_argmax(W)
            if self.perturbation is None:
                return y0
            # the perturbation is a small correction: undamped warm Newton
            # converges in two or three steps, with the damped solver as a
            # fallback
            Y = warm if warm is not None else y0
            target = 1e-11 * (1.0 + np.linalg.norm(W, axis=1))
            for _ in range(4):
                res = self.grad_nodes(ts, Y) - W
                if np.all(np.linalg.norm(res, axis=1) <= target):
                    return Y
                Y = Y - np.linalg.solve(self.hess_nodes(ts, Y), res[..., None])[..., 0]
            res = self.grad_nodes(ts, Y) - W
            if np.all(np.linalg.norm(res, axis=1) <= 1e-10 * (1.0 + np.linalg.norm(W, axis=1))):
                return Y
            return _batched_fenchel_argmax(self, ts, W, Y)
        return _batched_fenchel_argmax(self, ts, W, warm)

    def conj_value_nodes(self, ts, W, warm=None):
        if self._power_ellipsoid:
            # phi = a s^{p/2} conjugates to K sigma(w)^q, q = p/(p-1)
            a, p = self.profile.scale, self.profile.p
            q = p / (p - 1.0)
            K = (a * p) ** (-1.0 / (p - 1.0)) * (p - 1.0) / p
            sigma = np.sqrt(np.maximum(self.domain.support_sq(W), 0.0))
            return K * sigma**q
        return super().conj_value_nodes(ts, W, warm)

    def conj_hess_nodes(self, ts, W, warm=None):
        if self._power_ellipsoid:
            a, p = self.profile.scale, self.profile.p
            q = p / (p - 1.0)
            K = (a * p) ** (-1.0 / (p - 1.0)) * (p - 1.0) / p
            Ginv = self.domain._Ginv
            s2 = np.maximum(self.domain.support_sq(W), 1e-300)
            sigma = np.sqrt(s2)
            Gw = W @ Ginv
            out = (q * K * sigma ** (q - 2.0))[:, None, None] * Ginv
            out += (q * K * (q - 2.0) * sigma ** (q - 4.0))[:, None, None] * np.einsum(
                "ia,ib->iab", Gw, Gw
            )
            return out
        return super().conj_hess_nodes(ts, W, warm)

    def _radial_argmax(self, W):
        sigma = np.sqrt(np.maximum(self.domain.support_sq(W), 0.0))
        rho = self._solve_radial(sigma)
        scale = np.zeros_like(sigma)
        pos = sigma > 0.0
        scale[pos] = np.sqrt(rho[pos]) / sigma[pos]
        return scale[:, None] * (W @ self.domain._Ginv)

    def _solve_radial(self, sigma):
        """Solve sigma = 2 sqrt(rho) phi'(rho) for rho >= 0 (unique by convexity).

        Nonclosed profiles get a monotone lookup table rho(sigma) built once
        and a Newton polish per query.
        """
        prof = self.profile
        if isinstance(prof, PowerProfile):
            # closed form: sigma = p * scale * rho^{(p-1)/2}
            p, c = prof.p, prof.scale
            return (sigma / (p * c)) ** (2.0 / (p - 1.0))
        dmin = float(prof.dphi(np.array([0.0]))[0])
        if dmin <= 0:
            raise ConvexityLoss("profile slope vanishes at the origin; cap it first")
        if not hasattr(self, "_radial_table"):
            rho_grid = np.concatenate([[0.0], np.geomspace(1e-12, 1e6, 3000)])
            sig_grid = 2.0 * np.sqrt(rho_grid) * prof.dphi(rho_grid)
            self._radial_table = (sig_grid, rho_grid)
        sig_grid, rho_grid = self._radial_table
        rho = np.interp(sigma, sig_grid, rho_grid)
        scale = np.maximum(sigma, 1e-30)
        prev = np.inf
        for _ in range(12):
            gr = sigma - 2.0 * np.sqrt(rho) * prof.dphi(rho)
            worst = float(np.max(np.abs(gr) / scale))
            if worst <= 3e-13 or worst >= 0.5 * prev:  # converged or roundoff floor
                break
            prev = worst
            sq = np.sqrt(np.maximum(rho, 1e-300))
            gp = -(prof.dphi(rho) / sq + 2.0 * sq * prof.d2phi(rho))
            step = np.where(np.abs(gp) > 0, gr / gp, 0.0)
            rho = np.maximum(rho - step, 0.0)
        return rho


def profile_hamiltonian(
    domain: GaugeDomain,
    profile: Profile,
    smoothing: bool = True,
    perturbation: TimePeriodicBump | None = None,
    bounds: tuple[float, float] | None = None,
    audit: bool = True,
) -> GaugeProfileHamiltonian:
    """Compose a profile with a gauge, capping it inside the smoothing ball.

    Pass ``smoothing=False`` to keep the bare profile (required for the
    subquadratic capacity route, whose minimizers live near the origin).
    """
    if smoothing and not isinstance(profile, (LinearProfile, WindowProfile)):
        profile = CappedProfile(profile, domain.cap_level())
    return GaugeProfileHamiltonian(domain, profile, perturbation, bounds, audit)


# ---------------------------------------------------------------------------
# Fenchel conjugation
# ---------------------------------------------------------------------------


def _batched_fenchel_argmax(H: HamiltonianModel, ts, W, warm=None, max_iter: int = 50):
    """Damped Newton on grad H_t(y) = w, one system per node."""
    W = np.atleast_2d(W)
    ts = np.broadcast_to(np.asarray(ts, dtype=float), (W.shape[0],))
    if warm is None:
        Y = W / (2.0 * H.h_lo)
    else:
        Y = np.array(warm, dtype=float, copy=True)
    target = 1e-10 * (1.0 + np.linalg.norm(W, axis=1))
    res = H.grad_nodes(ts, Y) - W
    rn = np.linalg.norm(res, axis=1)
    for _ in range(max_iter):
        active = rn > target
        if not np.any(active):
            return Y
        Ha = H.hess_nodes(ts[active], Y[active])
        step = np.linalg.solve(Ha, res[active][..., None])[..., 0]
        lam = np.ones(step.shape[0])
        Ya, ra, wa, ta = Y[active], rn[active], W[active], ts[active]
        for _ in range(30):
            trial = Ya - lam[:, None] * step
            rtrial = np.linalg.norm(H.grad_nodes(ta, trial) - wa, axis=1)
            better = rtrial < ra
            Ya = np.where(better[:, None], trial, Ya)
            ra = np.where(better, rtrial, ra)
            lam = np.where(better, lam, lam * 0.5)
            if np.all(better):
                break
        Y[active], rn[active] = Ya, ra
        res = H.grad_nodes(ts, Y) - W
        rn = np.linalg.norm(res, axis=1)
    if np.any(rn > target):
        worst = float(np.max(rn / (1.0 + np.linalg.norm(W, axis=1))))
        raise NewtonDivergence(
            f"Fenchel Newton stalled, worst relative residual {worst:.3e} "
            "(check the convexity bounds)"
        )
    return Y


def fenchel_conjugate(H: HamiltonianModel, t: float, w, y0=None) -> tuple[float, np.ndarray]:
    """Fenchel conjugate H*_t(w) = max_y (w.y - H_t(y)) and its argmax.

    Solves grad H_t(y) = w by damped Newton from y0 (default w / (2 h_lo));
    by Legendre reciprocity the argmax is grad H*_t(w).

    Raises
    ------
    NewtonDivergence
        if the residual fails to reach 1e-10 (1 + |w|) within 50 iterations.
    """
    w = np.asarray(w, dtype=float)
    warm = None if y0 is None else np.asarray(y0, dtype=float)[None, :]
    Y = _batched_fenchel_argmax(H, np.array([t]), w[None, :], warm)
    y = Y[0]
    val = float(w @ y - H.value(t, y))
    return val, y


class _ConjugateModel(HamiltonianModel):
    """The Fenchel conjugate of a model, itself exposed as a model.

    Hessian bounds invert: h_hi^{-1} I <= hess H*_t <= h_lo^{-1} I.
    """

    def __init__(self, base: HamiltonianModel):
        self.base = base
        self.n = base.n
        self.h_lo, self.h_hi = 1.0 / base.h_hi, 1.0 / base.h_lo
        self.uniform_convexity = base.uniform_convexity
        self.time_dependent = base.time_dependent

    def value_nodes(self, ts, Z):
        return self.base.conj_value_nodes(ts, Z)

    def grad_nodes(self, ts, Z):
        return self.base.conj_grad_nodes(ts, Z)

    def hess_nodes(self, ts, Z):
        return self.base.conj_hess_nodes(ts, Z)


def conjugate_model(H: HamiltonianModel) -> HamiltonianModel:
    """H* as a HamiltonianModel (conjugating twice recovers H)."""
    return _ConjugateModel(H)


# ---------------------------------------------------------------------------
# Auditing helpers
# ---------------------------------------------------------------------------


def estimate_convexity_bounds(
    H: HamiltonianModel,
    r_lo: float = 5e-3,
    r_hi: float = 4.0,
    n_shells: int = 40,
    n_dirs: int = 48,
    n_times: int = 8,
    seed: int = 5,
) -> tuple[float, float]:
    """Sampled two-sided Hessian eigenvalue bounds on a log-radial grid."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_dirs, 2 * H.n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    radii = np.exp(np.linspace(np.log(r_lo), np.log(r_hi), n_shells))
    Z = (radii[:, None, None] * U[None, :, :]).reshape(-1, 2 * H.n)
    ts = np.arange(n_times) / n_times if H.time_dependent else np.zeros(1)
    lo, hi = np.inf, -np.inf
    for t in ts:
        eigs = np.linalg.eigvalsh(H.hess_nodes(np.full(Z.shape[0], t), Z))
        lo = min(lo, float(np.min(eigs)))
        hi = max(hi, float(np.max(eigs)))
    return lo, hi * 1.02  # small headroom on the upper bound for choose_N


def slope_nonresonance_check(
    domain: GaugeDomain, eta: float, tol: float = 1e-6, allow_compute: bool = True
) -> bool:
    """Whether the slope eta keeps its distance (> tol) from the action spectrum.

    Validates Hamiltonians equal to eta * gauge + const at infinity; such a
    slope must avoid the closed-characteristic actions of the boundary.
    """
    if domain.has_spectrum_oracle:
        spec = domain.spectrum_up_to(eta + 10.0 * tol + 1.0)
    elif allow_compute:
        from .capacity import shooting_spectrum

        spec = shooting_spectrum(domain, eta + 1.0)
    else:
        raise SpectrumUnavailable(
            "domain has no spectrum oracle and computation is disabled"
        )
    spec = np.asarray(spec)
    if spec.size == 0:
        return True
    return bool(np.min(np.abs(spec - eta)) > tol)


def window_model(
    domain: GaugeDomain,
    orbit_slope: float,
    amplitude: float = 4e-4,
    phase: float = 0.0,
    slope0: float = 0.15,
    slope_inf: float | None = None,
    width: float = 0.45,
    anchor: float = 2e-4,
) -> GaugeProfileHamiltonian:
    """The capacity-detecting configuration on a gauge domain.

    A near-flat profile that climbs once through ``orbit_slope`` (placed
    at the gauge-1 level) toward a nonresonant linear slope at infinity,
    plus a small time-periodic bump that breaks each circle of orbits
    into a nondegenerate min/max pair.  The orbit set is then the origin
    (index 0, small action) and one pair (indices 1 and 2, actions
    straddling ``orbit_slope + anchor``) per broken circle.
    """
    if slope_inf is None:
        slope_inf = orbit_slope + 0.86
    if not slope_nonresonance_check(domain, slope_inf, allow_compute=False):
        raise ConvexityLoss(f"slope at infinity {slope_inf} is resonant")
    prof = WindowProfile(
        slope0=slope0, slope_inf=slope_inf, width=width,
        orbit_slope=orbit_slope, anchor=anchor,
    )
    pert = TimePeriodicBump(domain, amplitude, phase=phase) if amplitude else None
    return GaugeProfileHamiltonian(domain, prof, perturbation=pert)
