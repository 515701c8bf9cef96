"""Morse, relative and Conley-Zehnder indices of periodic orbits.

Two independent routes are implemented and must agree on nondegenerate
orbits:

* the spectral route solves the generalized eigenvalue problem
  ``J phidot = mu S(t) phi`` with ``S(t) = hess H_t(x(t))`` in a Fourier
  Galerkin basis; the dual Morse index is the number of eigenvalues in
  (0, 1), the relative index adds n, and the nullity is the multiplicity
  of mu = 1.  Exactly 2n eigenvalues vanish (the constant loops).

* the path route integrates the linearized Hamiltonian flow
  ``Zdot = -J S(t) Z`` with a symplecticity-preserving implicit-midpoint
  composition and counts eigenvalue-1 crossings with their crossing-form
  signatures, normalized so that t -> e^{-eps J t} has index n for
  eps in (0, 2 pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, svdvals

from .convex_model import EllipsoidGauge, HamiltonianModel
from .errors import DegeneratePath, WindowTooSmall
from .loop_fourier import FourierLoop, standard_J

__all__ = [
    "OrbitSpectrum",
    "SymplecticPath",
    "orbit_spectrum",
    "morse_index_from_spectrum",
    "integrate_linearized_flow",
    "conley_zehnder",
    "conley_zehnder_of_orbit",
    "orbit_index_report",
    "characteristic_loop",
    "profile_index_shift",
    "ProfileShiftReport",
]


# ---------------------------------------------------------------------------
# Spectral route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitSpectrum:
    """Window of eigenvalues of J phidot = mu S(t) phi along an orbit."""

    n: int
    eigenvalues: np.ndarray  # sorted, within [-mu_max, mu_max]
    count_in_01: int
    count_eq_1: int
    count_eq_0: int
    mu_max: float
    cutoff: int
    one_tol: float


def _galerkin_blocks(n: int, K: int, Q: int, W_nodes: np.ndarray) -> np.ndarray:
    """Galerkin matrix of multiplication by W(t) on modes -K..K."""
    t = np.arange(Q) / Q
    modes = np.arange(-K, K + 1)
    ang = 2.0 * np.pi * np.outer(t, modes)
    c, s = np.cos(ang), np.sin(ang)
    J = standard_J(n)
    I = np.eye(2 * n)
    dim = (2 * K + 1) * 2 * n
    P = (np.einsum("jk,ab->jakb", c, I) - np.einsum("jk,ab->jakb", s, J)).reshape(
        Q, 2 * n, dim
    )
    WP = np.einsum("jab,jbK->jaK", W_nodes, P)
    B = np.einsum("jaK,jaL->KL", P, WP) / Q
    return 0.5 * (B + B.T)


def _spectrum_once(H: HamiltonianModel, orbit: FourierLoop, K: int, mu_max: float, one_tol: float):
    Q = max(64, 4 * K)
    t = np.arange(Q) / Q
    Z = orbit.evaluate(t)
    S = H.hess_nodes(t, Z)
    modes = np.arange(-K, K + 1)
    A = np.diag(np.repeat(2.0 * np.pi * modes, 2 * H.n))
    B = _galerkin_blocks(H.n, K, Q, S)
    mu = eigh(A, B, eigvals_only=True)
    window = mu[np.abs(mu) <= mu_max]
    zero_tol = 1e-9
    c01 = int(np.sum((mu > zero_tol) & (mu < 1.0 - one_tol)))
    c1 = int(np.sum(np.abs(mu - 1.0) <= one_tol))
    c0 = int(np.sum(np.abs(mu) <= zero_tol))
    return np.sort(window), c01, c1, c0


def orbit_spectrum(
    H: HamiltonianModel,
    orbit: FourierLoop,
    K: int | None = None,
    mu_max: float = 2.0,
    one_tol: float = 1e-7,
    audit: bool = True,
) -> OrbitSpectrum:
    """Eigenvalues of J phidot = mu hess H_t(x(t)) phi in a symmetric window.

    The Fourier cutoff K is chosen so the Galerkin basis resolves every
    eigenvalue with |mu| <= mu_max (|mu| ~ 2 pi k / h for mode k); the
    doubling audit raises WindowTooSmall when the counts have not
    converged.
    """
    if K is None:
        K = max(8, int(np.ceil(mu_max * H.h_hi / (2.0 * np.pi))) + 6)
    window, c01, c1, c0 = _spectrum_once(H, orbit, K, mu_max, one_tol)
    if audit:
        _, d01, d1, d0 = _spectrum_once(H, orbit, 2 * K, mu_max, one_tol)
        if (c01, c1, c0) != (d01, d1, d0):
            raise WindowTooSmall(
                f"eigenvalue counts changed under cutoff doubling: "
                f"{(c01, c1, c0)} vs {(d01, d1, d0)}"
            )
    return OrbitSpectrum(
        n=H.n,
        eigenvalues=window,
        count_in_01=c01,
        count_eq_1=c1,
        count_eq_0=c0,
        mu_max=mu_max,
        cutoff=K,
        one_tol=one_tol,
    )


def morse_index_from_spectrum(spec: OrbitSpectrum) -> tuple[int, int, int]:
    """(dual Morse index, relative index, nullity) from an orbit spectrum.

    dual index = #{mu in (0, 1)}; relative index = dual index + n;
    nullity = multiplicity of mu = 1.
    """
    return spec.count_in_01, spec.count_in_01 + spec.n, spec.count_eq_1


# ---------------------------------------------------------------------------
# Path route
# ---------------------------------------------------------------------------


@dataclass
class SymplecticPath:
    """Sampled solution of Zdot = -J S(t) Z with Z(0) = I."""

    n: int
    ts: np.ndarray
    Zs: np.ndarray  # (steps+1, 2n, 2n)
    drift: float  # max |Z^T J Z - J|
    hess_at: object = field(repr=False, default=None)  # t -> S(t)

    @property
    def endpoint_margin(self) -> float:
        return float(np.abs(np.linalg.det(np.eye(2 * self.n) - self.Zs[-1])))


_G1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_COMP = (_G1, 1.0 - 2.0 * _G1, _G1)  # 4th-order triple-jump composition


def _cayley_step(Z: np.ndarray, A: np.ndarray, h: float) -> np.ndarray:
    """Implicit midpoint for the linear system: exactly symplectic for A in sp(2n)."""
    I = np.eye(Z.shape[0])
    return np.linalg.solve(I - 0.5 * h * A, (I + 0.5 * h * A) @ Z)


def integrate_linearized_flow(
    H: HamiltonianModel, orbit: FourierLoop, steps: int | None = None
) -> SymplecticPath:
    """Integrate the linearized flow along an orbit over one period.

    Uses the triple-jump composition of the implicit midpoint rule; each
    substep is a Cayley transform of a Hamiltonian matrix, so the
    symplectic drift stays at roundoff level for any step count.
    """
    if steps is None:
        steps = int(max(2048, 24 * H.h_hi))
    n = H.n
    J = standard_J(n)
    h = 1.0 / steps
    # all midpoint times of all substeps, batched
    offs = []
    acc = 0.0
    for g in _COMP:
        offs.append(acc + 0.5 * g * h)
        acc += g * h
    tmids = (np.arange(steps)[:, None] * h + np.array(offs)[None, :]).ravel()
    Smids = H.hess_nodes(np.mod(tmids, 1.0), orbit.evaluate(tmids))
    Amids = -np.einsum("ab,jbc->jac", J, Smids)

    def hess_at(t):
        tt = np.atleast_1d(np.mod(t, 1.0))
        return H.hess_nodes(tt, orbit.evaluate(tt))[0]

    Z = np.eye(2 * n)
    Zs = np.empty((steps + 1, 2 * n, 2 * n))
    Zs[0] = Z
    k = 0
    for j in range(steps):
        for g in _COMP:
            Z = _cayley_step(Z, Amids[k], g * h)
            k += 1
        Zs[j + 1] = Z
    sel = np.linspace(0, steps, 33).astype(int)
    drift = float(
        np.max(np.abs(np.einsum("jba,bc,jcd->jad", Zs[sel], J, Zs[sel]) - J))
    )
    return SymplecticPath(
        n=n, ts=np.linspace(0.0, 1.0, steps + 1), Zs=Zs, drift=drift, hess_at=hess_at
    )


def _sigma_min_I_minus(Z: np.ndarray) -> float:
    return float(svdvals(np.eye(Z.shape[0]) - Z)[-1])


def conley_zehnder(path: SymplecticPath, endpoint_margin: float = 1e-8) -> int:
    """Conley-Zehnder index by counting eigenvalue-1 crossings.

    The crossing form at time t is xi -> omega(Z xi, Zdot xi) on
    ker(Z(t) - I); for paths generated by convex Hamiltonians it equals
    (Z xi) . S(t) (Z xi) and is positive definite, so every interior
    crossing adds its kernel dimension.  The t = 0 crossing (full kernel)
    contributes half its signature, which fixes the normalization
    CZ(e^{-eps J t}) = n for eps in (0, 2 pi).

    Raises DegeneratePath when |det(I - Z(1))| <= endpoint_margin.
    """
    if path.endpoint_margin <= endpoint_margin:
        raise DegeneratePath(
            f"endpoint nondegeneracy margin {path.endpoint_margin:.3e} too small"
        )
    n = path.n
    J = standard_J(n)
    steps = path.ts.size - 1
    h = path.ts[1] - path.ts[0]

    # half signature of the t = 0 crossing form omega(xi, Zdot(0) xi) = xi . S(0) xi
    S0 = path.hess_at(0.0)
    lam0 = np.linalg.eigvalsh(0.5 * (S0 + S0.T))
    sig0 = int(np.sum(lam0 > 0)) - int(np.sum(lam0 < 0))
    if sig0 % 2 != 0:
        raise DegeneratePath("odd signature at t = 0; index undefined")
    total = sig0 // 2

    # locate interior crossings: local minima of sigma_min(I - Z(t))
    sig = np.array([_sigma_min_I_minus(Z) for Z in path.Zs])
    slope = float(np.max([np.linalg.norm(path.hess_at(t), 2) for t in (0.0, 0.33, 0.66)]))
    thresh = 4.0 * slope * h + 1e-9
    pad = 2  # skip the t = 0 crossing itself
    candidates = []
    for j in range(pad, steps + 1):
        if sig[j] < thresh:
            lo = max(j - 1, 0)
            if sig[j] <= sig[lo] and (j == steps or sig[j] <= sig[j + 1]):
                if candidates and j - candidates[-1] <= 1:
                    continue
                candidates.append(j)

    crossings: list[tuple[float, np.ndarray]] = []
    for j in candidates:
        j_lo = max(j - 1, 0)
        crossings.extend(
            _scan_bracket(path, j_lo, path.ts[j_lo], path.ts[min(j + 1, steps)], slope)
        )
    crossings.sort(key=lambda c: c[0])

    last_t = -1.0
    for t_star, Z_star in crossings:
        if t_star < 2.0 * h:  # the t = 0 crossing, already counted
            continue
        if t_star - last_t < 1e-9:  # same crossing seen from two brackets
            continue
        last_t = t_star
        sv = svdvals(np.eye(2 * n) - Z_star)
        ztol = max(1e-9, 1e-8 * np.linalg.norm(Z_star, 2))
        ker_dim = int(np.sum(sv < ztol))
        if ker_dim == 0:
            continue
        _, _, Vt = np.linalg.svd(np.eye(2 * n) - Z_star)
        xi = Vt[2 * n - ker_dim :].T  # kernel basis, columns
        A = -J @ path.hess_at(t_star)
        G = (Z_star @ xi).T @ J @ (A @ Z_star @ xi)
        G = 0.5 * (G + G.T)
        lam = np.linalg.eigvalsh(G)
        scale = max(np.max(np.abs(lam)), 1e-30)
        total += int(np.sum(lam > 1e-8 * scale)) - int(np.sum(lam < -1e-8 * scale))
    return total


def _scan_bracket(
    path: SymplecticPath, j_lo: int, t_lo: float, t_hi: float, slope: float, n_scan: int = 240
):
    """Resolve every crossing inside one coarse bracket.

    A single coarse dip can hide a cluster of nearby crossings (orbits
    close to a degenerate family have eigenvalue-1 passages separated by
    the symmetry-breaking scale), so the bracket is swept at fine
    resolution and each fine local minimum is golden-refined; minima that
    neither reach the kernel tolerance nor stay above the resolution
    band are ambiguous and rejected.
    """
    J = standard_J(path.n)
    micro_h = (t_hi - t_lo) / (4 * n_scan)
    ts = np.linspace(t_lo, t_hi, n_scan + 1)
    Z = path.Zs[j_lo].copy()
    sig = np.empty(n_scan + 1)
    sig[0] = _sigma_min_I_minus(Z)
    t = t_lo
    Zg = [Z.copy()]
    for i in range(1, n_scan + 1):
        while t < ts[i] - 1e-15:
            hh = min(micro_h, ts[i] - t)
            A = -J @ path.hess_at(t + 0.5 * hh)
            Z = _cayley_step(Z, A, hh)
            t += hh
        sig[i] = _sigma_min_I_minus(Z)
        Zg.append(Z.copy())
    res_band = 3.0 * slope * (t_hi - t_lo) / n_scan
    out = []
    for i in range(1, n_scan):
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1]:
            t_star, Z_star = _refine_on(path, ts[i - 1], ts[i + 1], Zg[i - 1], micro_h)
            s_star = _sigma_min_I_minus(Z_star)
            ztol = max(1e-9, 1e-8 * np.linalg.norm(Z_star, 2))
            if s_star < ztol:
                out.append((t_star, Z_star))
            elif s_star < res_band:
                raise DegeneratePath(
                    f"unresolved eigenvalue-1 cluster near t = {t_star:.6f}"
                )
    return out


def _refine_on(path: SymplecticPath, a: float, b: float, Z_a: np.ndarray, micro_h: float):
    """Golden-section minimization of sigma_min(I - Z(t)) starting at (a, Z_a)."""
    J = standard_J(path.n)
    t0, Z0 = a, Z_a.copy()  # frozen anchor for the local propagation

    def zval(t):
        Z = Z0.copy()
        tau = t0
        while tau < t - 1e-16:
            hh = min(micro_h, t - tau)
            A = -J @ path.hess_at(tau + 0.5 * hh)
            Z = _cayley_step(Z, A, hh)
            tau += hh
        return Z

    phi = (np.sqrt(5.0) - 1.0) / 2.0
    c1, c2 = b - phi * (b - a), a + phi * (b - a)
    Z1, Z2 = zval(c1), zval(c2)
    f1, f2 = _sigma_min_I_minus(Z1), _sigma_min_I_minus(Z2)
    for _ in range(60):
        if f1 < f2:
            b, c2, f2, Z2 = c2, c1, f1, Z1
            c1 = b - phi * (b - a)
            Z1 = zval(c1)
            f1 = _sigma_min_I_minus(Z1)
        else:
            a, c1, f1, Z1 = c1, c2, f2, Z2
            c2 = a + phi * (b - a)
            Z2 = zval(c2)
            f2 = _sigma_min_I_minus(Z2)
        if b - a < 1e-13:
            break
    return (c1, Z1) if f1 <= f2 else (c2, Z2)


def conley_zehnder_of_orbit(H: HamiltonianModel, orbit: FourierLoop, steps=None) -> int:
    return conley_zehnder(integrate_linearized_flow(H, orbit, steps))


def orbit_index_report(H: HamiltonianModel, orbit: FourierLoop):
    """Both index routes on one orbit: (dual, relative, nullity, cz, agree)."""
    spec = orbit_spectrum(H, orbit)
    dual, rel, null = morse_index_from_spectrum(spec)
    if null > 0:
        return {"dual_index": dual, "relative_index": rel, "nullity": null,
                "cz_index": None, "methods_agree": None}
    cz = conley_zehnder_of_orbit(H, orbit)
    return {"dual_index": dual, "relative_index": rel, "nullity": null,
            "cz_index": cz, "methods_agree": bool(cz == rel)}


# ---------------------------------------------------------------------------
# Closed characteristics and the profile reparametrization law
# ---------------------------------------------------------------------------


def characteristic_loop(
    domain: EllipsoidGauge, plane: int | None = None, cover: int = 1
) -> tuple[FourierLoop, float]:
    """The coordinate-plane closed characteristic of an ellipsoid as a
    1-periodic loop, together with its action T = cover * pi * r_i^2.

    The loop is the pure mode-``cover`` circle of gauge level 1 in the
    chosen (q_i, p_i) plane (default: the shortest axis).
    """
    radii = domain.radii
    i = int(np.argmin(radii)) if plane is None else int(plane)
    v = np.zeros(2 * domain.n)
    v[i] = radii[i]
    loop = FourierLoop.from_modes(domain.n, {cover: v})
    return loop, cover * np.pi * radii[i] ** 2


@dataclass(frozen=True)
class ProfileShiftReport:
    """Index/nullity of one closed characteristic under different profiles."""

    baseline_index: int
    baseline_nullity: int
    results: dict  # label -> dict(index, nullity, shift, nullity_drop, d2phi_at_1)


def profile_index_shift(
    domain: EllipsoidGauge,
    T: float,
    profiles: dict,
    orbit: FourierLoop | None = None,
) -> ProfileShiftReport:
    """Compare the dual index/nullity of a closed characteristic under
    profile reparametrizations phi with phi'(1) = T.

    The baseline is the linear profile T s (the orbit Hessian is
    T hess(gauge)); each profile perturbs it by the rank-one spatial term
    phi''(1) grad(gauge) (x) grad(gauge).  Expected law: the index gains
    +1 exactly when phi''(1) > 0, and the nullity drops by one exactly
    when phi''(1) != 0.
    """
    from .convex_model import GaugeProfileHamiltonian, LinearProfile

    if orbit is None:
        orbit, T_min = characteristic_loop(domain)
        if abs(T - T_min) > 1e-12:
            raise ValueError(f"T={T} is not the minimal action {T_min}")
    base = GaugeProfileHamiltonian(domain, LinearProfile(T), audit=False)
    spec0 = orbit_spectrum(base, orbit)
    ind0, _, null0 = morse_index_from_spectrum(spec0)
    results = {}
    for label, prof in profiles.items():
        d1 = float(prof.dphi(np.array([1.0]))[0])
        if abs(d1 - T) > 1e-10:
            raise ValueError(f"profile {label!r} has phi'(1) = {d1}, need {T}")
        Hp = GaugeProfileHamiltonian(domain, prof, audit=False)
        spec = orbit_spectrum(Hp, orbit)
        ind, _, null = morse_index_from_spectrum(spec)
        results[label] = {
            "index": ind,
            "nullity": null,
            "shift": ind - ind0,
            "nullity_drop": null0 - null,
            "d2phi_at_1": float(prof.d2phi(np.array([1.0]))[0]),
        }
    return ProfileShiftReport(baseline_index=ind0, baseline_nullity=null0, results=results)
