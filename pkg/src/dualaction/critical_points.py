"""Locating critical points of the reduced dual functional and lifting
them to periodic orbits.

``find_critical_points`` runs a multistart Newton (with symmetry-informed
circle seeds on gauge domains) on the reduced gradient, deduplicates the
hits modulo time shift, and assembles a full ``OrbitRecord`` per orbit:
translation lift, action, dual/relative Morse data from the eigenvalue
route, Conley-Zehnder index from the path route, and residual audits
including an independent shooting re-integration.

``global_min_dual`` minimizes the dual functional of a subquadratic
(p-homogeneous, 1 < p < 2) gauge profile over the truncated loop space;
its negative minimum feeds ``period_from_min``, which recovers the
minimal closed-characteristic action through

    T = (p/2) ((2/(p-2)) Psi_min)^{(p-2)/p},

valid for the normalized profile phi(s) = s^{p/2}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize, root

from .action_functionals import direct_action, lift_to_orbit, orbit_residual_l2
from .convex_model import (
    GaugeDomain,
    GaugeProfileHamiltonian,
    HamiltonianModel,
    PowerProfile,
    profile_hamiltonian,
)
from .errors import BadSign, DegenerateOrbit, NoConvergence, NotCritical, OnlyConstantFound
from .loop_fourier import FourierLoop, LoopGrid, loop_distance_mod_shift, rotation
from .reduction import ReducedManifold, SpectralDual
from .spectral_index import conley_zehnder_of_orbit, morse_index_from_spectrum, orbit_spectrum

__all__ = [
    "OrbitRecord",
    "SearchConfig",
    "find_critical_points",
    "global_min_dual",
    "period_from_min",
    "shooting_return_gap",
    "normalize_phase",
]


@dataclass
class OrbitRecord:
    """A critical point of the reduced dual functional and its orbit data."""

    head: np.ndarray
    loop: FourierLoop  # zero-mean critical loop
    v0: np.ndarray  # translation lift
    orbit: FourierLoop  # loop + v0, the periodic Hamiltonian orbit
    action: float  # psi value = direct action of the orbit
    morse_index: int  # dual Morse index (eigenvalue route)
    nullity: int
    relative_index: int  # morse_index + n
    cz_index: int | None  # path route; None when degenerate
    degenerate: bool
    reduced_index: int
    reduced_nullity: int
    residuals: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "action": self.action,
            "v0": self.v0.tolist(),
            "morse_index": self.morse_index,
            "nullity": self.nullity,
            "relative_index": self.relative_index,
            "cz_index": self.cz_index,
            "degenerate": self.degenerate,
            "reduced_index": self.reduced_index,
            "reduced_nullity": self.reduced_nullity,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "mean": self.orbit.mean.tolist(),
            "max_mode": self.orbit.max_mode(),
        }


@dataclass
class SearchConfig:
    """Multistart search knobs; identical configs give identical results."""

    n_random: int = 6
    phase_seeds: int = 8
    seed_levels: tuple = (1.0,)
    seed_scale: float = 1.0
    rng_seed: int = 0
    grad_tol: float = 1e-9
    dedup_action_tol: float = 1e-9
    dedup_loop_tol: float = 1e-5
    expect_nondegenerate: bool = False
    shooting_check: bool = True
    nullity_tol: float = 1e-7


def normalize_phase(x: FourierLoop, tol: float = 1e-12) -> FourierLoop:
    """Time-shift an autonomous critical loop to a canonical phase.

    The dominant plane of the k = 1 coefficient is rotated onto its
    positive q-axis, making deduplication and downstream complex
    construction deterministic.
    """
    v = x.coeff(1)
    n = x.n
    planes = v[:n] ** 2 + v[n:] ** 2
    j = int(np.argmax(planes))
    if planes[j] < tol**2:
        return x
    theta = np.arctan2(v[n + j], v[j]) / (2.0 * np.pi)
    return x.time_shift(theta)


def shooting_return_gap(
    H: HamiltonianModel, orbit: FourierLoop, rtol: float = 1e-12, atol: float = 1e-13
) -> float:
    """|flow_1(x(0)) - x(0)| from an independent ODE re-integration."""
    z0 = orbit.evaluate(0.0)

    def rhs(t, z):
        return H.vector_field(t % 1.0, z)

    sol = solve_ivp(rhs, (0.0, 1.0), z0, method="DOP853", rtol=rtol, atol=atol)
    return float(np.linalg.norm(sol.y[:, -1] - z0))


def _seed_list(R: ReducedManifold, config: SearchConfig, rng) -> list[np.ndarray]:
    seeds = [np.zeros(R.head_dim)]
    if R.head_dim == 0:
        return seeds
    n = R.H.n
    # circle seeds: pure mode-1 loops e^{-2 pi J t} v, phase-swept; on gauge
    # domains v is scaled onto the expected energy shell (gauge level 1)
    base_dirs = []
    for j in range(n):
        u = np.zeros(2 * n)
        u[j] = 1.0
        base_dirs.append(u)
    for _ in range(max(0, n - 1)):
        u = rng.standard_normal(2 * n)
        base_dirs.append(u / np.linalg.norm(u))
    domain = getattr(R.H, "domain", None)
    for level in config.seed_levels:
        for u in base_dirs:
            if domain is not None:
                u = u / np.sqrt(max(domain.gauge_eval(u), 1e-12)) * np.sqrt(level)
            else:
                u = u * config.seed_scale * np.sqrt(level)
            for i in range(config.phase_seeds):
                th = i / config.phase_seeds
                v = rotation(n, -2.0 * np.pi * th)[()] @ u
                head = np.zeros(R.head_dim)
                head[: 2 * n] = v  # mode-1 block is first in the head layout
                seeds.append(head)
    for _ in range(config.n_random):
        seeds.append(config.seed_scale * rng.standard_normal(R.head_dim))
    return seeds


def _newton_polish(R: ReducedManifold, head: np.ndarray, tol: float, iters: int = 15):
    for _ in range(iters):
        g = R.gradient(head)
        if R.h1_norm(g, R.head_idx) < tol:
            break
        Hm = R.hessian(head)
        step, *_ = np.linalg.lstsq(Hm, g, rcond=1e-12)
        head = head - step
    return head


def _record_from_head(
    R: ReducedManifold, head: np.ndarray, config: SearchConfig
) -> OrbitRecord:
    H = R.H
    full = R.solve_tail(head)
    x = R.full_loop(full)
    if not H.time_dependent:
        x = normalize_phase(x)
        head = R.grid.to_vector(x)[R.head_idx]
        full = R.solve_tail(head)
        x = R.full_loop(full)
    grad_norm = R.gradient_norm(head)
    if grad_norm > config.grad_tol:
        raise NotCritical(f"refined point has gradient {grad_norm:.2e}")
    v0, orbit = lift_to_orbit(H, x, grad_tol=10 * config.grad_tol)
    psi_val = R.dual.value(full)
    phi_val = direct_action(H, orbit)
    spec = orbit_spectrum(H, orbit)
    dual_idx, rel_idx, nullity = morse_index_from_spectrum(spec)
    degenerate = nullity > 0
    cz = None if degenerate else conley_zehnder_of_orbit(H, orbit)
    red_idx, red_null, _ = R.index_nullity(head, zero_tol=config.nullity_tol)
    residuals = {
        "dual_gradient": grad_norm,
        "tail_gradient": R.tail_gradient_norm(full),
        "orbit_ode_l2": orbit_residual_l2(H, orbit),
        "action_gap": abs(psi_val - phi_val),
    }
    if config.shooting_check:
        residuals["shooting_gap"] = shooting_return_gap(H, orbit)
    return OrbitRecord(
        head=head,
        loop=x,
        v0=v0,
        orbit=orbit,
        action=psi_val,
        morse_index=dual_idx,
        nullity=nullity,
        relative_index=rel_idx,
        cz_index=cz,
        degenerate=degenerate,
        reduced_index=red_idx,
        reduced_nullity=red_null,
        residuals=residuals,
    )


def find_critical_points(
    R: ReducedManifold, config: SearchConfig | None = None
) -> tuple[list[OrbitRecord], dict]:
    """Multistart Newton search for all critical points of psi at desk scale.

    Returns the deduplicated orbit records sorted by (index, action) and a
    meta dict with per-seed convergence info.
    """
    config = config or SearchConfig()
    rng = np.random.default_rng(config.rng_seed)
    seeds = _seed_list(R, config, rng)
    hits: list[np.ndarray] = []
    failures = 0
    for seed in seeds:
        if R.head_dim == 0:
            hits.append(seed)
            continue
        try:
            sol = root(
                R.gradient, seed, jac=lambda h: R.hessian(h), method="hybr",
                options={"xtol": 1e-13},
            )
            head = _newton_polish(R, sol.x, config.grad_tol)
            if R.gradient_norm(head) > config.grad_tol:
                raise NoConvergence("newton stalled")
            hits.append(head)
        except (NoConvergence, NotCritical, np.linalg.LinAlgError):
            failures += 1
            continue
    records: list[OrbitRecord] = []
    for head in hits:
        try:
            rec = _record_from_head(R, head, config)
        except (NotCritical, NoConvergence):
            failures += 1
            continue
        if not _is_duplicate(rec, records, R.H.time_dependent, config):
            records.append(rec)
    if config.expect_nondegenerate:
        for rec in records:
            if rec.nullity > 0:
                raise DegenerateOrbit(
                    f"orbit at action {rec.action:.6f} has nullity {rec.nullity}"
                )
    records.sort(key=lambda r: (r.morse_index, r.action))
    meta = {"seeds": len(seeds), "failures": failures, "found": len(records)}
    return records, meta


def _is_duplicate(rec, records, time_dependent, config) -> bool:
    for other in records:
        if abs(rec.action - other.action) > max(
            config.dedup_action_tol, 1e-9 * abs(rec.action)
        ):
            continue
        if time_dependent:
            d = np.sqrt((rec.loop - other.loop).l2_norm_sq())
        else:
            d = loop_distance_mod_shift(rec.loop, other.loop)
        if d < config.dedup_loop_tol:
            return True
    return False


# ---------------------------------------------------------------------------
# Global dual minimization (subquadratic route)
# ---------------------------------------------------------------------------


def global_min_dual(
    domain: GaugeDomain,
    p: float,
    M: int = 12,
    Q: int | None = None,
    n_starts: int = 8,
    rng_seed: int = 0,
    _retry: bool = True,
) -> tuple[float, FourierLoop, dict]:
    """Global minimum of the dual functional of the profile s^{p/2} over the
    truncated loop space, by multistart trust-region Newton with mode-1
    circle seeding.

    The minimum is negative and attained at a non-constant loop carrying
    the minimal closed characteristic.  Returns (Psi_min, minimizer,
    trace dict).
    """
    if not 1.0 < p < 2.0:
        raise ValueError("need p in (1, 2)")
    H = profile_hamiltonian(domain, PowerProfile(p), smoothing=False, audit=False)
    grid = LoopGrid(domain.n, M, Q)
    obj = SpectralDual(H, grid)
    rng = np.random.default_rng(rng_seed)
    n = domain.n
    starts = []
    levels = np.array([0.002, 0.02, 0.2, 1.0])
    for j in range(n):
        u = np.zeros(2 * n)
        u[j] = 1.0
        for s in levels:
            starts.append((u, s))
    while len(starts) < n_starts * max(1, n):
        u = rng.standard_normal(2 * n)
        u /= np.linalg.norm(u)
        starts.append((u, float(rng.choice(levels))))
    best_val, best_vec = np.inf, None
    max_h1 = 0.0
    for u, level in starts[: max(n_starts, 4 * n)]:
        v = u / np.sqrt(max(domain.gauge_eval(u), 1e-12)) * np.sqrt(level)
        x0 = np.zeros(grid.dim)
        x0[grid.nm // 2 * 2 * n : (grid.nm // 2 + 1) * 2 * n] = v  # mode k=1 block
        res = minimize(
            obj.value, x0, jac=obj.gradient, hess=obj.hessian,
            method="trust-exact", options={"gtol": 1e-10, "maxiter": 200},
        )
        max_h1 = max(max_h1, float(np.sqrt(np.sum(grid.h1_weights * res.x**2))))
        if res.fun < best_val:
            best_val, best_vec = float(res.fun), res.x
    minimizer = grid.to_loop(best_vec)
    if best_val >= 0.0 or np.sqrt(minimizer.l2_norm_sq()) < 1e-7:
        if _retry:
            return global_min_dual(
                domain, p, M=M, Q=Q, n_starts=2 * n_starts,
                rng_seed=rng_seed + 1, _retry=False,
            )
        raise OnlyConstantFound(
            "all starts collapsed to the constant loop; enlarge the mode-1 seeds"
        )
    trace = {"max_h1_norm": max_h1, "critical_h1_norm": float(np.sqrt(minimizer.h1_norm_sq()))}
    return best_val, minimizer, trace


def period_from_min(psi_min: float, p: float) -> float:
    """Minimal-period formula T = (p/2) ((2/(p-2)) Psi_min)^{(p-2)/p}.

    Valid for the normalized p-homogeneous profile phi(s) = s^{p/2};
    strictly increasing in Psi_min for fixed p.
    """
    if not 1.0 < p < 2.0:
        raise ValueError("need p in (1, 2)")
    if psi_min >= 0.0:
        raise BadSign(f"dual minimum must be negative, got {psi_min:.3e}")
    base = (2.0 / (p - 2.0)) * psi_min
    return (p / 2.0) * base ** ((p - 2.0) / p)
