"""Action spectrum and SH-capacity of smooth convex bodies.

The capacity of a convex body equals the minimal action of closed
characteristics on its boundary.  Two independent computations are
provided:

* the dual-minimization route (``sh_capacity``): minimize the dual
  functional of the subquadratic profile s^{p/2} and convert the
  negative minimum into the minimal period, for several p and many
  starts, demanding consensus;

* the shooting route (``shooting_spectrum``): locate primitive closed
  orbits of the gauge's Hamiltonian vector field on the boundary by
  return-map minimization and Gauss-Newton refinement, then append
  integer iterates.  The action of a closed characteristic equals its
  period under the gauge flow on the unit level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .convex_model import GaugeDomain
from .critical_points import global_min_dual, period_from_min
from .errors import NoConsensus
from .loop_fourier import standard_J

__all__ = [
    "SpectrumReport",
    "SpectrumEntry",
    "sh_capacity",
    "shooting_spectrum",
    "action_spectrum_window",
]


@dataclass(frozen=True)
class SpectrumEntry:
    action: float
    provenance: tuple  # e.g. ("shooting", "primitive"), ("dual-min",), ("oracle",)


@dataclass
class SpectrumReport:
    """Computed action spectrum of a domain boundary up to a window."""

    domain: str
    T_max: float
    entries: list = field(default_factory=list)

    @property
    def actions(self) -> np.ndarray:
        return np.array(sorted(e.action for e in self.entries))

    @property
    def min_action(self) -> float:
        return float(self.actions[0])

    @property
    def capacity(self) -> float:
        return self.min_action

    def to_json(self) -> dict:
        return {
            "domain": self.domain,
            "T_max": self.T_max,
            "actions": self.actions.tolist(),
            "min_action": self.min_action,
            "capacity": self.capacity,
            "entries": [
                {"action": e.action, "provenance": list(e.provenance)}
                for e in sorted(self.entries, key=lambda e: e.action)
            ],
        }


# ---------------------------------------------------------------------------
# Dual-minimization capacity
# ---------------------------------------------------------------------------


def sh_capacity(
    domain: GaugeDomain,
    p_values=(1.5, 4.0 / 3.0),
    n_starts: int = 8,
    M: int = 16,
    rel_tol: float = 1e-6,
    rng_seed: int = 0,
) -> tuple[float, dict]:
    """Capacity of a convex body as the consensus minimal period.

    Runs the dual minimization for every p in ``p_values`` with
    ``n_starts`` starts each and converts through the period formula;
    all runs must agree to ``rel_tol`` relative.
    """
    candidates = []
    for i, p in enumerate(p_values):
        psi_min, _, trace = global_min_dual(
            domain, p, M=M, n_starts=n_starts, rng_seed=rng_seed + 17 * i
        )
        candidates.append((p, period_from_min(psi_min, p), trace))
    periods = np.array([c[1] for c in candidates])
    ref = float(np.median(periods))
    if np.max(np.abs(periods - ref)) > rel_tol * max(1.0, abs(ref)):
        raise NoConsensus(
            f"capacity runs disagree: {periods.tolist()}", candidates=periods.tolist()
        )
    meta = {
        "runs": [{"p": p, "period": T} for p, T, _ in candidates],
        "consensus": ref,
        "ps_traces": [c[2] for c in candidates],
    }
    return ref, meta


# ---------------------------------------------------------------------------
# Shooting enumeration of closed characteristics
# ---------------------------------------------------------------------------


def _gauge_rhs(domain: GaugeDomain):
    J = standard_J(domain.n)

    def rhs(t, z):
        return -J @ domain.gauge_grad(z)

    return rhs


def _flow(domain, z0, T, rtol=1e-12, atol=1e-13, dense=False):
    sol = solve_ivp(
        _gauge_rhs(domain), (0.0, T), z0, method="DOP853",
        rtol=rtol, atol=atol, dense_output=dense,
    )
    return sol


def _refine_orbit(domain: GaugeDomain, z0: np.ndarray, T0: float):
    """Gauss-Newton polish of a candidate closed orbit (z0, T0).

    Residuals: flow_T(z) - z, the gauge level constraint, and a phase
    anchor along the initial velocity.  The system is solved in the
    least-squares sense because homogeneity and time shift make exact
    solutions non-isolated.
    """
    v_ref = _gauge_rhs(domain)(0.0, z0)
    v_ref /= np.linalg.norm(v_ref)
    z_ref = z0.copy()

    def resid(u):
        z, T = u[:-1], u[-1]
        if T <= 0:
            return np.full(z.size + 2, 1e3)
        end = _flow(domain, z, T).y[:, -1]
        return np.concatenate(
            [end - z, [10.0 * (domain.gauge_eval(z) - 1.0)], [(z - z_ref) @ v_ref]]
        )

    sol = least_squares(
        resid, np.append(z0, T0), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=80,
    )
    z, T = sol.x[:-1], sol.x[-1]
    ok = np.linalg.norm(resid(sol.x)[: z.size]) < 1e-9 and T > 1e-6
    return ok, z, float(T)


def _candidate_returns(domain, z0, T_max, samples=4000):
    """Times where the flow from z0 comes back near z0 (coarse scan)."""
    sol = _flow(domain, z0, T_max, rtol=1e-10, atol=1e-11, dense=True)
    ts = np.linspace(0.0, T_max, samples)
    Zs = sol.sol(ts)
    d = np.linalg.norm(Zs - z0[:, None], axis=0)
    out = []
    scale = np.linalg.norm(z0)
    for j in range(2, samples - 1):
        if d[j] <= d[j - 1] and d[j] <= d[j + 1] and d[j] < 0.2 * scale and ts[j] > 1e-3:
            out.append(ts[j])
    return out


def shooting_spectrum(
    domain: GaugeDomain,
    T_max: float,
    n_seeds: int = 6,
    rng_seed: int = 0,
    dedup_tol: float = 1e-7,
) -> list[float]:
    """Primitive closed-characteristic actions up to T_max by shooting.

    Seeds start on the gauge-1 level (coordinate planes first, then
    random); non-returning (quasi-periodic) seeds are skipped.  Returns
    the sorted list of distinct primitive actions.
    """
    n = domain.n
    rng = np.random.default_rng(rng_seed)
    seeds = []
    for j in range(n):
        u = np.zeros(2 * n)
        u[j] = 1.0
        seeds.append(u)
    while len(seeds) < max(n_seeds, n + 1):
        u = rng.standard_normal(2 * n)
        seeds.append(u)
    primitives: list[float] = []
    for u in seeds:
        z0 = u / np.sqrt(max(domain.gauge_eval(u), 1e-12))
        for T0 in _candidate_returns(domain, z0, min(T_max * 1.05 + 0.5, 4 * T_max)):
            ok, _, T = _refine_orbit(domain, z0, T0)
            if not ok or T > T_max + 1e-9:
                continue
            # keep the primitive period: divide out near-integer multiples
            known_multiple = False
            for known in primitives:
                m = T / known
                if abs(m - round(m)) < 1e-6 and round(m) >= 1:
                    known_multiple = True
                    break
            if not known_multiple:
                primitives.append(T)
            break  # the first refined return of a seed is its primitive
    primitives.sort()
    # a long period that is an iterate of a shorter one is not primitive
    out = []
    for T in primitives:
        if not any(abs(T / S - round(T / S)) < 1e-6 for S in out):
            out.append(T)
    return out


def action_spectrum_window(
    domain: GaugeDomain,
    T_max: float,
    use_dual_min: bool = True,
    use_oracle: bool = True,
    rng_seed: int = 0,
    dedup_tol: float = 1e-7,
) -> SpectrumReport:
    """Enumerate the action spectrum up to T_max with per-entry provenance.

    Closed characteristics are found by shooting; integer iterates are
    appended (the spectrum is invariant under multiplication by positive
    integers); the dual-minimization route contributes the minimal
    action; oracle actions are merged when the domain has them.
    """
    report = SpectrumReport(domain=type(domain).__name__, T_max=T_max)
    actions: list[SpectrumEntry] = []

    primitives = shooting_spectrum(domain, T_max, rng_seed=rng_seed)
    for T in primitives:
        m = 1
        while m * T <= T_max + 1e-9:
            tag = "primitive" if m == 1 else f"iterate x{m}"
            actions.append(SpectrumEntry(m * T, ("shooting", tag)))
            m += 1

    if use_dual_min:
        cap, _ = sh_capacity(domain, rng_seed=rng_seed)
        if cap <= T_max + 1e-9:
            actions.append(SpectrumEntry(cap, ("dual-min",)))

    if use_oracle and domain.has_spectrum_oracle:
        for a in domain.spectrum_up_to(T_max):
            actions.append(SpectrumEntry(float(a), ("oracle",)))

    # merge within tolerance, concatenating provenance
    actions.sort(key=lambda e: e.action)
    merged: list[SpectrumEntry] = []
    for e in actions:
        if merged and abs(e.action - merged[-1].action) < dedup_tol:
            prev = merged.pop()
            merged.append(SpectrumEntry(prev.action, prev.provenance + e.provenance))
        else:
            merged.append(e)
    report.entries = merged
    return report
