"""Property suites behind the ``verify`` CLI command.

Each suite exercises one module's invariants on randomized inputs with a
fixed seed and returns (name, passed, details).  The CLI turns these
into pass/fail lines and exit codes; the test suite asserts the same
properties with pytest granularity.
"""

from __future__ import annotations

import numpy as np

from .action_functionals import (
    dual_action,
    dual_gradient,
    dual_hessian_bilinear,
    duality_gap,
    lift_to_orbit,
)
from .convex_model import (
    QuadraticHamiltonian,
    ball_gauge,
    conjugate_model,
    fenchel_conjugate,
    profile_hamiltonian,
    LinearProfile,
    WindowProfile,
)
from .errors import DualActionError
from .loop_fourier import FourierLoop, primitive_zero_mean, symplectic_quadform
from .reduction import choose_N, reduction
from .spectral_index import (
    conley_zehnder_of_orbit,
    morse_index_from_spectrum,
    orbit_spectrum,
)

__all__ = ["SUITES", "run_suite", "run_all"]


def _random_loop(rng, n, M, scale=1.0, zero_mean=True, decay=1.0):
    modes = {}
    for k in range(-M, M + 1):
        if k == 0 and zero_mean:
            continue
        modes[k] = scale * rng.standard_normal(2 * n) / (1.0 + abs(k)) ** decay
    return FourierLoop.from_modes(n, modes)


def _models(rng):
    out = [QuadraticHamiltonian.isotropic(1, 4.0)]
    A = np.diag([1.0, 2.0])
    out.append(QuadraticHamiltonian(A))
    out.append(QuadraticHamiltonian.isotropic(1, 2.5, b=np.array([0.4, -0.3])))
    out.append(profile_hamiltonian(ball_gauge(1), LinearProfile(4.0)))
    out.append(profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False))
    return out


def suite_fourier(trials: int = 200, seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst = {"parseval": 0.0, "reassembly": 0.0, "quadform": 0.0, "primitive": 0.0}
    for _ in range(trials):
        n = int(rng.integers(1, 3))
        M = int(rng.integers(1, 9))
        x = _random_loop(rng, n, M, zero_mean=False)
        Q = 4 * max(M, 1) + 8
        t = np.arange(Q) / Q
        vals = x.evaluate(t)
        worst["parseval"] = max(
            worst["parseval"], abs(np.mean(np.sum(vals**2, axis=1)) - x.l2_norm_sq())
        )
        re = x.project("plus") + x.project("minus") + x.project("zero")
        worst["reassembly"] = max(worst["reassembly"], np.abs(re.coeffs - x.coeffs).max())
        d = x.derivative()
        quad_t = 0.5 * np.mean(np.sum(d.evaluate(t) @ _J(n).T * vals, axis=1))
        worst["quadform"] = max(worst["quadform"], abs(quad_t - symplectic_quadform(x)))
        v = x.zero_mean_part()
        worst["primitive"] = max(
            worst["primitive"],
            np.abs((primitive_zero_mean(v.derivative()) - v).coeffs).max(),
        )
    ok = all(v < 1e-10 for v in worst.values())
    return ok, worst


def _J(n):
    from .loop_fourier import standard_J

    return standard_J(n)


def suite_fenchel(trials: int = 100, seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst = {"reciprocity": 0.0, "double_conj": 0.0, "bound_violation": 0.0}
    for H in _models(rng):
        Hc = conjugate_model(H)
        Hcc = conjugate_model(Hc)
        for _ in range(trials // 5):
            t = float(rng.uniform())
            w = 3.0 * rng.standard_normal(2 * H.n)
            val, y = fenchel_conjugate(H, t, w)
            worst["reciprocity"] = max(
                worst["reciprocity"],
                float(np.linalg.norm(H.grad(t, y) - w)) / (1.0 + np.linalg.norm(w)),
            )
            z = 1.5 * rng.standard_normal(2 * H.n)
            worst["double_conj"] = max(
                worst["double_conj"], abs(Hcc.value(t, z) - H.value(t, z))
            )
            eigs = np.linalg.eigvalsh(Hc.hess(t, w))
            viol = max(0.0, 1.0 / H.h_hi - eigs[0] - 1e-9, eigs[-1] - 1.0 / H.h_lo - 1e-9)
            worst["bound_violation"] = max(worst["bound_violation"], viol)
    ok = (
        worst["reciprocity"] < 1e-10
        and worst["double_conj"] < 1e-8
        and worst["bound_violation"] <= 1e-6
    )
    return ok, worst


def suite_duality(trials: int = 10000, seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    models = _models(rng)
    min_gap = np.inf
    eq_gap = 0.0
    for i in range(trials):
        H = models[i % len(models)]
        x = _random_loop(rng, H.n, int(rng.integers(1, 5)), scale=0.8, zero_mean=False)
        y = FourierLoop.from_modes(
            H.n,
            {0: 0.5 * rng.standard_normal(2 * H.n),
             -1: 0.4 * rng.standard_normal(2 * H.n)},
        )
        min_gap = min(min_gap, duality_gap(H, x, y))
    # equality at a lifted orbit: translated quadratic, orbit = constant b
    Hb = QuadraticHamiltonian.isotropic(1, 2.5, b=np.array([0.7, -0.2]))
    x0 = FourierLoop.zero(1, 1)
    eq_gap = abs(duality_gap(Hb, x0, FourierLoop.constant(Hb.b)))
    ok = min_gap > -1e-9 and eq_gap < 1e-8
    return ok, {"min_gap": float(min_gap), "equality_gap": float(eq_gap)}


def suite_gradients(trials: int = 40, seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst = {"dual_grad_fd": 0.0, "hess_sym": 0.0, "hess_fd": 0.0}
    for H in _models(rng):
        for _ in range(max(1, trials // 5)):
            x = _random_loop(rng, H.n, 3, scale=0.7)
            u = _random_loop(rng, H.n, 3)
            v = _random_loop(rng, H.n, 3)
            h = 1e-6
            fd = (dual_action(H, x + h * u) - dual_action(H, x + (-h) * u)) / (2 * h)
            g = dual_gradient(H, x)
            ip = sum(
                (2 * np.pi * k) ** 2 * float(g.coeff(k) @ u.coeff(k))
                for k in range(-g.M, g.M + 1)
                if k != 0
            )
            worst["dual_grad_fd"] = max(
                worst["dual_grad_fd"], abs(fd - ip) / max(1.0, abs(fd))
            )
            buv = dual_hessian_bilinear(H, x, u, v)
            bvu = dual_hessian_bilinear(H, x, v, u)
            worst["hess_sym"] = max(worst["hess_sym"], abs(buv - bvu))
            fd2 = (
                float(
                    sum(
                        (2 * np.pi * k) ** 2
                        * (dual_gradient(H, x + h * u).coeff(k) @ v.coeff(k))
                        for k in range(-3, 4) if k
                    )
                )
                - float(
                    sum(
                        (2 * np.pi * k) ** 2
                        * (dual_gradient(H, x + (-h) * u).coeff(k) @ v.coeff(k))
                        for k in range(-3, 4) if k
                    )
                )
            ) / (2 * h)
            worst["hess_fd"] = max(worst["hess_fd"], abs(buv - fd2) / max(1.0, abs(buv)))
    ok = worst["dual_grad_fd"] < 1e-6 and worst["hess_sym"] < 1e-10 and worst["hess_fd"] < 1e-5
    return ok, worst


def suite_reduction(seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    details = {}
    expected = {8.0: 1, 2.0: 0, 100.0: 15}
    ok = True
    for h_hi, N_want in expected.items():
        H = QuadraticHamiltonian.isotropic(1, h_hi / 2.0)
        N, delta = choose_N(H)
        details[f"N(h_hi={h_hi})"] = N
        ok = ok and N == N_want and delta > 0
    H = profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False)
    R = reduction(H)
    heads = [0.5 * rng.standard_normal(R.head_dim) for _ in range(5)]
    worst_tail = 0.0
    worst_graph = 0.0
    for head in heads:
        full = R.solve_tail(head)
        worst_tail = max(worst_tail, R.tail_gradient_norm(full))
        tail = full[R.tail_idx]
        full2 = R.solve_tail(head, warm=tail + 1e-3 * rng.standard_normal(tail.size))
        worst_graph = max(worst_graph, float(np.linalg.norm(full2 - full)))
        least = R.tail_least_eig_h1(full)
        ok = ok and least >= 0.9 * R.delta
        details["tail_least_eig"] = least
    drift = R.audit_tail_truncation(heads[:3])
    details.update(
        {"tail_grad": worst_tail, "graph_resolve": worst_graph, "psi_doubling": drift}
    )
    ok = ok and worst_tail < 1e-10 and worst_graph < 1e-9 and drift < 1e-8
    return ok, details


def suite_index(seed: int = 0) -> tuple[bool, dict]:
    details = {}
    ok = True
    for n in (1, 2):
        for eta in (1.0, 4.0, 7.0, 10.0):
            H = QuadraticHamiltonian.isotropic(n, eta)
            orbit = FourierLoop.constant(np.zeros(2 * n))
            spec = orbit_spectrum(H, orbit)
            dual, rel, null = morse_index_from_spectrum(spec)
            want = 2 * n * int(np.floor(eta / np.pi))
            cz = conley_zehnder_of_orbit(H, orbit)
            key = f"n={n},eta={eta}"
            details[key] = {"dual": dual, "want": want, "cz": cz, "null": null}
            ok = ok and dual == want and null == 0 and cz == rel
    return ok, details


def suite_complex(seed: int = 0) -> tuple[bool, dict]:
    from .morse_complex import (
        Generator,
        ToyDoubleWell,
        betti_profile,
        build_complex,
        euler_characteristic,
        filtered_betti,
        verify_d2,
    )

    toy = ToyDoubleWell()
    gens = [
        Generator(cp["label"], cp["index"], toy.value(cp["point"]), cp["point"])
        for cp in toy.critical_points()
    ]
    C1 = build_complex(toy, gens, metric_seed=seed)
    C2 = build_complex(toy, gens, metric_seed=seed + 5)
    same = all(
        b1["betti"] == b2["betti"]
        for b1, b2 in zip(betti_profile(C1), betti_profile(C2))
    )
    euler = euler_characteristic(C1)
    alt = sum((-1) ** k * b for k, b in enumerate(filtered_betti(C1, np.inf)))
    ok = (
        verify_d2(C1)
        and same
        and C1.boundary == {("saddle", "min-"), ("saddle", "min+")}
        and euler == alt
    )
    return ok, {
        "boundary": sorted(C1.boundary),
        "independence": same,
        "euler": euler,
        "alternating_betti": alt,
    }


SUITES = {
    "fourier": suite_fourier,
    "fenchel": suite_fenchel,
    "duality": suite_duality,
    "gradients": suite_gradients,
    "reduction": suite_reduction,
    "index": suite_index,
    "complex": suite_complex,
}


def run_suite(name: str, **kw) -> tuple[bool, dict]:
    fn = SUITES[name]
    import inspect

    sig = inspect.signature(fn)
    kw = {k: v for k, v in kw.items() if k in sig.parameters}
    try:
        return fn(**kw)
    except DualActionError as exc:
        return False, {"error": f"{type(exc).__name__}: {exc}"}


def run_all(**kw) -> dict:
    return {name: run_suite(name, **kw) for name in SUITES}
