"""Hamiltonian models, gauges, profiles and Fenchel conjugation.

Derived oracle values are computed independently here (grid search,
symbolic differentiation) before being compared with the library."""

import numpy as np
import pytest
import sympy as sp

from dualaction.convex_model import (
    CappedProfile,
    EllipsoidGauge,
    GaugeProfileHamiltonian,
    LinearProfile,
    PowerProfile,
    QuadraticHamiltonian,
    TimePeriodicBump,
    WindowProfile,
    ball_gauge,
    conjugate_model,
    ellipsoid_gauge,
    estimate_convexity_bounds,
    fenchel_conjugate,
    perturbed_ball_gauge,
    profile_hamiltonian,
    slope_nonresonance_check,
    window_model,
)
from dualaction.errors import ConvexityLoss, NewtonDivergence, SpectrumUnavailable


# ---------------------------------------------------------------------------
# Fenchel conjugation
# ---------------------------------------------------------------------------


def test_fenchel_self_dual_quadratic():
    # H = |z|^2/2 is self-dual
    H = QuadraticHamiltonian(np.eye(2))
    val, y = fenchel_conjugate(H, 0.0, np.array([3.0, 4.0]))
    assert np.isclose(val, 12.5, atol=1e-12)
    assert np.allclose(y, [3.0, 4.0], atol=1e-12)


def test_fenchel_isotropic():
    H = QuadraticHamiltonian.isotropic(1, 4.0)
    val, y = fenchel_conjugate(H, 0.0, np.array([2.0, 0.0]))
    assert np.isclose(val, 0.25, atol=1e-13)
    assert np.allclose(y, [0.25, 0.0], atol=1e-13)


def grid_search_conjugate(H, w, lo=-6.0, hi=6.0, coarse=101, refine=5):
    """Independent oracle: nested grid search for sup(w.y - H(y))."""
    center = np.zeros_like(w)
    width = hi - lo
    best = None
    for _ in range(refine):
        axes = [np.linspace(c - width / 2, c + width / 2, coarse) for c in center]
        grids = np.meshgrid(*axes, indexing="ij")
        Y = np.stack([g.ravel() for g in grids], axis=1)
        vals = Y @ w - H.value_nodes(np.zeros(Y.shape[0]), Y)
        i = int(np.argmax(vals))
        best, center = vals[i], Y[i]
        width = 4 * width / coarse
    return best, center


def test_fenchel_diagonal_quadratic_vs_grid_search():
    # H = (q^2 + 2 p^2)/2, w = (2,2): conjugate = <A^{-1} w, w>/2 = 3
    H = QuadraticHamiltonian(np.diag([1.0, 2.0]))
    oracle_val, oracle_arg = grid_search_conjugate(H, np.array([2.0, 2.0]))
    assert np.isclose(oracle_val, 3.0, atol=1e-6)
    val, y = fenchel_conjugate(H, 0.0, np.array([2.0, 2.0]))
    assert np.isclose(val, 3.0, atol=1e-12)
    assert np.allclose(y, [2.0, 1.0], atol=1e-12)
    assert np.allclose(y, oracle_arg, atol=1e-4)


def test_fenchel_reciprocity_random():
    rng = np.random.default_rng(0)
    models = [
        QuadraticHamiltonian.isotropic(1, 4.0),
        profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False),
        profile_hamiltonian(ellipsoid_gauge([1.0, 2.0]), LinearProfile(4.0)),
    ]
    for H in models:
        for _ in range(40):
            w = 3.0 * rng.standard_normal(2 * H.n)
            t = float(rng.uniform())
            _, y = fenchel_conjugate(H, t, w)
            assert np.linalg.norm(H.grad(t, y) - w) <= 1e-10 * (1 + np.linalg.norm(w))


def test_double_conjugation_recovers_model():
    rng = np.random.default_rng(1)
    H = profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False)
    Hcc = conjugate_model(conjugate_model(H))
    for _ in range(25):
        z = 1.5 * rng.standard_normal(2)
        assert abs(Hcc.value(0.0, z) - H.value(0.0, z)) < 1e-8


def test_conjugate_hessian_bounds():
    rng = np.random.default_rng(2)
    H = profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False)
    Hc = conjugate_model(H)
    for _ in range(100):
        w = 4.0 * rng.standard_normal(2)
        eigs = np.linalg.eigvalsh(Hc.hess(float(rng.uniform()), w))
        assert eigs[0] >= 1.0 / H.h_hi - 1e-9
        assert eigs[-1] <= 1.0 / H.h_lo + 1e-9


def test_fenchel_divergence_on_bad_bounds():
    # lying about convexity bounds gives a hopeless initial guess and a cap hit
    H = QuadraticHamiltonian.isotropic(1, 4.0)

    class Lying(QuadraticHamiltonian):
        def hess_nodes(self, ts, Z):
            return np.broadcast_to(np.diag([1e-14, 1e-14]), (Z.shape[0], 2, 2)).copy()

    L = Lying(2 * 4.0 * np.eye(2))
    with pytest.raises(NewtonDivergence):
        fenchel_conjugate(L, 0.0, np.array([1.0, 2.0]))


# ---------------------------------------------------------------------------
# Gauges
# ---------------------------------------------------------------------------


def test_ellipsoid_gauge_oracle_spectrum():
    disk = ball_gauge(1)
    assert np.allclose(disk.spectrum_up_to(10.0), [np.pi, 2 * np.pi, 3 * np.pi])
    s3 = ball_gauge(2)  # round S^3: one action value, a whole family
    assert np.allclose(s3.spectrum_up_to(4.0), [np.pi])
    ell = ellipsoid_gauge([1.0, 2.0])
    assert np.allclose(
        ell.spectrum_up_to(13.0), [np.pi, 2 * np.pi, 3 * np.pi, 4 * np.pi]
    )


def test_spectrum_scaling():
    lam = 1.7
    base = ellipsoid_gauge([1.0, 2.0]).spectrum_up_to(20.0)
    scaled = ellipsoid_gauge([lam, 2 * lam]).spectrum_up_to(20.0 * lam**2)
    assert np.allclose(scaled, lam**2 * base, rtol=1e-12)


def _sample_sphere(rng, n, count, radius=1.0):
    U = rng.standard_normal((count, 2 * n))
    return radius * U / np.linalg.norm(U, axis=1, keepdims=True)


@pytest.mark.parametrize(
    "domain",
    [ellipsoid_gauge([1.0, 2.0]), perturbed_ball_gauge(0.05, m=3)],
    ids=["ellipsoid", "perturbed_ball"],
)
def test_gauge_homogeneity_and_euler_identity(domain):
    rng = np.random.default_rng(3)
    Z = _sample_sphere(rng, domain.n, 1000, radius=1.0)
    Z *= rng.uniform(0.2, 2.0, Z.shape[0])[:, None]
    s = domain.gauge_values(Z)
    lam = rng.uniform(0.5, 2.0, Z.shape[0])
    assert np.allclose(
        domain.gauge_values(lam[:, None] * Z), lam**2 * s, rtol=1e-10
    )
    grads = domain.gauge_grads(Z)
    assert np.max(np.abs(np.sum(grads * Z, axis=1) - 2 * s)) < 1e-10
    eigs = np.linalg.eigvalsh(domain.gauge_hessians(Z))
    assert np.min(eigs) > 0


def test_perturbed_gauge_derivatives_match_fd():
    dom = perturbed_ball_gauge(0.07, m=2)
    rng = np.random.default_rng(4)
    for _ in range(25):
        z = rng.standard_normal(2)
        z *= rng.uniform(0.3, 2.0) / np.linalg.norm(z)
        h = 1e-6
        g_fd = np.array(
            [
                (dom.gauge_eval(z + h * e) - dom.gauge_eval(z - h * e)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        assert np.allclose(dom.gauge_grad(z), g_fd, atol=1e-8)
        H_fd = np.stack(
            [
                (dom.gauge_grad(z + h * e) - dom.gauge_grad(z - h * e)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        assert np.allclose(dom.gauge_hess(z), 0.5 * (H_fd + H_fd.T), atol=1e-6)


# ---------------------------------------------------------------------------
# Profiles and composites
# ---------------------------------------------------------------------------


def test_linear_profile_on_ball():
    H = profile_hamiltonian(ball_gauge(1), LinearProfile(4.0))
    z = np.array([0.8, -0.3])
    assert np.isclose(H.value(0.0, z), 4.0 * z @ z, atol=1e-13)
    assert np.allclose(H.hess(0.0, z), 8.0 * np.eye(2), atol=1e-13)


def test_power_profile_symbolic_oracle():
    # (2T/p) r^{p/2} over the unit disk, T = pi, p = 3/2: symbolic gradient
    T, p = np.pi, 1.5
    q, pp = sp.symbols("q p", real=True)
    expr = sp.Rational(4, 3) * sp.pi * (q**2 + pp**2) ** sp.Rational(3, 4)
    grad_sym = [sp.diff(expr, v) for v in (q, pp)]
    f = sp.lambdify((q, pp), expr, "numpy")
    g = sp.lambdify((q, pp), grad_sym, "numpy")
    H = profile_hamiltonian(
        ball_gauge(1), PowerProfile(p, scale=2 * T / p), smoothing=False, audit=False
    )
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.standard_normal(2)
        z *= rng.uniform(0.5, 2.0) / np.linalg.norm(z)
        assert np.isclose(H.value(0.0, z), float(f(*z)), rtol=1e-12)
        assert np.allclose(H.grad(0.0, z), np.array(g(*z), dtype=float), rtol=1e-12)
        # closed form: grad = 2 pi |z|^{-1/2} z
        assert np.allclose(
            H.grad(0.0, z), 2 * np.pi * z / np.sqrt(np.linalg.norm(z)), rtol=1e-12
        )


def test_window_profile_shape():
    prof = WindowProfile()
    assert np.isclose(float(prof.dphi(np.array([1.0]))[0]), np.pi, atol=1e-12)
    assert float(prof.d2phi(np.array([1.0]))[0]) > 0
    assert np.isclose(float(prof.phi(np.array([1.0]))[0]), -prof.anchor)
    # flat slope below the climb, linear of slope eta beyond it
    s = np.array([0.0, prof.s1 / 2])
    assert np.allclose(prof.dphi(s), prof.slope0)
    s = np.array([prof.s2 + 0.5, prof.s2 + 2.0])
    assert np.allclose(prof.dphi(s), prof.slope_inf)
    assert float(prof.phi(np.array([0.0]))[0]) < 0


def test_capped_profile_matches_and_is_c2():
    base = PowerProfile(1.5)
    cap = CappedProfile(base, s0=0.01)
    s = np.array([0.01])
    for f in ("phi", "dphi", "d2phi"):
        assert np.isclose(
            float(getattr(cap, f)(s)[0]), float(getattr(base, f)(s)[0]), rtol=1e-12
        )
    assert float(cap.dphi(np.array([0.0]))[0]) > 0
    # cap slope at origin is (p/2)(2 - p/2) s0^{p/2-1} > 0
    want = 0.75 * (2 - 0.75) * 0.01 ** (-0.25)
    assert np.isclose(float(cap.dphi(np.array([0.0]))[0]), want, rtol=1e-12)


def test_composite_gradient_hessian_fd():
    rng = np.random.default_rng(6)
    models = [
        profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False),
        profile_hamiltonian(ellipsoid_gauge([0.8, 1.3]), LinearProfile(2.0)),
        window_model(ball_gauge(1), np.pi),  # time-dependent bump included
    ]
    for H in models:
        for _ in range(12):
            z = rng.standard_normal(2 * H.n)
            z *= rng.uniform(0.3, 1.8) / np.linalg.norm(z)
            t = float(rng.uniform())
            h = 1e-6
            g_fd = np.array(
                [
                    (H.value(t, z + h * e) - H.value(t, z - h * e)) / (2 * h)
                    for e in np.eye(2 * H.n)
                ]
            )
            g = H.grad(t, z)
            assert np.linalg.norm(g - g_fd) <= 1e-6 * (1 + np.linalg.norm(g))
            H_fd = np.stack(
                [
                    (H.grad(t, z + h * e) - H.grad(t, z - h * e)) / (2 * h)
                    for e in np.eye(2 * H.n)
                ]
            )
            assert np.allclose(H.hess(t, z), 0.5 * (H_fd + H_fd.T), atol=3e-6)


def test_time_periodicity_of_bump_model():
    H = window_model(ball_gauge(1), np.pi)
    rng = np.random.default_rng(7)
    for _ in range(10):
        z = rng.standard_normal(2)
        t = float(rng.uniform())
        assert np.isclose(H.value(t, z), H.value(t + 1.0, z), atol=1e-14)
    # the bump vanishes at the origin: the constant orbit there is exact
    assert np.allclose(H.grad(0.3, np.zeros(2)), 0.0)


def test_convexity_audit_rejects_nonconvex():
    class Bad(LinearProfile):
        def d2phi(self, s):
            return -3.0 * np.ones_like(np.asarray(s, dtype=float))

    with pytest.raises(ConvexityLoss):
        GaugeProfileHamiltonian(ball_gauge(1), Bad(1.0), bounds=(0.1, 10.0))


def test_estimated_bounds_bracket_brute_force():
    H = profile_hamiltonian(ball_gauge(1), WindowProfile(), audit=False)
    rng = np.random.default_rng(8)
    Z = _sample_sphere(rng, 1, 4000)
    Z *= rng.uniform(0.05, 2.2, Z.shape[0])[:, None]
    eigs = np.linalg.eigvalsh(H.hess_nodes(np.zeros(Z.shape[0]), Z))
    assert H.h_lo <= np.min(eigs) + 1e-12
    assert H.h_hi >= np.max(eigs) - 1e-12


# ---------------------------------------------------------------------------
# Non-resonance
# ---------------------------------------------------------------------------


def test_slope_nonresonance():
    disk = ball_gauge(1)
    assert slope_nonresonance_check(disk, 4.0)
    assert not slope_nonresonance_check(disk, np.pi)
    assert not slope_nonresonance_check(ellipsoid_gauge([1.0, 2.0]), 2 * np.pi)


def test_slope_nonresonance_unavailable():
    dom = perturbed_ball_gauge(0.05)
    with pytest.raises(SpectrumUnavailable):
        slope_nonresonance_check(dom, 4.0, allow_compute=False)
