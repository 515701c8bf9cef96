"""Direct and dual action functionals: closed-form values, gradient and
Hessian consistency, the duality gap, and the critical-point lift."""

import numpy as np
import pytest

from dualaction.action_functionals import (
    direct_action,
    dual_action,
    dual_gradient,
    dual_hessian_apply,
    dual_hessian_bilinear,
    duality_gap,
    evaluate_dual,
    lift_to_orbit,
    orbit_residual_l2,
)
from dualaction.convex_model import (
    LinearProfile,
    PowerProfile,
    QuadraticHamiltonian,
    ball_gauge,
    profile_hamiltonian,
    window_model,
)
from dualaction.errors import BadModeSupport, NonzeroMean, NotCritical
from dualaction.loop_fourier import FourierLoop

ETA = 4.0
H4 = QuadraticHamiltonian.isotropic(1, ETA)


def h1_inner(u, v):
    M = max(u.M, v.M)
    return sum(
        (2 * np.pi * k) ** 2 * float(u.coeff(k) @ v.coeff(k))
        for k in range(-M, M + 1)
        if k != 0
    )


def random_zero_mean(rng, n, M, scale=1.0):
    return FourierLoop.from_modes(
        n, {k: scale * rng.standard_normal(2 * n) for k in range(-M, M + 1) if k}
    )


# -- direct action -----------------------------------------------------------


def test_direct_action_zero_loop():
    assert direct_action(H4, FourierLoop.zero(1, 2)) == 0.0


def test_direct_action_single_mode():
    v = np.array([0.7, -0.4])
    x = FourierLoop.from_modes(1, {1: v})
    assert np.isclose(direct_action(H4, x), (np.pi - ETA) * v @ v, atol=1e-12)


def test_direct_action_constant_loop():
    z0 = np.array([0.5, 1.5])
    x = FourierLoop.constant(z0)
    assert np.isclose(direct_action(H4, x), -ETA * z0 @ z0, atol=1e-13)


# -- dual action --------------------------------------------------------------


def test_dual_action_single_mode():
    v = np.array([1.0, 0.2])
    x = FourierLoop.from_modes(1, {1: v})
    want = np.pi * (v @ v) * (np.pi / ETA - 1.0)
    assert np.isclose(dual_action(H4, x), want, atol=1e-12)


def test_dual_action_zero_loop_is_minus_min():
    # H*(0) = -min H; for eta |z|^2 the minimum is 0
    assert np.isclose(dual_action(H4, FourierLoop.zero(1, 1)), 0.0, atol=1e-14)
    Hb = QuadraticHamiltonian.isotropic(1, 2.0, b=[1.0, 0.0], xi=-0.7)
    assert np.isclose(dual_action(Hb, FourierLoop.zero(1, 1)), 0.7, atol=1e-13)


def test_dual_action_requires_zero_mean():
    with pytest.raises(NonzeroMean):
        dual_action(H4, FourierLoop.constant([1.0, 0.0]))


# -- dual gradient -------------------------------------------------------------


def test_dual_gradient_zero_at_origin():
    g = dual_gradient(H4, FourierLoop.zero(1, 3))
    assert g.l2_norm_sq() == 0.0


def test_dual_gradient_matches_fd():
    rng = np.random.default_rng(0)
    models = [
        H4,
        profile_hamiltonian(ball_gauge(1), LinearProfile(4.0)),
        window_model(ball_gauge(1), np.pi),
    ]
    for H in models:
        for _ in range(7):
            x = random_zero_mean(rng, 1, 3, scale=0.6)
            u = random_zero_mean(rng, 1, 3)
            h = 1e-6
            fd = (dual_action(H, x + h * u) - dual_action(H, x + (-h) * u)) / (2 * h)
            ip = h1_inner(dual_gradient(H, x), u)
            assert abs(fd - ip) <= 1e-6 * max(1.0, abs(fd))


def test_dual_gradient_mode_diagonal_for_quadratic():
    # for eta |z|^2 the H^1 gradient acts mode-diagonally with eigenvalue
    # (pi k / eta - 1) / (2 pi k) on mode k
    rng = np.random.default_rng(1)
    for k in (-3, -1, 1, 2, 5):
        v = rng.standard_normal(2)
        x = FourierLoop.from_modes(1, {k: v})
        g = dual_gradient(H4, x)
        factor = (np.pi * k / ETA - 1.0) / (2 * np.pi * k)
        assert np.allclose(g.coeff(k), factor * v, atol=1e-12)
        for j in range(-3, 6):
            if j not in (0, k):
                assert np.allclose(g.coeff(j), 0.0, atol=1e-14)


# -- dual Hessian ---------------------------------------------------------------


def test_dual_hessian_symmetric_and_matches_quadratic():
    rng = np.random.default_rng(2)
    x = random_zero_mean(rng, 1, 3, scale=0.5)
    u = random_zero_mean(rng, 1, 3)
    v = random_zero_mean(rng, 1, 3)
    buv = dual_hessian_bilinear(H4, x, u, v)
    bvu = dual_hessian_bilinear(H4, x, v, u)
    assert abs(buv - bvu) < 1e-10
    # quadratic H: Hessian independent of the base point
    x2 = random_zero_mean(rng, 1, 3, scale=1.5)
    assert np.isclose(
        dual_hessian_bilinear(H4, x2, u, v), buv, rtol=1e-10, atol=1e-12
    )
    # apply is the H^1 representative
    assert np.isclose(h1_inner(dual_hessian_apply(H4, x, u), v), buv, rtol=1e-10)


def test_dual_hessian_fd():
    rng = np.random.default_rng(3)
    H = window_model(ball_gauge(1), np.pi)
    x = random_zero_mean(rng, 1, 3, scale=0.5)
    u = random_zero_mean(rng, 1, 3)
    v = random_zero_mean(rng, 1, 3)
    h = 1e-6
    fd = (
        h1_inner(dual_gradient(H, x + h * u), v)
        - h1_inner(dual_gradient(H, x + (-h) * u), v)
    ) / (2 * h)
    buv = dual_hessian_bilinear(H, x, u, v)
    assert abs(fd - buv) <= 1e-5 * max(1.0, abs(buv))


def test_dual_hessian_tail_coercivity():
    # on tail modes (k <= -1 or k large) the paper's spectral lower bound
    # delta ||u||_{H1}^2 holds with delta = 1/h_hi - 1/(2 pi (N+1))
    H = H4
    from dualaction.reduction import choose_N

    N, delta = choose_N(H)
    rng = np.random.default_rng(4)
    x = random_zero_mean(rng, 1, 3, scale=0.8)
    for k in [-4, -1, N + 1, N + 3]:
        u = FourierLoop.from_modes(1, {k: rng.standard_normal(2)})
        quad = dual_hessian_bilinear(H, x, u, u)
        assert quad >= delta * u.h1_norm_sq() - 1e-10
    # generally: second term alone is >= h_hi^{-1} ||u||_{H1}^2
    u = random_zero_mean(rng, 1, 4)
    quad = dual_hessian_bilinear(H, x, u, u)
    from dualaction.loop_fourier import symplectic_quadform

    assert quad + 2 * symplectic_quadform(u) >= u.h1_norm_sq() / H.h_hi - 1e-10


# -- duality gap -----------------------------------------------------------------


def test_duality_gap_nonnegative_random():
    rng = np.random.default_rng(5)
    models = [H4, profile_hamiltonian(ball_gauge(1), LinearProfile(2.0))]
    for _ in range(300):
        H = models[int(rng.integers(len(models)))]
        x = FourierLoop.from_modes(
            1, {k: 0.7 * rng.standard_normal(2) for k in range(-3, 4)}
        )
        y = FourierLoop.from_modes(
            1,
            {0: rng.standard_normal(2), -1: 0.5 * rng.standard_normal(2),
             -2: 0.3 * rng.standard_normal(2)},
        )
        assert duality_gap(H, x, y) >= -1e-9


def test_duality_gap_rejects_positive_modes():
    x = FourierLoop.from_modes(1, {1: [1.0, 0.0]})
    y = FourierLoop.from_modes(1, {1: [0.5, 0.0]})
    with pytest.raises(BadModeSupport):
        duality_gap(H4, x, y)


def test_duality_gap_equality_at_orbit():
    # translated quadratic: the constant orbit b, x = 0, y = b gives gap 0
    Hb = QuadraticHamiltonian.isotropic(1, 2.5, b=np.array([0.7, -0.2]))
    gap = duality_gap(Hb, FourierLoop.zero(1, 1), FourierLoop.constant(Hb.b))
    assert abs(gap) < 1e-8
    # subquadratic route: the mode-1 minimal orbit of the p-profile on the disk
    H = profile_hamiltonian(ball_gauge(1), PowerProfile(1.5), smoothing=False, audit=False)
    s_star = (2 * np.pi / 1.5) ** (2.0 / (1.5 - 2.0))
    v = np.array([np.sqrt(s_star), 0.0])
    orbit = FourierLoop.from_modes(1, {1: v})
    assert orbit_residual_l2(H, orbit) < 1e-10
    gap = duality_gap(H, orbit, FourierLoop.zero(1, 1))
    assert abs(gap) < 1e-8


def test_duality_gap_grows_with_negative_mode():
    # adding a pure k = -1 mode w to the equality case raises the gap by at
    # least its H^{1/2} half-norm pi |w|^2
    Hb = QuadraticHamiltonian.isotropic(1, 2.5, b=np.array([0.4, 0.1]))
    x = FourierLoop.zero(1, 1)
    rng = np.random.default_rng(6)
    for _ in range(10):
        w = rng.standard_normal(2)
        y = FourierLoop.from_modes(1, {0: Hb.b, -1: w})
        assert duality_gap(Hb, x, y) >= np.pi * w @ w - 1e-9


# -- lift -------------------------------------------------------------------------


def test_lift_trivial_critical_point():
    v0, orbit = lift_to_orbit(H4, FourierLoop.zero(1, 2))
    assert np.allclose(v0, 0.0)
    assert orbit.l2_norm_sq() == 0.0


def test_lift_translation_equivariance():
    b = np.array([0.8, -0.5])
    Hb = QuadraticHamiltonian.isotropic(1, 2.5, b=b)
    v0, orbit = lift_to_orbit(Hb, FourierLoop.zero(1, 2))
    assert np.allclose(v0, b, atol=1e-12)
    assert np.allclose(orbit.mean, b)
    assert orbit_residual_l2(Hb, orbit) < 1e-12


def test_lift_rejects_noncritical():
    rng = np.random.default_rng(7)
    x = random_zero_mean(rng, 1, 2)
    with pytest.raises(NotCritical):
        lift_to_orbit(H4, x)


def test_lift_orbit_on_energy_level(disk_window_setup):
    # autonomous part check via the p-profile: the lifted minimal orbit lies
    # on a gauge level set to high accuracy
    H = profile_hamiltonian(ball_gauge(1), PowerProfile(1.5), smoothing=False, audit=False)
    s_star = (2 * np.pi / 1.5) ** (-4.0)
    v = np.array([np.sqrt(s_star), 0.0])
    x = FourierLoop.from_modes(1, {1: v})
    v0, orbit = lift_to_orbit(H, x)
    ts = np.linspace(0, 1, 64, endpoint=False)
    gauge_vals = ball_gauge(1).gauge_values(orbit.evaluate(ts))
    assert np.max(np.abs(gauge_vals - s_star)) < 1e-6


def test_action_equality_at_critical_points(disk_window_setup):
    H = disk_window_setup["H"]
    for rec in disk_window_setup["records"]:
        psi = dual_action(H, rec.loop)
        phi = direct_action(H, rec.orbit)
        assert abs(psi - phi) < 1e-8


def test_evaluate_dual_residual_consistency():
    ev = evaluate_dual(H4, FourierLoop.zero(1, 2))
    assert ev.residual_norm < 1e-12 and ev.value == 0.0
