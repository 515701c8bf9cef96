"""Fourier loop representation: basis identities, projectors, norms,
the zero-mean primitive, and quadrature consistency."""

import numpy as np
import pytest

from dualaction.errors import NonzeroMean
from dualaction.loop_fourier import (
    FourierLoop,
    LoopGrid,
    loop_distance_mod_shift,
    primitive_zero_mean,
    standard_J,
    symplectic_quadform,
)


def random_loop(rng, n, M, zero_mean=False, scale=1.0):
    modes = {
        k: scale * rng.standard_normal(2 * n)
        for k in range(-M, M + 1)
        if not (zero_mean and k == 0)
    }
    return FourierLoop.from_modes(n, modes)


def test_single_mode_basis():
    v = np.array([1.0, 0.0])
    x = FourierLoop.from_modes(1, {1: v})
    assert np.allclose(x.evaluate(0.0), v)
    # e^{-2 pi J t} v traces the clockwise unit circle: at t=1/4, x = -J v
    J = standard_J(1)
    assert np.allclose(x.evaluate(0.25), -J @ v, atol=1e-15)
    d = x.derivative()
    assert np.allclose(d.coeff(1), -2 * np.pi * J @ v)
    assert np.allclose(d.mean, 0.0)


def test_constant_loop_derivative_vanishes():
    x = FourierLoop.constant([2.0, -1.0, 0.5, 3.0])
    assert x.derivative().l2_norm_sq() == 0.0


def test_rotation_eigenloop_derivative():
    # x(t) = e^{-2 pi J t} v satisfies (J xdot)(t) = 2 pi x(t); checked
    # against pointwise finite differences in t
    rng = np.random.default_rng(0)
    v = rng.standard_normal(2)
    x = FourierLoop.from_modes(1, {1: v})
    J = standard_J(1)
    ts = rng.uniform(0, 1, 7)
    h = 1e-6
    for t in ts:
        fd = (x.evaluate(t + h) - x.evaluate(t - h)) / (2 * h)
        assert np.allclose(J @ fd, 2 * np.pi * x.evaluate(t), atol=1e-7)
    d = x.derivative()
    assert np.allclose(
        (d.evaluate(ts) @ J.T), 2 * np.pi * x.evaluate(ts), atol=1e-12
    )


def test_periodicity():
    rng = np.random.default_rng(1)
    x = random_loop(rng, 2, 5)
    t = rng.uniform(0, 1, 9)
    assert np.allclose(x.evaluate(t), x.evaluate(t + 1.0), atol=1e-12)


def test_projectors_reassemble_and_are_orthogonal():
    rng = np.random.default_rng(2)
    x = random_loop(rng, 1, 6)
    p, m, z = x.project("plus"), x.project("minus"), x.project("zero")
    assert np.allclose((p + m + z).coeffs, x.coeffs)
    assert np.allclose(z.mean, x.mean)
    # mode support
    assert all(np.allclose(p.coeff(k), 0) for k in range(-6, 1))
    assert all(np.allclose(m.coeff(k), 0) for k in range(0, 7))
    # Pythagoras in the H^{1/2} norm
    total = (
        p.sobolev_half_norm_sq() + m.sobolev_half_norm_sq() + float(x.mean @ x.mean)
    )
    assert np.isclose(total, x.sobolev_half_norm_sq(), rtol=1e-12)


def test_project_example_modes():
    x = FourierLoop.from_modes(1, {-1: [1.0, 0], 0: [0, 1.0], 2: [2.0, 0]})
    p = x.project("plus")
    assert np.allclose(p.coeff(2), [2.0, 0]) and p.l2_norm_sq() == 4.0


def test_symplectic_quadform_single_mode():
    v = np.array([0.3, -1.2])
    x = FourierLoop.from_modes(1, {1: v})
    assert np.isclose(symplectic_quadform(x), np.pi * v @ v, rtol=1e-14)
    assert symplectic_quadform(FourierLoop.constant([1.0, 2.0])) == 0.0


def test_quadform_sign_under_mode_reflection():
    rng = np.random.default_rng(3)
    x = random_loop(rng, 1, 4)
    reflected = FourierLoop(1, x.coeffs[::-1].copy())
    assert np.isclose(
        symplectic_quadform(reflected), -symplectic_quadform(x), rtol=1e-12
    )


def test_quadform_matches_time_quadrature():
    rng = np.random.default_rng(4)
    for n in (1, 2):
        x = random_loop(rng, n, 5)
        Q = 64
        t = np.arange(Q) / Q
        J = standard_J(n)
        vals = x.evaluate(t)
        dvals = x.derivative().evaluate(t)
        quad_t = 0.5 * np.mean(np.sum((dvals @ J.T) * vals, axis=1))
        assert abs(quad_t - symplectic_quadform(x)) < 1e-10


def test_primitive_inverts_derivative():
    rng = np.random.default_rng(5)
    v = random_loop(rng, 2, 6, zero_mean=True)
    assert np.allclose(
        primitive_zero_mean(v.derivative()).coeffs, v.coeffs, atol=1e-12
    )
    w = rng.standard_normal(2)
    single = FourierLoop.from_modes(1, {1: w})
    pi_single = primitive_zero_mean(single)
    J = standard_J(1)
    assert np.allclose(pi_single.coeff(1), J @ w / (2 * np.pi))
    assert np.allclose(pi_single.derivative().coeffs, single.coeffs, atol=1e-14)
    zero = FourierLoop.zero(1, 3)
    assert primitive_zero_mean(zero).l2_norm_sq() == 0.0


def test_primitive_rejects_nonzero_mean():
    x = FourierLoop.constant([1.0, 0.0])
    with pytest.raises(NonzeroMean):
        primitive_zero_mean(x)


def test_parseval_and_norm_chain():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(1, 3))
        M = int(rng.integers(1, 8))
        x = random_loop(rng, n, M)
        Q = 4 * M + 8
        vals = x.evaluate(np.arange(Q) / Q)
        assert abs(np.mean(np.sum(vals**2, axis=1)) - x.l2_norm_sq()) < 1e-10
        z = x.zero_mean_part()
        assert z.l2_norm_sq() <= z.sobolev_half_norm_sq() + 1e-12
        assert z.sobolev_half_norm_sq() <= z.h1_norm_sq() + 1e-12


def test_reality_preserved():
    rng = np.random.default_rng(7)
    x = random_loop(rng, 1, 4)
    for op in (lambda y: y.derivative(), lambda y: y.project("plus"),
               lambda y: y.time_shift(0.37)):
        assert op(x).coeffs.dtype == np.float64


def test_time_shift_is_evaluation_shift():
    rng = np.random.default_rng(8)
    x = random_loop(rng, 2, 4)
    th = 0.2345
    y = x.time_shift(th)
    t = rng.uniform(0, 1, 6)
    assert np.allclose(y.evaluate(t), x.evaluate(t + th), atol=1e-12)
    assert loop_distance_mod_shift(x, x.time_shift(0.3)) < 1e-9


def test_grid_analyze_synthesize_roundtrip():
    rng = np.random.default_rng(9)
    g = LoopGrid(2, 5, 32)
    x = random_loop(rng, 2, 5, zero_mean=True)
    vec = g.to_vector(x)
    vals = g.values(vec)
    assert np.allclose(g.analyze(vals), vec, atol=1e-12)
    assert np.allclose(g.to_loop(vec).coeffs, x.coeffs)
    # derivative values match the loop derivative
    assert np.allclose(
        g.derivative_values(vec), x.derivative().evaluate(g.t), atol=1e-11
    )


def test_grid_requires_alias_free_quadrature():
    with pytest.raises(ValueError):
        LoopGrid(1, 8, 16)
