import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epasim.kernels import KernelSpec, LipschitzKernel, PotentialSpec, RegularPotential
from epasim.model import (
    SimState,
    VacuumError,
    alignment_direct,
    alignment_spectral,
    compute_g,
    make_initial,
    recover_velocity,
    rhs,
)
from epasim.spectral import Grid, mean
from conftest import random_positive_field, random_smooth_field

EA_KERNEL = KernelSpec(c=1.0, alpha=0.5)


def state_from(rho, u, kernel, grid, potential=None, m0=None):
    g = compute_g(rho, u, kernel, grid)
    return SimState(
        grid=grid, rho=rho, g=g, t=0.0, rho_bar=mean(rho),
        m0=mean(rho * u) if m0 is None else m0,
        kernel=kernel, potential=potential or PotentialSpec(),
    )


def test_compute_g_constant_density_zero_velocity(grid64):
    g = compute_g(np.ones(64), np.zeros(64), EA_KERNEL, grid64)
    assert np.max(np.abs(g)) < 1e-13


def test_compute_g_single_mode(grid64):
    u = np.sin(2 * np.pi * grid64.x)
    g = compute_g(np.ones(64), u, EA_KERNEL, grid64)
    np.testing.assert_allclose(g, 2 * np.pi * np.cos(2 * np.pi * grid64.x), atol=1e-12)


@pytest.mark.parametrize("psi_l", [
    LipschitzKernel(),
    LipschitzKernel(kind="cosine", a=1.0, b=0.4),
    LipschitzKernel(kind="constant", a=0.7),
])
def test_transform_round_trip(grid128, psi_l):
    rng = np.random.default_rng(21)
    kernel = KernelSpec(c=1.0, alpha=0.5, psi_l=psi_l)
    for _ in range(3):
        rho = random_positive_field(grid128, rng)
        u = random_smooth_field(grid128, rng, offset=0.3)
        st = state_from(rho, u, kernel, grid128)
        d = recover_velocity(st)
        assert np.max(np.abs(d.u - u)) <= 1e-8
        # the defining relation du/dx = c Lambda^a rho + g - psi_l * rho
        from epasim.spectral import derivative, fractional_laplacian
        lhs = derivative(d.u, grid128)
        rhs_ = kernel.c * fractional_laplacian(rho, kernel.alpha, grid128) + st.g - st.psi_l_conv()
        assert np.max(np.abs(lhs - rhs_)) <= 1e-8


def test_recover_velocity_equilibrium(grid64):
    st = state_from(np.full(64, 2.0), np.zeros(64), EA_KERNEL, grid64, m0=1.0)
    d = recover_velocity(st)
    np.testing.assert_allclose(d.u, np.full(64, 0.5), atol=1e-13)  # m0 / rho_bar
    st0 = state_from(np.full(64, 2.0), np.zeros(64), EA_KERNEL, grid64)
    d0 = recover_velocity(st0)
    assert np.max(np.abs(d0.u)) < 1e-13
    assert np.max(np.abs(d0.f)) < 1e-13


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_momentum_pinned_exactly(seed):
    grid = Grid(64)
    rng = np.random.default_rng(seed)
    rho = random_positive_field(grid, rng)
    u = random_smooth_field(grid, rng, offset=-0.2)
    st = state_from(rho, u, EA_KERNEL, grid)
    d = recover_velocity(st)
    assert abs(mean(rho * d.u) - st.m0) <= 1e-12 * max(1.0, abs(st.m0))


def test_velocity_split_consistency(grid128):
    rng = np.random.default_rng(31)
    kernel = KernelSpec(c=0.8, alpha=0.6, psi_l=LipschitzKernel(kind="cosine", a=1.0, b=0.3))
    rho = random_positive_field(grid128, rng)
    u = random_smooth_field(grid128, rng)
    st = state_from(rho, u, kernel, grid128)
    d = recover_velocity(st)
    np.testing.assert_allclose(d.u_sing + d.u_lip, d.u, atol=1e-11)
    from epasim.spectral import derivative
    # d(u_lip)/dx = -psi_l * rho + mean(g)
    got = derivative(d.u_lip, grid128)
    expect = -st.psi_l_conv() + mean(st.g)
    np.testing.assert_allclose(got, expect, atol=1e-9)


def test_recover_velocity_vacuum(grid64):
    rho = np.full(64, 1.0)
    rho[5] = 1e-12
    st = SimState(grid=grid64, rho=rho, g=np.zeros(64), t=0.0, rho_bar=mean(rho),
                  m0=0.0, kernel=EA_KERNEL, potential=PotentialSpec())
    with pytest.raises(VacuumError):
        recover_velocity(st)


def test_rhs_equilibrium_is_zero(grid64):
    st = state_from(np.ones(64), np.zeros(64), EA_KERNEL, grid64,
                    potential=PotentialSpec(k=1.0))
    drho, dg = rhs(st)
    assert np.max(np.abs(drho)) < 1e-12
    assert np.max(np.abs(dg)) < 1e-12


def test_rhs_linear_mode_algebra(grid64):
    # rho = rho_bar, g = eps cos -> d(rho)/dt = -rho_bar * g + O(eps^2)
    eps, rho_bar = 1e-6, 1.3
    g = eps * np.cos(2 * np.pi * grid64.x)
    st = SimState(grid=grid64, rho=np.full(64, rho_bar), g=g, t=0.0,
                  rho_bar=rho_bar, m0=0.0, kernel=EA_KERNEL,
                  potential=PotentialSpec(k=1.0))
    drho, dg = rhs(st)
    np.testing.assert_allclose(drho, -rho_bar * g, atol=1e-12 + 1e-3 * eps**2)
    # forcing acts on g only through rho - rho_bar = 0 here
    np.testing.assert_allclose(dg, np.zeros(64), atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_rhs_preserves_means(seed):
    grid = Grid(64)
    rng = np.random.default_rng(seed)
    kernel = KernelSpec(c=1.0, alpha=0.5, psi_l=LipschitzKernel(kind="cosine", a=0.8, b=0.2))
    pot = PotentialSpec(k=-0.7, kreg=RegularPotential(kind="cosine", amp=0.2))
    rho = random_positive_field(grid, rng)
    u = random_smooth_field(grid, rng)
    st = state_from(rho, u, kernel, grid, potential=pot)
    drho, dg = rhs(st)
    assert abs(mean(drho)) < 1e-12
    # mean(psi_l * drho) = mean(psi_l) * mean(drho) = 0, so mean(dg) must vanish too
    assert abs(mean(dg)) < 1e-12


def test_alignment_direct_constant_velocity(grid64):
    rng = np.random.default_rng(41)
    rho = random_positive_field(grid64, rng)
    out = alignment_direct(rho, np.full(64, 0.9), EA_KERNEL, grid64, 2**12)
    assert np.max(np.abs(out)) < 1e-10


def test_alignment_direct_uniform_density(grid64):
    rho_bar = 1.4
    u = np.cos(2 * np.pi * grid64.x)
    got = alignment_direct(np.full(64, rho_bar), u, EA_KERNEL, grid64, 2**14)
    expect = -rho_bar * (2 * np.pi) ** 0.5 * u
    assert np.max(np.abs(got - expect)) <= 0.01 * np.max(np.abs(expect))


def test_alignment_commutator_identity(grid128):
    rng = np.random.default_rng(7)
    kernel = KernelSpec(c=1.0, alpha=0.5, psi_l=LipschitzKernel(kind="cosine", a=1.0, b=0.4))
    for _ in range(3):
        rho = random_positive_field(grid128, rng)
        u = random_smooth_field(grid128, rng, offset=0.2)
        direct = alignment_direct(rho, u, kernel, grid128, 2**14)
        comm = alignment_spectral(rho, u, kernel, grid128)
        scale = np.max(np.abs(comm))
        assert np.max(np.abs(direct - comm)) <= 0.01 * scale


def test_alignment_direct_refinement_guard(grid64):
    with pytest.raises(ValueError):
        alignment_direct(np.ones(64), np.ones(64), EA_KERNEL, grid64, 32)


def test_make_initial_uniform_equilibrium(grid64):
    st = make_initial("uniform", grid64, EA_KERNEL)
    assert st.rho_bar == pytest.approx(1.0)
    assert st.m0 == 0.0
    assert np.max(np.abs(st.g)) < 1e-13
    st.validate()


def test_make_initial_cosine_positive(grid64):
    st = make_initial("cosine", grid64, EA_KERNEL, rho_amp=0.6)
    assert np.min(st.rho) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(ValueError):
        make_initial("cosine", grid64, EA_KERNEL, rho_amp=1.2)


def test_make_initial_rejects_unknown_params(grid64):
    with pytest.raises(ValueError):
        make_initial("cosine", grid64, EA_KERNEL, bogus=1.0)
    with pytest.raises(ValueError):
        make_initial("no-such-preset", grid64, EA_KERNEL)


def test_make_initial_burgers_characteristics_oracle(grid64):
    # inviscid transport: characteristics cross at t* = -1/min(u0'), here 1/(2 pi)
    st = make_initial("burgers-shock", grid64, KernelSpec(c=0.0, alpha=0.5))
    u0 = -np.sin(2 * np.pi * grid64.x)
    np.testing.assert_allclose(
        st.g, np.gradient(u0, grid64.x, edge_order=2), atol=0.05 * 2 * np.pi
    )
    du0 = -2 * np.pi * np.cos(2 * np.pi * grid64.x)
    t_star = -1.0 / du0.min()
    assert t_star == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)


def test_validate_flags_broken_mean(grid64):
    st = make_initial("cosine", grid64, EA_KERNEL, rho_amp=0.3)
    bad = SimState(grid=grid64, rho=st.rho + 0.1, g=st.g, t=0.0, rho_bar=st.rho_bar,
                   m0=st.m0, kernel=st.kernel, potential=st.potential)
    with pytest.raises(Exception):
        bad.validate()
