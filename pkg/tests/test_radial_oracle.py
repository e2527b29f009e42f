import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onelap.errors import ParameterError
from onelap.mesh import assemble_mesh
from onelap.radial_oracle import (
    example_flat,
    example_nonunique,
    example_power,
    gamma_to_zero_profile,
    power_sweep,
    radial_dual_norm,
    residual_check,
)


def test_power_sweep_instances():
    sweep = power_sweep()
    assert len(sweep) == 15
    assert all(1 < q < N for N, q, _ in sweep)
    assert (3, 2.5, 2.0) in sweep and (2, 2.5, 1.0) not in sweep


@pytest.mark.parametrize("N, q, gamma", power_sweep())
def test_power_example_solves_equation(N, q, gamma):
    sol = example_power(N, q, gamma)
    # by hand: h(u) f = (r^a)^-gamma (N-1) r^-q = (N-1)/r = -div(-e_r)
    r = np.linspace(0.05, 1, 20)
    np.testing.assert_allclose(sol.u(r) ** -gamma * (N - 1) * r ** -q, (N - 1) / r, rtol=1e-12)
    rep = residual_check(sol, assemble_mesh(N, 1.0, 64))
    assert rep.max_relative <= 1e-9
    assert rep.pairing_defect == 0.0
    assert rep.boundary == "flux"


@pytest.mark.parametrize("N", [1, 2, 3])
def test_flat_example(N):
    rho = 0.4
    sol = example_flat(N, rho)
    mesh = assemble_mesh(N, 1.0, 50)  # rho is a node
    rep = residual_check(sol, mesh)
    assert rep.max_relative <= 1e-9
    assert not rep.checked[np.isclose(mesh.nodes, rho)].any()
    assert rep.pairing_defect == pytest.approx(0.0, abs=1e-14)
    assert rep.boundary == "trace-zero"
    # total variation of the unit jump is the sphere measure at rho
    assert rep.tv == pytest.approx(rho ** (N - 1))


def test_nonunique_pair():
    first, second = example_nonunique(3, 1.5, 0.5)
    mesh = assemble_mesh(3, 1.0, 40)
    r1, r2 = residual_check(first, mesh), residual_check(second, mesh)
    assert r1.max_relative <= 1e-9 and r2.max_relative <= 1e-9
    assert r1.boundary == "none" and r1.flags["weak_trace_claimed"]
    assert r2.boundary == "trace-zero" and not r2.flags["weak_trace_claimed"]
    assert first.z(1.0) == pytest.approx(-0.25)
    np.testing.assert_array_equal(first.z(mesh.faces), second.z(mesh.faces))


def test_pairing_defect_for_scaled_field():
    sol = example_flat(2, 0.5)
    mesh = assemble_mesh(2, 1.0, 64)
    rep = residual_check(sol, mesh, z_override=lambda r: 0.9 * sol.z(r))
    assert rep.pairing_defect == pytest.approx(0.1 * rep.tv, rel=1e-12)


def test_residual_check_domain_mismatch():
    with pytest.raises(ParameterError):
        residual_check(example_power(2, 1.5, 1.0), assemble_mesh(3, 1.0, 16))


def test_example_parameter_errors():
    with pytest.raises(ParameterError):
        example_power(2, 2.5, 1.0)
    with pytest.raises(ParameterError):
        example_power(3, 1.5, 0.0)
    with pytest.raises(ParameterError):
        example_flat(2, 1.0)


def test_to_csv(tmp_path):
    sol = example_power(2, 1.5, 1.0)
    sol.to_csv(tmp_path / "sol.csv", [0.0, 0.5, 1.0])
    text = (tmp_path / "sol.csv").read_text().splitlines()
    assert text[0] == "r,u,z_radial"
    assert len(text) == 4


def test_gamma_to_zero_profile():
    rep = gamma_to_zero_profile(1.5, 2.0, (0.2, 0.1, 0.05))
    assert rep.ok
    # independent check at two radii
    assert rep.profiles[0.05][np.searchsorted(rep.r, 0.5)] == pytest.approx(0.5 ** (-0.5 / 0.05))
    assert not gamma_to_zero_profile(1.5, 2.0, (2.0, 1.0)).ok
    with pytest.raises(ParameterError):
        gamma_to_zero_profile(1.5, 1.0, (0.1,))
    with pytest.raises(ParameterError):
        gamma_to_zero_profile(1.5, 2.0, (0.1, 0.2))


@pytest.mark.parametrize("N, q", [(2, 1.5), (3, 1.1), (3, 2.5)])
def test_dual_norm_of_oracle_source(N, q):
    sol = example_power(N, q, 1.0)
    mesh = assemble_mesh(N, 1.0, 128)
    g = lambda r: (N - 1) * sol.u(r) ** -1.0 * r ** -q
    with np.errstate(all="ignore"):
        assert radial_dual_norm(g, mesh) == pytest.approx(1.0, rel=1e-9)


def test_dual_norm_examples():
    mesh = assemble_mesh(2, 1.0, 64)
    assert radial_dual_norm(np.zeros(65), mesh) == 0.0
    assert radial_dual_norm(np.full(65, 2.0), mesh) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        radial_dual_norm(np.zeros(10), mesh)


@settings(max_examples=30)
@given(st.integers(1, 3), st.floats(0.1, 5), st.floats(0.5, 4))
def test_dual_norm_constant_and_homogeneous(N, c, R):
    mesh = assemble_mesh(N, R, 256)
    g = np.full(257, c)
    # G(r) / r^(N-1) = c r / N, largest at R
    assert radial_dual_norm(g, mesh) == pytest.approx(c * R / N, rel=1e-4)
    assert radial_dual_norm(3.0 * g, mesh) == pytest.approx(3.0 * radial_dual_norm(g, mesh), rel=1e-12)


def test_power_point_values():
    assert example_power(3, 2.0, 1.0).u(0.5) == pytest.approx(2.0)
    assert example_power(2, 1.5, 0.5).u(1.0) == 1.0
    # q -> 1: u -> 1 pointwise inside the ball
    assert example_power(2, 1.0 + 1e-9, 1.0).u(0.3) == pytest.approx(1.0, abs=1e-8)


def test_flat_point_values():
    sol = example_flat(2, 0.5)
    assert sol.z(0.25) == -0.5
    assert abs(sol.z(0.5)) == 1.0
    assert sol.z(1.0) == -0.5
    # -(1/r)(r z)' = 2/rho inside, computed by hand from r z = -r^2/rho
    assert 2 / 0.5 == sol.datum.values(0.25, 2)


def test_nonunique_point_values():
    a, b = example_nonunique(2, 1.5, 0.5)
    level = 0.5 ** -0.5
    assert a.u(0.5) == pytest.approx(level) and b.u(0.5) == pytest.approx(level)
    assert a.u(1.0) == pytest.approx(level) and b.u(1.0) == 0.0


def test_degeneration_point_values():
    rep = gamma_to_zero_profile(1.5, 2.0, (0.01,), r=np.array([0.9, 1.0, 1.1]))
    np.testing.assert_allclose(rep.profiles[0.01], [0.9 ** -50, 1.0, 1.1 ** -50])
    assert rep.profiles[0.01][0] == pytest.approx(194, rel=1e-2)
    assert rep.profiles[0.01][2] == pytest.approx(0.0085, rel=1e-2)
