import numpy as np
import pytest

from galerkin_control.control import CostFunctional, OptimizeOptions, evaluate_cost, optimize
from galerkin_control.dynamics import (
    GalerkinSystem,
    apriori_bound,
    check_declared_lipschitz,
    integrate,
)
from galerkin_control.ebm import (
    AlbedoRamp,
    EbmModel,
    Emissions,
    Region,
    build_ebm_problem,
    ebm_basis,
    ebm_error_prefactor,
    ebm_nonlinearity,
    uniform_field,
)
from galerkin_control.errors import ModelError, PreconditionError, UnsupportedConfigurationError
from galerkin_control.spectral import SpectralField, synthesize

WARM = EbmModel(a=200.0, D=1.0)


def test_albedo_ramp():
    r = AlbedoRamp()
    assert r(-20.0) == 0.62 and r(5.0) == 0.3 and r(-5.0) == pytest.approx(0.46)
    assert r.lipschitz == pytest.approx(0.032)
    assert np.array_equal(r.derivative([-20.0, -5.0, 5.0]), [0.0, -0.032, 0.0])
    with pytest.raises(ModelError):
        AlbedoRamp(alpha_min=0.7)


def test_declared_lipschitz_value():
    m = EbmModel()
    assert m.S_max == pytest.approx(1.241)
    assert m.lipschitz == pytest.approx(1.9 + 340 * 1.241 * 0.032)


def test_model_validation_and_roundtrip():
    with pytest.raises(ModelError):
        EbmModel(b=-1.0)
    with pytest.raises(ModelError):
        EbmModel(D=(0.5, -0.1, 0.5))
    with pytest.raises(ModelError):
        EbmModel(s2=3.0)
    with pytest.raises(ModelError):
        EbmModel.from_dict({"a": 200.0, "albedoo": {}})
    m = EbmModel(a=201.0, emissions=Emissions.ramp(0.5, 2.0),
                 regions=(Region("box", lat=(10.0, 40.0), lon=(350.0, 20.0)),))
    back = EbmModel.from_dict(__import__("json").loads(m.to_json()))
    assert back == m


def test_nonlinearity_saturated_branches():
    b = ebm_basis(WARM, "zonal", 6)
    F = ebm_nonlinearity(WARM, b)
    x = b.grid.nodes[:, 0]
    S = 1 - 0.482 * 0.5 * (3 * x * x - 1)
    warm, cold = np.full(x.size, 5.0), np.full(x.size, -30.0)
    assert np.allclose(F.value(0.0, warm), 340 * S * 0.7 - (200 + 1.9 * 5))
    assert np.allclose(F.value(0.0, cold), 340 * S * 0.38 - (200 - 1.9 * 30))
    assert np.all(F.derivative(0.0, warm) == -1.9)


def _linear_steady_profile(m: EbmModel, x):
    """Ramp inactive: mean and P2 balance of the linear model."""
    T0 = (m.Q * (1 - m.albedo.alpha_min) - m.a) / m.b
    T2 = -m.Q * m.s2 * (1 - m.albedo.alpha_min) / (m.b + 6 * m.D)
    return T0 + T2 * 0.5 * (3 * x * x - 1)


@pytest.mark.parametrize("geometry,band", [("sphere", 6), ("zonal", 8)])
def test_steady_state_matches_linear_balance(geometry, band):
    pr, _ = build_ebm_problem(WARM, geometry, band, horizon=1.0)
    grid = synthesize(pr.initial, pr.basis)
    x = pr.basis.grid.nodes[:, 0]
    assert grid.min() > 0
    assert np.max(np.abs(grid - _linear_steady_profile(WARM, x))) < 1e-4


def test_steady_state_zonal_fixture_is_stationary(ebm_z):
    pr = ebm_z.problem
    sys = GalerkinSystem(pr, pr.basis.size)
    a = pr.initial.coeffs
    assert np.linalg.norm(-sys.lam * a + sys.F(0.0, a)) < 1e-6
    tr = integrate(pr, pr.basis.size, pr.control(0.0))
    assert np.max(np.abs(tr.coeffs - a)) < 1e-6


def test_fixture_ramp_is_active(ebm):
    grid = synthesize(ebm.problem.initial, ebm.problem.basis)
    assert grid.min() < 0 < grid.max()


def test_energy_balance_at_steady_state(ebm):
    pr = ebm.problem
    sys = GalerkinSystem(pr, pr.basis.size)
    Fa = sys.F(0.0, pr.initial.coeffs)
    assert abs(Fa[0]) < 1e-8


def test_variable_diffusivity_sphere_rejected():
    with pytest.raises(UnsupportedConfigurationError):
        build_ebm_problem(EbmModel(D=(0.5, 0.7, 0.9)), "sphere", 4)
    with pytest.raises(UnsupportedConfigurationError):
        ebm_basis(EbmModel(), "torus", 4)


def test_variable_diffusivity_zonal():
    pr, _ = build_ebm_problem(EbmModel(a=200.0, D=(0.5, 0.6, 0.8)), "zonal", 8, horizon=0.5)
    assert np.all(np.diff(pr.basis.eigenvalues) >= 0)


def test_region_masks():
    b = ebm_basis(EbmModel(), "sphere", 8)
    z, lon = b.grid.nodes[:, 0], np.degrees(b.grid.nodes[:, 1])
    assert np.array_equal(Region("arctic", lat=(60.0, 90.0)).mask(b), z >= np.sin(np.pi / 3))
    wrap = Region("w", lon=(340.0, 20.0)).mask(b)
    assert np.array_equal(wrap, (lon >= 340) | (lon <= 20))
    assert Region("n", nodes=(0, 5)).mask(b).sum() == 2
    with pytest.raises(ModelError):
        Region("n", nodes=(b.grid.size,)).mask(b)
    with pytest.raises(ModelError):
        build_ebm_problem(EbmModel(a=200.0, regions=(Region("none", lat=(91.0, 95.0)),)),
                          "zonal", 4)


def test_control_operator_regions(ebm):
    op = ebm.problem.control_op
    assert op.names == ["arctic"] and len(op.regions) == 1
    assert np.all(ebm.problem.lower == -10.0) and np.all(ebm.problem.upper == 10.0)


def test_emissions(tmp_path):
    assert not Emissions.constant(2.0).time_dependent
    r = Emissions.ramp(0.5, 2.0)
    assert r.time_dependent and r.uniform_values == (0.0, 1.0)
    p = tmp_path / "e.csv"
    p.write_text("# scenario\nt,mode_or_node,value\n0,0:0,0\n1,0:0,3.5449077\n0,4,1\n")
    e = Emissions.from_csv(p)
    b = ebm_basis(EbmModel(), "sphere", 4)
    E = e.field_function(b)
    f = E(0.5)
    assert np.allclose(np.delete(f, 4), 0.5)
    assert f[4] == pytest.approx(1.5)
    bad = tmp_path / "bad.csv"
    bad.write_text("time,node,value\n")
    with pytest.raises(ModelError):
        Emissions.from_csv(bad)
    with pytest.raises(ModelError):
        Emissions(entries=(("9:0", (0.0,), (1.0,)),)).field_function(b)


def test_emissions_change_dynamics():
    pr, _ = build_ebm_problem(WARM, "zonal", 6, horizon=0.5)
    hot = WARM.__class__(**{**WARM.__dict__, "emissions": Emissions.constant(4.0)})
    pr_hot, _ = build_ebm_problem(hot, "zonal", 6, horizon=0.5, initial=pr.initial)
    a = integrate(pr, 6, pr.control(0.0)).final().coeffs[0]
    b = integrate(pr_hot, 6, pr_hot.control(0.0)).final().coeffs[0]
    assert b > a


def test_prefactor():
    assert ebm_error_prefactor(2.0, 1.0, 0.5) == 24.0
    with pytest.raises(PreconditionError):
        ebm_error_prefactor(1.0, 1.0, 0.0)


def test_cooling_control_beats_zero(ebm):
    pr, cost = ebm.problem, ebm.cost
    zero = pr.control(0.0)
    sol = optimize(pr, 25, cost, zero)
    assert sol.converged
    assert sol.cost < evaluate_cost(pr, 25, zero, cost)
    assert sol.control.values.mean() < 0


def test_target_at_steady_state_needs_no_control(ebm):
    pr = ebm.problem
    cost = CostFunctional(pr.initial, mu=0.05)
    sol = optimize(pr, ebm.N_ref, cost, pr.control(0.0), OptimizeOptions(tol=1e-6))
    assert sol.converged and sol.control.norm() < 1e-6


def test_apriori_bound_default_parameters(ebm):
    pr = ebm.problem
    u = pr.random_control(np.random.default_rng(3))
    tr = integrate(pr, 25, u)
    bound = apriori_bound(pr, tr, u, pr.nonlinearity.lipschitz)
    assert np.all(tr.norms() <= bound)
    assert check_declared_lipschitz(pr, tr)


def test_uniform_field_zonal_and_sphere():
    for geom in ("sphere", "zonal"):
        b = ebm_basis(EbmModel(), geom, 5)
        assert np.allclose(synthesize(uniform_field(b, 2.5), b), 2.5)


@pytest.mark.parametrize("geometry,band", [("sphere", 6), ("zonal", 10)])
def test_zonally_symmetric_trajectory_matches_analytic(geometry, band):
    """With the ramp inactive a P3 perturbation decays at rate b + 12 D on both geometries."""
    from galerkin_control.spectral import analyze

    base, _ = build_ebm_problem(WARM, geometry, band, horizon=0.5)
    x = base.basis.grid.nodes[:, 0]
    P3 = 0.5 * (5 * x**3 - 3 * x)
    grid0 = synthesize(base.initial, base.basis) + 2.0 * P3
    pr = base.with_(initial=analyze(grid0, base.basis, base.basis.size), dt=1e-3)
    tr = integrate(pr, pr.basis.size, pr.control(0.0))
    rate = WARM.b + 12 * WARM.D
    for i in range(0, len(tr.times), 100):
        exact = _linear_steady_profile(WARM, x) + 2.0 * np.exp(-rate * tr.times[i]) * P3
        got = synthesize(SpectralField(pr.basis.basis_id, tr.coeffs[i]), pr.basis)
        assert np.max(np.abs(got - exact)) < 5e-5


def test_control_operator_examples():
    from galerkin_control.ebm import ebm_control_operator

    b = ebm_basis(EbmModel(), "sphere", 6)
    whole = EbmModel(regions=(Region("globe"),))
    assert ebm_control_operator(whole, b).lipschitz() == pytest.approx(1.0)
    two = EbmModel(regions=(Region("n", lat=(0.0, 90.0)), Region("band", lat=(-30.0, 30.0))))
    op = ebm_control_operator(two, b)
    field = op.field(np.ones(op.n_dofs))
    m0, m1 = op.regions
    assert np.all(field[m0 & m1] == 2.0) and np.all(field[~(m0 | m1)] == 0.0)
    one = ebm_control_operator(EbmModel(), b)
    f1 = one.field(np.random.default_rng(0).uniform(-10, 10, one.n_dofs))
    assert np.all(f1[~one.regions[0]] == 0.0)


def test_prefactor_arithmetic():
    assert ebm_error_prefactor(1.0, 1.0, 8.0) == 1.0
    assert ebm_error_prefactor(3.0, 2.0, 2.0) == 2 * ebm_error_prefactor(3.0, 2.0, 4.0)
    C, Td, mu = 2.5, 1.5, 0.3
    sigma = mu / 2
    assert ebm_error_prefactor(C, Td, mu) == pytest.approx(2 * (C + Td) / sigma)


def test_default_parameters_zonal_steady_state_and_apriori():
    pr, _ = build_ebm_problem(EbmModel(), "zonal", 20, horizon=2.0, dt=0.02)
    sys = GalerkinSystem(pr, pr.basis.size)
    a = pr.initial.coeffs
    assert np.linalg.norm(-sys.lam * a + sys.F(0.0, a)) < 1e-6
    u = pr.control(0.0)
    tr = integrate(pr, pr.basis.size, u)
    assert np.all(tr.norms() <= apriori_bound(pr, tr, u, pr.nonlinearity.lipschitz))
