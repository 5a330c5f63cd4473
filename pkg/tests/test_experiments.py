import numpy as np
import pytest

from benard_cda.assimilation import NoiseModel, NudgeSpec, ObservationPolicy
from benard_cda.errors import BlowUpError, ConfigurationError
from benard_cda.experiments import (
    InitialCondition,
    RRMSESeries,
    ScenarioConfig,
    fit_decay_rate,
    rrmse,
    run_forecast,
    run_forecasts,
    run_grouped,
    run_reference,
    run_twin,
    run_twin_batch,
    scaled_stride,
    scenario_catalog,
    select,
)
from benard_cda.grid import GridSpec, State
from benard_cda.solver import SolverParams, StepperMemory, simulate, step

G = GridSpec(20, 10)
P = SolverParams(Ra=1e4, Pr=0.71, dt=0.01)


def small_config(**kw):
    base = dict(name="t", grid=G, params=P, policy=ObservationPolicy(5),
                spec=NudgeSpec.from_preset("cda", "medium"), nsteps=30)
    base.update(kw)
    return ScenarioConfig(**base)


def series_from(t, values):
    v = np.asarray(values, float)
    return RRMSESeries(np.asarray(t, float), v, v.copy(), v.copy(), [""] * len(t))


# -- initial conditions ---------------------------------------------------------

def test_reference_ic_aliases_to_single_x_mode_on_full_grid():
    g = GridSpec()
    th = InitialCondition("reference").build(g).interior("theta")
    x, _ = np.meshgrid(g.x_centers, g.y_centers)
    np.testing.assert_allclose(th, np.sin(2 * np.pi * x), rtol=0, atol=1e-9)


def test_shear_ic_profile():
    g = GridSpec(20, 100)
    s = InitialCondition("shear").build(g)
    u = s.interior("u")
    y = g.y_centers
    band = (y >= 0.4) & (y <= 0.6)
    np.testing.assert_allclose(u[band, 3], 0.5 * np.sin(2 * np.pi / 20 * y[band]))
    assert not u[~band].any()
    assert not s.interior("v").any() and not s.interior("theta").any()


def test_unknown_ic_rejected():
    with pytest.raises(ConfigurationError):
        InitialCondition("bogus")


# -- rrmse ---------------------------------------------------------------------

def nonzero_state(grid, seed=0):
    rng = np.random.default_rng(seed)
    return State.from_interior(grid, u=rng.standard_normal(grid.interior_shape("u")),
                               v=rng.standard_normal(grid.interior_shape("v")),
                               theta=rng.standard_normal(grid.interior_shape("theta")))


def test_rrmse_examples():
    ref = nonzero_state(G)
    assert tuple(rrmse(ref, ref)) == (0.0, 0.0, 0.0)
    assert tuple(rrmse(State.zeros(G), ref)) == pytest.approx((1.0, 1.0, 1.0), abs=1e-15)
    double = State.from_interior(G, u=2 * ref.interior("u"), v=2 * ref.interior("v"),
                                 theta=2 * ref.interior("theta"))
    assert tuple(rrmse(double, ref)) == pytest.approx((1.0, 1.0, 1.0), abs=1e-15)


def test_rrmse_degenerate_reference_uses_absolute_norm():
    ref = State.from_interior(G, theta=np.ones(G.interior_shape("theta")))
    est = nonzero_state(G, 1)
    e = rrmse(est, ref)
    assert e.degenerate == frozenset({"u", "v"})
    assert e.u == pytest.approx(np.linalg.norm(est.interior("u")))


def test_rrmse_grid_mismatch():
    with pytest.raises(ConfigurationError):
        rrmse(State.zeros(G), State.zeros(GridSpec(10, 10)))


# -- decay fit -------------------------------------------------------------------

def test_fit_recovers_exact_exponential():
    t = np.linspace(0, 20, 2001)
    fit = fit_decay_rate(series_from(t, 3.0 * np.exp(-0.7 * t)), (2, 18))
    C, beta = fit["theta"]
    assert abs(C - 3.0) / 3.0 <= 1e-8
    assert abs(beta - 0.7) / 0.7 <= 1e-8


def test_fit_constant_series_has_zero_rate():
    t = np.linspace(0, 10, 101)
    assert fit_decay_rate(series_from(t, np.full(101, 0.3)), (1, 9))["u"][1] == pytest.approx(0, abs=1e-12)


def test_fit_with_one_percent_noise():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 20, 2001)
    vals = 0.5 * np.exp(-0.4 * t) * (1 + 0.01 * rng.standard_normal(t.size))
    assert abs(fit_decay_rate(series_from(t, vals), (2, 20))["v"][1] - 0.4) <= 0.05 * 0.4


def test_fit_clips_tiny_values():
    t = np.linspace(0, 10, 11)
    fit = fit_decay_rate(series_from(t, np.zeros(11)), (0, 10))
    assert fit["theta"][0] == pytest.approx(1e-14) and fit["theta"][1] == pytest.approx(0, abs=1e-9)


def test_fit_window_outside_series():
    t = np.linspace(0, 10, 11)
    with pytest.raises(ConfigurationError):
        fit_decay_rate(series_from(t, np.ones(11)), (5, 30))


# -- reference runs --------------------------------------------------------------

def test_reference_restart_from_snapshot_is_bit_exact():
    cfg = small_config(nsteps=20)
    traj = run_reference(cfg, snapshot_steps=[8, 20])
    snap = traj.snapshots[8]
    state, memory = snap.state, snap.memory
    for k in range(9, 21):
        state, memory = step(state, P, memory, step_index=k)
    for kind in ("u", "v", "theta", "p"):
        np.testing.assert_array_equal(getattr(state, kind), getattr(traj.final, kind))
        np.testing.assert_array_equal(getattr(state, kind), getattr(traj.snapshots[20].state, kind))


def test_reference_stores_fifty_samples_at_stride_twenty():
    cfg = ScenarioConfig(policy=ObservationPolicy(20, 10), nsteps=20)
    traj = run_reference(cfg)
    assert sorted(traj.observations) == [0, 10]
    assert all(o.count("theta") == 50 for o in traj.observations.values())


def test_zero_reference_gives_zero_observations():
    cfg = small_config(reference_ic=InitialCondition("zero"), nsteps=10)
    traj = run_reference(cfg)
    assert len(traj.observations) == 10
    for obs in traj.observations.values():
        assert all(not v.any() for v in obs.values.values())


# -- twins ------------------------------------------------------------------------

def test_zero_coefficients_equal_free_run():
    cfg = small_config(spec=NudgeSpec("cda"), snapshot_steps=(30,),
                       assimilated_ic=InitialCondition("shear"))
    res = run_twin(cfg)
    est, _ = res.snapshots[30]
    free = simulate(InitialCondition("shear").build(G), P, 30)
    for kind in ("u", "v", "theta", "p"):
        np.testing.assert_array_equal(getattr(est, kind), getattr(free, kind))


def test_dense_na_monotone_over_first_hundred_steps():
    cfg = small_config(policy=ObservationPolicy(1), spec=NudgeSpec.from_preset("na", "large"),
                       nsteps=100)
    s = run_twin(cfg).series
    for var in ("theta", "u", "v"):
        assert np.all(np.diff(s.values(var)) < 0)


def test_series_shape_and_initial_error():
    cfg = small_config(nsteps=25)
    s = run_twin(cfg).series
    assert len(s) == 25
    assert s.t[0] == pytest.approx(0.01) and s.t[-1] == pytest.approx(0.25)
    assert s.initial.theta == 1.0
    # the reference starts at rest: the velocity denominator is degenerate at t = 0
    assert s.initial.degenerate == frozenset({"u", "v"})
    assert all(np.all(s.values(v) >= 0) for v in ("theta", "u", "v"))


def test_step_zero_rrmse_is_one_for_nonzero_references():
    cfg = small_config(reference_ic=InitialCondition("shear"), nsteps=2)
    e = run_twin(cfg).series.initial
    assert e.u == 1.0 and "theta" in e.degenerate


def test_twin_is_deterministic_including_noise():
    cfg = small_config(noise=NoiseModel(0.05, 7), nsteps=15)
    a, b = run_twin(cfg).series, run_twin(cfg).series
    for var in ("theta", "u", "v"):
        np.testing.assert_array_equal(a.values(var), b.values(var))
    c = run_twin(small_config(noise=NoiseModel(0.05, 8), nsteps=15)).series
    assert not np.array_equal(a.theta, c.theta)


def test_batched_twins_match_individual_runs():
    cfgs = [small_config(name="a"), small_config(name="b", spec=NudgeSpec.from_preset("na", "small"))]
    batch = run_twin_batch(cfgs)
    for cfg, res in zip(cfgs, batch):
        alone = run_twin(cfg)
        np.testing.assert_array_equal(res.series.theta, alone.series.theta)


def test_batch_requires_shared_reference():
    with pytest.raises(ConfigurationError):
        run_twin_batch([small_config(), small_config(nsteps=31)])
    out = run_grouped([small_config(name="a", nsteps=5), small_config(name="b", nsteps=6)])
    assert [r.config.name for r in out] == ["a", "b"]


def test_blow_up_names_scenario():
    cfg = small_config(params=SolverParams(Ra=1e4, Pr=0.71, dt=50.0), nsteps=50)
    with pytest.raises(BlowUpError) as exc:
        run_twin(cfg)
    assert exc.value.scenario == "t"


def test_config_validation():
    with pytest.raises(ConfigurationError):
        small_config(nsteps=0)
    with pytest.raises(ConfigurationError):
        small_config(policy=ObservationPolicy(3))
    with pytest.raises(ConfigurationError):
        small_config(snapshot_steps=(40,))
    assert small_config().digest() == small_config().digest()
    assert small_config().digest() != small_config(nsteps=31).digest()


# -- forecasts ----------------------------------------------------------------------

def test_forecast_with_zero_horizon_equals_assimilation_error():
    cfg = small_config(nsteps=40)
    fc = run_forecast(cfg, 0.2, 0.0)
    series = run_twin(cfg).series
    for var in ("theta", "u", "v"):
        assert fc.errors[var].shape == (1,)
        assert fc.final(var) == series.values(var)[19]


def test_identical_twin_forecast_has_zero_error():
    cfg = small_config(assimilated_ic=InitialCondition("reference"), nsteps=40)
    fc = run_forecast(cfg, 0.1, 0.2)
    for var in ("theta", "u", "v"):
        assert not fc.errors[var].any()


def test_forecast_branches_match_separate_runs():
    cfg = small_config(nsteps=40)
    both = run_forecasts(cfg, [0.1, 0.2], 0.1)
    single = run_forecast(cfg, 0.2, 0.1)
    np.testing.assert_array_equal(both[1].errors["theta"], single.errors["theta"])
    assert both[0].t[0] == pytest.approx(0.1) and both[0].t[-1] == pytest.approx(0.2)


def test_forecast_window_checked():
    with pytest.raises(ConfigurationError):
        run_forecast(small_config(nsteps=10), 0.1, 0.1)


# -- catalog ---------------------------------------------------------------------

def test_catalog_contents():
    cat = {e.name: e for e in scenario_catalog()}
    left = cat["fig2-left"]
    labels = [label for label, _ in left.members]
    assert {"cda-TV", "na-TV"} <= set(labels)
    cda = dict(left.members)["cda-TV"]
    na = dict(left.members)["na-TV"]
    assert cda.policy.stride == na.policy.stride == 20
    assert (cda.spec.mu_theta, cda.spec.mu_u) == (0.1, 0.1)
    assert (na.spec.alpha_theta, na.spec.alpha_u) == (1.5, 1.5)

    fig10 = cat["fig10"]
    assert len(fig10.members) == 4
    assert {c.spec.interpolant.value for c in fig10.configs()} == {"nearest", "linear", "cubic",
                                                                     "spline"}
    assert all(c.policy.stride == 10 and c.policy.time_every == 10 and c.spec.mu_theta == 0.5
               for c in fig10.configs())

    fig17 = cat["fig17"]
    assert {c.policy.stride for c in fig17.configs()} == {20, 10, 5}
    assert all(c.reference_ic.kind == "shear" and max(c.spec.coefficient("theta"), c.spec.coefficient("u")) in (0.1, 1.5)
               for c in fig17.configs())


def test_catalog_full_matrix_and_filter():
    cat = scenario_catalog()
    fig234 = [c for e in select(cat, "fig[234]-*") for c in e.configs()]
    assert len(fig234) == 3 * 3 * 3 * 2
    assert [e.name for e in select(cat, "fig2-*")] == ["fig2-left", "fig2-middle", "fig2-right"]
    assert select(cat, "nothing*") == []
    quartet = [label for label, _ in select(cat, "fig8-left")[0].members]
    assert sorted(quartet) == ["CDA", "CDA-Time", "NA", "NA-Time"]
    noise = select(cat, "fig12-left")[0].configs()[0].noise
    assert noise.epsilon == 0.05


def test_scaled_strides():
    assert [scaled_stride(s, GridSpec()) for s in (20, 10, 5)] == [20, 10, 5]
    assert [scaled_stride(s, GridSpec(100, 50)) for s in (20, 10, 5)] == [10, 5, None]
    assert {e.name for e in scenario_catalog(GridSpec(100, 50), nsteps=10)} >= {"fig2-left", "fig10"}
