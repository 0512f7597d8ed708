import numpy as np
import pytest

from waveinv import inverse as inv
from waveinv.calculus import Grid1D, NodeFn
from waveinv.carleman import make_params
from waveinv.errors import ConfigurationError, ParameterError, PreconditionError
from waveinv.wave import ContinuousData, TimeGrid, observe, solve

DATA = ContinuousData(y0=lambda x: 1.0 + 0 * x, g0=np.cos, g1=np.cos)


def fixture(N=16, T=1.6):
    g = Grid1D(N)
    tg = TimeGrid.for_grid(g, T)
    return g, tg, DATA.sample(g, tg)


def params(T=1.6):
    return make_params(-0.5, 0.9, 2.0, T, eps=0.1, mode="inverse")


def source(g, tg, f, q=None, R=None):
    R = np.ones((tg.steps + 1, g.N + 2)) if R is None else R
    q = g.zeros() if q is None else q
    return inv.SourceSetup.build(NodeFn(g, f), R, q, tg)


def test_source_setup_records_constants():
    g, tg, _ = fixture()
    s = source(g, tg, np.sin(np.pi * g.x))
    assert s.r == 1.0 and s.K == pytest.approx(np.sqrt(tg.length))
    with pytest.raises(PreconditionError):
        source(g, tg, g.x, R=np.zeros((tg.steps + 1, g.N + 2)))
    with pytest.raises(ParameterError):
        inv.SourceSetup.build(NodeFn(g, g.x), np.ones((tg.steps + 1, g.N + 2)), NodeFn(g, np.full(g.N + 2, 9.0)), tg, m=5)


def test_zero_source_gives_zero_trajectory():
    g, tg, _ = fixture()
    assert not inv.solve_source_problem(source(g, tg, np.zeros(g.N + 2)), tg).y.any()


def test_source_linearity():
    g, tg, _ = fixture()
    f = np.random.default_rng(0).normal(size=g.N + 2)
    u1 = inv.solve_source_problem(source(g, tg, f), tg).y
    u3 = inv.solve_source_problem(source(g, tg, -2.5 * f), tg).y
    assert np.max(np.abs(u3 + 2.5 * u1)) <= 1e-12 * np.max(np.abs(u3))


def test_localized_source_reaches_boundary():
    g = Grid1D(31)
    f = np.zeros(g.N + 2)
    f[8] = 1.0  # x = 0.25, distance 0.75 to x = 1
    short = TimeGrid.for_grid(g, 0.5)
    long = TimeGrid.for_grid(g, 1.2)
    flux_short = observe(inv.solve_source_problem(source(g, short, f), short)).flux_norm
    flux_long = observe(inv.solve_source_problem(source(g, long, f), long)).flux_norm
    assert flux_long > 0
    assert flux_short < 1e-3 * flux_long


def test_source_stability_reports():
    g, tg, _ = fixture()
    rep = inv.source_stability(source(g, tg, np.zeros(g.N + 2)), tg, params())
    assert rep.degenerate and np.isnan(rep.ratio_inverse)
    rep = inv.source_stability(source(g, tg, np.sin(np.pi * g.x)), tg, params())
    assert not rep.degenerate
    assert np.isfinite(rep.ratio_direct) and np.isfinite(rep.ratio_inverse)
    assert rep.ratio_inverse == pytest.approx(rep.lhs / (rep.flux_term + rep.tych_term))
    assert rep.params["mode"] == "inverse"


def test_source_stability_needs_inverse_params():
    g, tg, _ = fixture()
    with pytest.raises(ConfigurationError):
        inv.source_stability(source(g, tg, g.x), tg, make_params(-0.5, 0.5, 2.0, 1.6, eps=0.1))
    with pytest.raises(ConfigurationError):
        inv.source_stability(source(g, tg, g.x), tg, params(T=2.0))


def test_source_stability_uniform():
    ratios = []
    for N in (15, 31, 63, 127):
        g, tg, _ = fixture(N)
        ratios.append(inv.source_stability(source(g, tg, np.sin(np.pi * g.x)), tg, params()).ratio_inverse)
    assert max(ratios) / min(ratios) <= 3.0


def test_potential_pair_degenerate_and_symmetric():
    g, tg, prob = fixture()
    p = NodeFn(g, np.ones(g.N + 2))
    q = NodeFn(g, 1 + 0.1 * np.sin(2 * np.pi * g.x))
    assert inv.potential_stability(p, p, prob, tg, params()).degenerate
    a = inv.potential_stability(p, q, prob, tg, params())
    b = inv.potential_stability(q, p, prob, tg, params())
    for k in ("lhs", "flux_term", "tych_term", "ratio_inverse"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), rel=1e-6)


def test_reduction_identity():
    g, tg, prob = fixture()
    p = NodeFn(g, np.ones(g.N + 2))
    q = NodeFn(g, 1 + 0.1 * np.sin(2 * np.pi * g.x))
    pot = inv.potential_stability(p, q, prob, tg, params())
    yp = solve(prob.with_q(p), tg).y
    src = inv.source_stability(inv.SourceSetup.build(p - q, yp, q, tg), tg, params())
    for k in ("lhs", "flux_term", "tych_term", "ratio_inverse", "ratio_direct"):
        assert getattr(pot, k) == pytest.approx(getattr(src, k), rel=1e-12, abs=1e-15)


def test_positivity_assumption():
    g, tg, _ = fixture()
    p = NodeFn(g, np.ones(g.N + 2))
    zero = ContinuousData().sample(g, tg)
    with pytest.raises(PreconditionError, match="positivity"):
        inv.potential_stability(p, p * 1.1, zero, tg, params())
    bump = ContinuousData(y0=lambda x: np.sin(np.pi * x)).sample(g, tg)
    with pytest.raises(PreconditionError, match="positivity"):
        inv.potential_stability(p, p * 1.1, bump, tg, params(), r=0.5)
    assert not inv.potential_stability(p, p * 1.1, bump, tg, params(), r=0.1).degenerate
    _, _, good = fixture()
    with pytest.raises(ParameterError):
        inv.potential_stability(p, p * 10, good, tg, params(), m=5)


def model(N=16, T=1.6, q_true=None):
    g, tg, prob = fixture(N, T)
    qt = NodeFn(g, 1 + 0.5 * np.sin(np.pi * g.x)) if q_true is None else q_true
    target = observe(solve(prob.with_q(qt), tg))
    return g, tg, prob, qt, target


def test_misfit_self_target_and_positive():
    g, tg, prob, qt, target = model()
    cfg = inv.ReconConfig()
    assert inv.misfit_J(qt, target, prob, tg, cfg) <= 1e-20
    rng = np.random.default_rng(1)
    for _ in range(5):
        q = NodeFn(g, rng.uniform(-2, 2, g.N + 2))
        assert inv.misfit_J(q, target, prob, tg, cfg) >= 0


def test_misfit_continuity():
    g, tg, prob, qt, target = model()
    cfg = inv.ReconConfig()
    q0 = np.ones(g.N + 2)
    J0 = inv.misfit_J(q0, target, prob, tg, cfg)
    diffs = []
    for d in (1e-2, 1e-3, 1e-4):
        q = q0.copy()
        q[5] += d
        diffs.append(abs(inv.misfit_J(q, target, prob, tg, cfg) - J0))
    assert diffs[1] / diffs[0] == pytest.approx(0.1, rel=0.1)
    assert diffs[2] / diffs[1] == pytest.approx(0.1, rel=0.1)


def test_gradient_vanishes_at_minimum_and_boundary():
    g, tg, prob, qt, target = model()
    cfg = inv.ReconConfig()
    assert np.max(np.abs(inv.grad_J(qt, target, prob, tg, cfg).values)) <= 1e-9
    gr = inv.grad_J(NodeFn(g, np.ones(g.N + 2)), target, prob, tg, cfg).values
    assert gr[0] == 0.0 and gr[-1] == 0.0 and np.abs(gr).max() > 0


@pytest.mark.parametrize("tw", [0.0, 1.0, 3.0])
def test_gradient_matches_finite_differences(tw):
    g, tg, prob, qt, target = model(N=12)
    cfg = inv.ReconConfig(tych_weight=tw)
    rng = np.random.default_rng(3)
    q = np.r_[0.0, rng.uniform(0, 2, g.N), 0.0]
    gr = inv.grad_J(q, target, prob, tg, cfg).values
    for _ in range(3):
        d = np.r_[0.0, rng.normal(size=g.N), 0.0]
        e = 1e-5
        fd = (inv.misfit_J(q + e * d, target, prob, tg, cfg) - inv.misfit_J(q - e * d, target, prob, tg, cfg)) / (2 * e)
        assert np.dot(gr, d) == pytest.approx(fd, rel=1e-5)


def test_reconstruct_from_truth_stops_at_once():
    g, tg, prob, qt, target = model()
    res = inv.reconstruct(target, prob, tg, inv.ReconConfig(), qt, q_true=qt)
    assert res.iterations == 0 and res.status == "converged"
    assert res.l2_error_vs_truth == 0.0


def test_reconstruct_recovers_potential():
    g, tg, prob, qt, target = model(N=32, T=2.0)
    res = inv.reconstruct(target, prob, tg, inv.ReconConfig(), NodeFn(g, np.ones(g.N + 2)), q_true=qt)
    assert res.l2_error_vs_truth <= 5e-2
    assert np.all(np.diff(res.misfit_history) <= 0)


def test_reconstruct_respects_box():
    g, tg, prob, qt, target = model(q_true=None)
    cfg = inv.ReconConfig(m=1.2, max_iter=30)
    res = inv.reconstruct(target, prob, tg, cfg, NodeFn(g, np.ones(g.N + 2)), q_true=qt)
    assert np.max(np.abs(res.q_rec.interior)) <= 1.2
    assert np.all(np.diff(res.misfit_history) <= 0)
    with pytest.raises(ConfigurationError):
        inv.reconstruct(target, prob, tg, cfg, NodeFn(g, np.full(g.N + 2, 2.0)))


def test_reconstruct_with_filter():
    g, tg, prob, qt, target = model(N=32, T=2.0)
    delta = 0.5
    cfg = inv.ReconConfig(filtering_delta=delta, max_iter=100)
    q0 = NodeFn(g, np.ones(g.N + 2))
    res = inv.reconstruct(target, prob, tg, cfg, q0, q_true=qt)
    rep = inv.filtering_check(res.q_rec - q0, g.h, delta)
    assert rep.f_ok
    assert np.all(np.diff(res.misfit_history) <= 0)


def test_recon_config_validation():
    for kw in (dict(m=0.0), dict(step_init=-1.0), dict(armijo_c=1.5), dict(tych_weight=-1.0),
               dict(filtering_delta=0.0)):
        with pytest.raises(ConfigurationError):
            inv.ReconConfig(**kw)


def test_filter_modes_symbol_bound():
    for N in (15, 63, 255):
        h = 1.0 / (N + 1)
        for delta in (0.05, 0.3, 1.0, 1.9):
            k = inv.filter_modes(h, delta)
            sym = lambda kk: 4 * np.sin(kk * np.pi * h / 2) ** 2 / h**2  # noqa: E731
            assert sym(k) <= (delta / h) ** 2 * (1 + 1e-12)
            if k < N:
                assert sym(k + 1) > (delta / h) ** 2


def test_filtering_check_examples():
    g = Grid1D(63)
    h = g.h
    low = inv.filtering_check(np.sin(np.pi * g.x), h, 0.5)
    assert low.f_ratio == pytest.approx(4 * np.sin(np.pi * h / 2) ** 2 / h**2, rel=1e-10)
    assert low.f_ratio == pytest.approx(np.pi**2, rel=1e-3)
    assert low.f_ok and low.satisfied
    high = inv.filtering_check(np.sin(g.N * np.pi * g.x), h, 1.9)
    assert high.f_ratio == pytest.approx(4 * np.sin(g.N * np.pi * h / 2) ** 2 / h**2, rel=1e-10)
    assert high.f_ratio > 3.9 / h**2
    assert not high.f_ok
    zero = inv.filtering_check(np.zeros(g.N + 2), h, 0.5)
    assert zero.degenerate and zero.satisfied


def test_filtering_data_bound():
    g = Grid1D(31)
    tg = TimeGrid.for_grid(g, 1.0)
    R = np.ones((tg.steps + 1, g.N + 2))
    rep = inv.filtering_check(np.sin(np.pi * g.x), g.h, 0.5, R=R, dt=tg.dt)
    # ‖1‖_{L²_h(0,1)} = sqrt(N h), no time derivatives, initial pair (1, 0)
    assert rep.data_bound == pytest.approx(np.sqrt(g.N * g.h) + 1.0, rel=1e-12)
    assert rep.data_ok
    tight = inv.filtering_check(np.sin(np.pi * g.x), g.h, 0.05, R=R, dt=tg.dt)
    assert not tight.data_ok
