import math

import numpy as np
import pytest

from balm.barriers import orthant
from balm.driver import (
    ALState,
    DriverConfig,
    init_point,
    k_epsilon,
    mu_schedule,
    outer_step,
    solve,
)
from balm.errors import OuterBudgetExceeded
from balm.model import ALParameters, ConicModel, al_value


def test_mu_schedule_examples():
    assert mu_schedule(0.37, 2.0, 1.0, 0) == pytest.approx(0.25)
    assert k_epsilon(1.5) == 2
    # eps=1e-4, r=1.5, theta=1: floor from k=2 onward
    assert mu_schedule(1e-4, 1.5, 1.0, 2) == pytest.approx(2.5e-5)
    omega = 1.5 ** (math.log(1e-4) / math.log(2.0))
    assert mu_schedule(1e-4, 1.5, 1.0, 1) == pytest.approx(omega / 4.0)
    assert omega > 1e-4 and omega**2 < 1e-4


def test_mu_schedule_against_direct_evaluation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        eps = float(rng.uniform(1e-6, 0.5))
        r = float(rng.uniform(1.01, 4.0))
        theta = float(rng.integers(1, 500))
        ks = [0, 1, 2, 5, int(rng.integers(0, 40))]
        omega = r ** (math.log(eps) / math.log(2.0))
        for k in ks:
            want = max(eps, omega**k) / (2.0 * math.sqrt(theta) + 2.0)
            assert mu_schedule(eps, r, theta, k) == pytest.approx(want, rel=1e-14)
        assert k_epsilon(r) == math.ceil(math.log(2.0) / math.log(r))
        # floor reached exactly at K_eps and monotone before it
        ke = k_epsilon(r)
        floor = eps / (2.0 * math.sqrt(theta) + 2.0)
        assert mu_schedule(eps, r, theta, ke) == pytest.approx(floor, rel=1e-14)
        mus = [mu_schedule(eps, r, theta, k) for k in range(ke + 3)]
        assert all(b <= a + 1e-18 for a, b in zip(mus, mus[1:]))
        assert mus[-1] == mus[ke]


def _toy_model():
    """min 0.5||x-a||^2 s.t. x1+x2=1 on the positive orthant; optimum (0.5, 0.5)."""
    n = 2
    dom = orthant(n)
    a = np.array([2.0, 2.0])
    return ConicModel(
        n=n, m=1, dom=dom,
        f=lambda x: 0.5 * float((x - a) @ (x - a)),
        grad_f=lambda x: x - a,
        hvp_f=lambda x, v: np.asarray(v, dtype=float),
        c=lambda x: np.array([x[0] + x[1] - 1.0]),
        jac_apply=lambda x, v: np.array([v[0] + v[1]]),
        jac_t_apply=lambda x, w: np.array([w[0], w[0]]),
        constraint_hvp=lambda x, w, v: np.zeros(n),
    )


def test_init_point_warm_reset_and_tie():
    model = _toy_model()
    z = np.array([0.5, 0.5])
    p = ALParameters.at_anchor(model, np.zeros(1), rho=100.0, mu=0.25, z_eps=z)
    anchor_value = model.f(z) + 0.25 * model.dom.value(z)

    near = np.array([0.51, 0.5])  # nearly feasible: AL value below the anchor value
    state = ALState(k=0, x=near, lam=np.zeros(1), lam_tilde=np.zeros(1), rho=100.0, mu=0.25)
    x_init, reset = init_point(state, model, p, anchor_value)
    assert not reset and x_init is near

    far = np.array([5.0, 5.0])  # penalty term dominates: reset to the anchor
    state = ALState(k=0, x=far, lam=np.zeros(1), lam_tilde=np.zeros(1), rho=1e6, mu=0.25)
    assert al_value(model, ALParameters.at_anchor(model, np.zeros(1), 1e6, 0.25, z),
                    far) > anchor_value
    x_init, reset = init_point(
        state, model, ALParameters.at_anchor(model, np.zeros(1), 1e6, 0.25, z), anchor_value)
    assert reset and np.array_equal(x_init, z)

    # exact tie keeps the incumbent (strict inequality in the reset test)
    x_init, reset = init_point(state, model, p, al_value(model, p, far))
    assert not reset


def test_multiplier_projection_and_penalty_growth():
    model = _toy_model()
    cfg = DriverConfig(epsilon=1e-2, x0=np.array([0.4, 0.7]), z_eps=np.array([0.5, 0.5]),
                       safeguard=1e-3, rho0=100.0, oracle_mode="deterministic")
    state = ALState(k=0, x=cfg.x0.copy(), lam=np.zeros(1), lam_tilde=np.zeros(1),
                    rho=cfg.rho0, mu=mu_schedule(1e-2, 1.5, 2.0, 0))
    new_state, record, _, _, lam_tilde = outer_step(state, model, cfg)
    # k=0 grows the penalty unconditionally
    assert new_state.rho == pytest.approx(1.5 * cfg.rho0)
    # a tiny safeguard ball forces a radial projection
    assert np.linalg.norm(new_state.lam) <= 1e-3 * (1 + 1e-12)
    if np.linalg.norm(lam_tilde) > 1e-3:
        assert np.linalg.norm(new_state.lam) == pytest.approx(1e-3)


def test_penalty_predicate_on_history():
    model = _toy_model()
    cfg = DriverConfig(epsilon=1e-2, x0=np.array([0.4, 0.7]), z_eps=np.array([0.5, 0.5]),
                       alpha=0.25, rho0=100.0, oracle_mode="deterministic")
    # k>=1 with strong improvement recorded: penalty must hold
    state = ALState(k=1, x=np.array([0.4, 0.7]), lam=np.zeros(1), lam_tilde=np.zeros(1),
                    rho=150.0, mu=mu_schedule(1e-2, 1.5, 2.0, 1),
                    ctilde_norm_history=[1e9])
    new_state, record, *_ = outer_step(state, model, cfg)
    assert record.ctilde_norm <= 0.25 * 1e9
    assert new_state.rho == pytest.approx(150.0)

    # stale history (no improvement possible over ~0): penalty must grow
    state = ALState(k=1, x=np.array([0.4, 0.7]), lam=np.zeros(1), lam_tilde=np.zeros(1),
                    rho=150.0, mu=mu_schedule(1e-2, 1.5, 2.0, 1),
                    ctilde_norm_history=[0.0])
    new_state, record, *_ = outer_step(state, model, cfg)
    assert new_state.rho == pytest.approx(1.5 * 150.0)


def test_solve_toy_problem_end_to_end():
    model = _toy_model()
    eps = 1e-4
    cfg = DriverConfig(epsilon=eps, x0=np.array([1.0, 1.0]), z_eps=np.array([0.5, 0.5]),
                       oracle_mode="deterministic", seed=0)
    report = solve(model, cfg)
    np.testing.assert_allclose(report.x, [0.5, 0.5], atol=2e-3)
    assert report.outer_iterations >= k_epsilon(cfg.r)
    cert = report.certificate
    assert cert.feasibility <= eps
    assert cert.dual_norm <= eps / 2 + 1e-10
    assert cert.cone_membership
    sosp = report.certificate_sosp
    assert sosp is not None and sosp.passed
    assert sosp.second_order >= -math.sqrt(eps)
    # multiplier approaches the analytic value 1.5 as feasibility tightens
    assert report.lam[0] == pytest.approx(1.5, abs=0.05)
    # rho trajectory: every value is rho0 * r^j and nondecreasing
    rhos = [r.rho for r in report.trace]
    for val in rhos:
        j = math.log(val / cfg.rho0) / math.log(cfg.r)
        assert abs(j - round(j)) < 1e-9
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))
    # mu floor honored
    mus = [r.mu for r in report.trace]
    floor = eps / (2.0 * math.sqrt(2.0) + 2.0)
    assert all(m >= floor - 1e-18 for m in mus) and mus[-1] == pytest.approx(floor)


def test_solve_unconstrained_reduction():
    # c == 0 (m=0): terminates right when mu reaches its floor
    n = 2
    dom = orthant(n)
    model = ConicModel(
        n=n, m=0, dom=dom,
        f=lambda x: 0.5 * float(x @ x),
        grad_f=lambda x: x.copy(),
        hvp_f=lambda x, v: np.asarray(v, dtype=float),
    )
    eps = 1e-3
    cfg = DriverConfig(epsilon=eps, x0=np.ones(n), z_eps=np.ones(n),
                       oracle_mode="deterministic", seed=1)
    report = solve(model, cfg)
    assert report.outer_iterations == k_epsilon(cfg.r) + 1
    assert report.lam.size == 0
    # gradient tolerance mu in the dual norm pins x^2 within mu/sqrt(2) of mu
    mu_floor = eps / (2.0 * math.sqrt(2.0) + 2.0)
    for xi in report.x:
        assert abs(xi**2 - mu_floor) <= mu_floor / math.sqrt(2.0) + 1e-12


def test_solve_rejects_bad_anchor():
    model = _toy_model()
    with pytest.raises(ValueError, match="anchor"):
        solve(model, DriverConfig(epsilon=1e-4, x0=np.ones(2), z_eps=np.array([2.0, 2.0])))


def test_solve_rejects_oversized_multiplier():
    model = _toy_model()
    with pytest.raises(ValueError, match="multiplier"):
        solve(model, DriverConfig(epsilon=1e-4, x0=np.ones(2), z_eps=np.array([0.5, 0.5]),
                                  lambda0=np.array([2e3])))


def test_solve_with_randomized_oracle_is_seed_reproducible():
    model = _toy_model()
    cfg = DriverConfig(epsilon=1e-3, x0=np.ones(2), z_eps=np.array([0.5, 0.5]),
                       oracle_mode="randomized", seed=5)
    a = solve(model, cfg)
    b = solve(model, cfg)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.certificate.first_order_ok
    assert a.certificate_sosp is None  # randomized mode skips the dense audit


def test_find_anchor_reaches_near_feasibility():
    from balm.driver import find_anchor

    model = _toy_model()
    z = find_anchor(model, np.array([2.0, 2.0]), epsilon=1e-3,
                    oracle_mode="deterministic")
    assert model.dom.is_interior(z)
    assert np.linalg.norm(model.c(z)) <= 5e-4
    # the found anchor works as a driver input
    cfg = DriverConfig(epsilon=1e-3, x0=np.ones(2), z_eps=z,
                       oracle_mode="deterministic", seed=0)
    report = solve(model, cfg)
    assert report.certificate.first_order_ok


def test_find_anchor_unconstrained_passthrough():
    from balm.driver import find_anchor

    dom = orthant(2)
    model = ConicModel(n=2, m=0, dom=dom, f=lambda x: 0.0,
                       grad_f=lambda x: np.zeros(2), hvp_f=lambda x, v: np.zeros(2))
    z = find_anchor(model, np.array([1.0, 2.0]), epsilon=1e-3)
    np.testing.assert_allclose(z, [1.0, 2.0])


def test_outer_budget_exceeded_carries_state():
    model = _toy_model()
    cfg = DriverConfig(epsilon=1e-4, x0=np.ones(2), z_eps=np.array([0.5, 0.5]),
                       oracle_mode="deterministic", max_outer=1)
    with pytest.raises(OuterBudgetExceeded) as exc:
        solve(model, cfg)
    assert exc.value.state is not None
    assert exc.value.state.k == 1
