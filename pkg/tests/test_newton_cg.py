import math

import numpy as np
import pytest

from balm.barriers import orthant, preconditioner
from balm.capped_cg import CappedCgConfig, DirectionKind, capped_cg_solve
from balm.errors import IterationBudgetExceeded, LineSearchStalled
from balm.newton_cg import (
    NewtonCgConfig,
    SubproblemObjective,
    line_search_nc,
    line_search_sol,
    scale_nc_direction,
    scale_oracle_direction,
    scale_sol_direction,
    solve_subproblem,
)


def quadratic_objective(dom, mu, q=None, lin=None, quartic=0.0):
    """F(x) = 0.5 x'Qx + lin'x + quartic*sum(x^4), with analytic derivatives."""
    n = dom.n
    q = np.zeros((n, n)) if q is None else np.asarray(q, dtype=float)
    lin = np.zeros(n) if lin is None else np.asarray(lin, dtype=float)

    def f(x):
        return 0.5 * float(x @ q @ x) + float(lin @ x) + quartic * float(np.sum(x**4))

    def grad(x):
        return q @ x + lin + 4.0 * quartic * x**3

    def hvp(x, v):
        return q @ v + 12.0 * quartic * x**2 * v

    return SubproblemObjective(f_value=f, f_grad=grad, f_hvp=hvp, dom=dom, mu=mu)


def test_quadratic_barrier_stationary_point():
    # stationarity of x - mu/x at sqrt(mu), both coordinates
    mu = 1e-3
    dom = orthant(2)
    obj = quadratic_objective(dom, mu, q=np.eye(2))
    cfg = NewtonCgConfig(eps_g=1e-8, eps_H=1e-2, oracle_mode="deterministic")
    res = solve_subproblem(obj, np.array([1.0, 1.0]), cfg)
    np.testing.assert_allclose(res.x, [math.sqrt(mu)] * 2, rtol=1e-4)
    assert res.grad_dual_norm <= 1e-8
    assert res.second_order_certified


def test_immediate_certification():
    # convex objective, stationary start: one oracle call, no steps
    mu = 0.5
    dom = orthant(1)
    obj = quadratic_objective(dom, mu, q=np.eye(1))
    x0 = np.array([math.sqrt(mu)])
    cfg = NewtonCgConfig(eps_g=0.5, eps_H=0.5, oracle_mode="deterministic")
    res = solve_subproblem(obj, x0, cfg)
    np.testing.assert_allclose(res.x, x0)
    assert res.iterations == 0
    assert res.second_order_certified
    assert res.oracle_calls == 1


def test_oracle_nc_scaling_sign_of_zero_is_plus():
    # free domain, gradient orthogonal to the curvature eigenvector:
    # step is -1 * min(|curv|, beta) * v with |curv|=2, beta=0.9
    dom = orthant(n_conic=0, n_free=2)
    eps_g = 1e-3
    obj = quadratic_objective(dom, mu=1e-8, q=np.diag([-2.0, 1.0]),
                              lin=np.array([0.0, eps_g / 2]), quartic=0.05)
    cfg = NewtonCgConfig(eps_g=eps_g, eps_H=0.5, beta=0.9, oracle_mode="deterministic",
                         max_iters=1)
    with pytest.raises(IterationBudgetExceeded):
        # budget of one iteration: take exactly the first NC step, then stop
        solve_subproblem(obj, np.zeros(2), cfg)
    # rerun with room and inspect the recorded first step instead
    cfg = NewtonCgConfig(eps_g=eps_g, eps_H=0.5, beta=0.9, oracle_mode="deterministic",
                         max_iters=200)
    res = solve_subproblem(obj, np.zeros(2), cfg)
    first = res.trace[0]
    assert first.step_kind == "NC" and first.from_oracle
    assert first.alpha == 1.0  # full step already gives the cubic decrease


def test_direction_scaling_formulas():
    v = np.array([1.0, 0.0])
    # zero slope takes the positive sign; curvature 2 capped at beta 0.9
    np.testing.assert_allclose(scale_oracle_direction(v, -2.0, 0.0, 0.9), -0.9 * v)
    np.testing.assert_allclose(scale_oracle_direction(v, -0.3, -1.0, 0.9), 0.3 * v)
    d_hat = np.array([2.0, 0.0])
    np.testing.assert_allclose(scale_sol_direction(d_hat, 0.9), [0.9, 0.0])
    np.testing.assert_allclose(scale_sol_direction(0.1 * d_hat, 0.9), [0.2, 0.0])
    with pytest.raises(LineSearchStalled):
        scale_nc_direction(np.zeros(2), -1.0, 0.0, 0.9)


def test_scaled_nc_direction_has_cubic_curvature_bound():
    # raw NC outputs of capped CG, scaled, satisfy d'Hd <= -||d||^3 and ||d|| <= beta
    rng = np.random.default_rng(99)
    beta = 0.9
    checked = 0
    while checked < 40:
        n = int(rng.integers(2, 20))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h = q @ np.diag(rng.uniform(-3.0, 2.0, n)) @ q.T
        g = rng.standard_normal(n)
        out = capped_cg_solve(lambda v: h @ v, g, CappedCgConfig(epsilon=0.2, zeta=0.5))
        if out.kind is not DirectionKind.NC:
            continue
        d_hat = out.direction
        curv = float(d_hat @ h @ d_hat)
        d = scale_nc_direction(d_hat, curv, float(d_hat @ g), beta)
        dn = np.linalg.norm(d)
        assert dn <= beta + 1e-12
        assert float(d @ h @ d) <= -dn**3 * (1 - 1e-9)
        checked += 1


def test_line_search_sol_full_step_on_quadratic():
    dom = orthant(n_conic=0, n_free=2)
    obj = quadratic_objective(dom, mu=1e-8, q=np.eye(2))
    x = np.array([1.0, 1.0])
    fac = preconditioner(dom, x)
    d = -0.5 * x  # Newton-like descent direction, passes at j=0
    cfg = NewtonCgConfig(eps_g=0.1, eps_H=0.1)
    alpha, x_next, _ = line_search_sol(obj, x, fac, d, cfg)
    assert alpha == 1.0
    np.testing.assert_allclose(x_next, [0.5, 0.5])


def test_line_search_nc_backtracks_once_on_quartic():
    dom = orthant(n_conic=0, n_free=1)
    obj = quadratic_objective(dom, mu=1e-8, quartic=1.0)  # phi ~ x^4
    x = np.array([1.0])
    fac = preconditioner(dom, x)
    d = np.array([-2.0])
    cfg = NewtonCgConfig(eps_g=0.1, eps_H=0.1, theta=0.5, eta=0.01)
    alpha, x_next, _ = line_search_nc(obj, x, fac, d, cfg)
    assert alpha == 0.5
    np.testing.assert_allclose(x_next, [0.0], atol=1e-14)


def test_line_search_keeps_interior_via_dikin():
    # ||d|| <= beta < 1 makes every trial point interior
    rng = np.random.default_rng(0)
    dom = orthant(4)
    obj = quadratic_objective(dom, mu=0.1, q=-np.eye(4))  # concave pull to boundary
    for _ in range(50):
        x = rng.uniform(0.05, 3.0, 4)
        fac = preconditioner(dom, x)
        d = rng.standard_normal(4)
        d *= 0.9 / np.linalg.norm(d)
        trial = x + fac.apply(d)
        assert dom.is_interior(trial)


def test_line_search_stalls_on_ascent():
    dom = orthant(n_conic=0, n_free=1)
    obj = quadratic_objective(dom, mu=1e-8, q=np.eye(1))
    x = np.array([1.0])
    fac = preconditioner(dom, x)
    cfg = NewtonCgConfig(eps_g=0.1, eps_H=0.1, max_backtracks=5)
    with pytest.raises(LineSearchStalled):
        line_search_sol(obj, x, fac, np.array([2.0]), cfg)  # uphill direction


def test_beta_range_enforced():
    with pytest.raises(ValueError):
        NewtonCgConfig(eps_g=0.1, eps_H=0.5, beta=0.4)


def _random_subproblem(rng, n):
    dom = orthant(n)
    q = rng.standard_normal((n, n))
    q = 0.5 * (q + q.T)
    lin = rng.standard_normal(n)
    mu = float(rng.uniform(1e-3, 0.2))
    return quadratic_objective(dom, mu, q=q, lin=lin, quartic=0.25), dom, mu


class TestRandomSubproblemSuite:
    CASES = 25  # acceptance runs the full 50

    def test_termination_descent_interior_and_eigen_bound(self):
        rng = np.random.default_rng(42)
        for case in range(self.CASES):
            n = int(rng.integers(2, 40))
            obj, dom, _ = _random_subproblem(rng, n)
            u0 = rng.uniform(0.2, 2.0, n)
            eps_g, eps_H = 1e-4, 1e-2
            cfg = NewtonCgConfig(eps_g=eps_g, eps_H=eps_H, oracle_mode="deterministic")
            res = solve_subproblem(obj, u0, cfg)
            assert res.grad_dual_norm <= eps_g
            assert res.second_order_certified
            phis = [r.phi for r in res.trace]
            assert all(b < a for a, b in zip(phis, phis[1:]))
            if phis:
                assert phis[0] < obj.phi(u0)
            # deterministic oracle: dense check of the preconditioned Hessian
            fac = preconditioner(dom, res.x)
            eye = np.eye(n)
            h = np.column_stack([
                fac.apply_t(obj.phi_hvp(res.x, fac.apply(eye[:, i]))) for i in range(n)
            ])
            lam = float(np.linalg.eigvalsh(0.5 * (h + h.T))[0])
            assert lam >= -eps_H - 1e-10

    def test_finite_difference_consistency(self):
        rng = np.random.default_rng(43)
        for _ in range(30):
            n = int(rng.integers(2, 12))
            obj, dom, _ = _random_subproblem(rng, n)
            x = rng.uniform(0.3, 2.0, n)
            h = 1e-6
            g = obj.phi_grad(x)
            for _ in range(3):
                v = rng.standard_normal(n)
                v /= np.linalg.norm(v)
                fd = (obj.phi(x + h * v) - obj.phi(x - h * v)) / (2 * h)
                assert fd == pytest.approx(float(g @ v), rel=1e-5, abs=1e-7)
                fd_h = (obj.phi_grad(x + h * v) - obj.phi_grad(x - h * v)) / (2 * h)
                hv = obj.phi_hvp(x, v)
                assert np.linalg.norm(fd_h - hv) <= 1e-4 * max(1.0, np.linalg.norm(hv))
