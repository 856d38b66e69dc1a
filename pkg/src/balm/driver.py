"""Outer barrier augmented-Lagrangian loop.

Solves min f(x) s.t. c(x)=0, x in K by driving a sequence of barrier-AL
subproblems with a geometrically decaying barrier weight mu_k (floored at
epsilon/(2*sqrt(theta)+2)), classical multiplier updates projected onto a
safeguard ball, and penalty growth tied to progress on the shifted
constraint residual.  The constraint is shifted by its value at a
near-feasible anchor z_eps, which also serves as a reset start whenever
the incumbent is poorly infeasible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BalmError, OuterBudgetExceeded, SubproblemFailed
from .model import (
    ALParameters,
    Certificate,
    ConicModel,
    al_objective,
    al_value,
    check_fosp,
    check_sosp,
    ctilde,
)
from .newton_cg import NewtonCgConfig, SubproblemObjective, solve_subproblem


@dataclass(frozen=True)
class DriverConfig:
    epsilon: float
    x0: np.ndarray
    z_eps: np.ndarray
    lambda0: np.ndarray | None = None
    safeguard: float = 1e3          # multiplier ball radius
    rho0: float = 1e2
    alpha: float = 0.25             # required feasibility-improvement ratio
    r: float = 1.5                  # penalty/schedule growth factor
    delta: float = 0.05
    theta: float = 0.5
    zeta: float = 0.5
    eta: float = 0.01
    beta: float = 0.9
    oracle_mode: str = "randomized"
    seed: int | None = None
    max_outer: int = 200
    max_inner: int = 10_000
    check_second_order: bool | None = None  # default: deterministic oracle only
    eps2: float | None = None               # default: sqrt(epsilon)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0,1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0,1)")
        if self.r <= 1.0:
            raise ValueError("growth factor r must exceed 1")
        if self.safeguard <= 0.0 or self.rho0 <= 0.0:
            raise ValueError("safeguard and rho0 must be positive")


@dataclass
class ALState:
    k: int
    x: np.ndarray
    lam: np.ndarray
    lam_tilde: np.ndarray
    rho: float
    mu: float
    ctilde_norm_history: list = field(default_factory=list)


@dataclass
class OuterRecord:
    k: int
    mu: float
    rho: float
    c_norm: float
    ctilde_norm: float
    al_value: float
    objective: float
    inner_iterations: int
    inner_matvecs: int
    reset_to_anchor: bool


@dataclass
class SolveReport:
    x: np.ndarray
    lam: np.ndarray                  # raw multiplier at output
    certificate: Certificate
    certificate_sosp: Certificate | None
    epsilon: float
    outer_iterations: int
    inner_iterations: int
    matvecs: int
    factorizations: int
    oracle_calls: int
    wall_time: float
    trace: list = field(default_factory=list)


def find_anchor(model: ConicModel, x0, epsilon: float, mu0: float = 1e-2,
                shrink: float = 0.1, max_sweeps: int = 8,
                oracle_mode: str = "randomized", seed=None) -> np.ndarray:
    """Search an interior anchor with ||c(z)|| <= epsilon/2.

    Minimizes ||c(x)||^2 + mu*B(x) by Newton-CG over a decreasing-mu sweep;
    for problems with analytically feasible points prefer those directly.
    """
    if model.m == 0:
        z = np.asarray(x0, dtype=float)
        model.dom.check_interior(z)
        return z

    def f_value(x):
        cx = model.c(x)
        return float(cx @ cx)

    def f_grad(x):
        return 2.0 * model.jac_t_apply(x, model.c(x))

    def f_hvp(x, v):
        return 2.0 * (model.jac_t_apply(x, model.jac_apply(x, v))
                      + model.constraint_hvp(x, model.c(x), v))

    x = np.asarray(x0, dtype=float)
    mu = mu0
    for _ in range(max_sweeps):
        obj = SubproblemObjective(f_value=f_value, f_grad=f_grad, f_hvp=f_hvp,
                                  dom=model.dom, mu=mu)
        res = solve_subproblem(obj, x, NewtonCgConfig(
            eps_g=min(0.5, mu), eps_H=min(0.5, math.sqrt(mu)),
            oracle_mode=oracle_mode, seed=seed))
        x = res.x
        if float(np.linalg.norm(model.c(x))) <= epsilon / 2.0:
            return x
        mu *= shrink
    raise SubproblemFailed(
        f"no anchor with ||c|| <= {epsilon / 2:g} found in {max_sweeps} sweeps "
        f"(best {np.linalg.norm(model.c(x)):.3e})")


def mu_schedule(epsilon: float, r: float, theta_param: float, k: int) -> float:
    """Barrier weight at outer iteration k: max(eps, omega^k)/(2*sqrt(theta)+2)."""
    omega = r ** (math.log(epsilon) / math.log(2.0))
    return max(epsilon, omega**k) / (2.0 * math.sqrt(theta_param) + 2.0)


def k_epsilon(r: float) -> int:
    """First index at which the schedule reaches its floor (any eps in (0,1))."""
    return math.ceil(math.log(2.0) / math.log(r))


def init_point(state: ALState, model: ConicModel, params: ALParameters,
               anchor_value: float) -> tuple[np.ndarray, bool]:
    """Warm start from the incumbent unless it is poorly infeasible."""
    if al_value(model, params, state.x) > anchor_value:
        return params.z_eps.copy(), True
    return state.x, False


def outer_step(state: ALState, model: ConicModel, cfg: DriverConfig,
               seed=None):
    """One multiplier/penalty update cycle; returns (state', record, result, terminated)."""
    mu_k = state.mu
    params = ALParameters.at_anchor(model, state.lam, state.rho, mu_k, cfg.z_eps)
    anchor_value = float(model.f(params.z_eps)) + mu_k * model.dom.value(params.z_eps)
    x_init, reset = init_point(state, model, params, anchor_value)

    ncg = NewtonCgConfig(
        eps_g=mu_k, eps_H=math.sqrt(mu_k),
        theta=cfg.theta, zeta=cfg.zeta, beta=cfg.beta, eta=cfg.eta,
        delta=cfg.delta, oracle_mode=cfg.oracle_mode, seed=seed,
        max_iters=cfg.max_inner,
    )
    try:
        res = solve_subproblem(al_objective(model, params), x_init, ncg)
    except BalmError as exc:
        raise SubproblemFailed(f"outer iteration {state.k}: {exc}",
                               outer_iteration=state.k, cause=exc) from exc

    x_next = res.x
    val = al_value(model, params, x_next)
    # descent from x_init guarantees the subproblem value cap
    assert val <= anchor_value + 1e-9 * max(1.0, abs(anchor_value)), \
        "AL value at subproblem output exceeds the anchor bound"
    assert res.grad_dual_norm <= mu_k, "subproblem gradient tolerance violated"

    ct = ctilde(model, params, x_next)
    ct_norm = float(np.linalg.norm(ct))
    c_norm = float(np.linalg.norm(model.c(x_next)))
    lam_tilde = state.lam + state.rho * ct

    record = OuterRecord(
        k=state.k, mu=mu_k, rho=state.rho, c_norm=c_norm, ctilde_norm=ct_norm,
        al_value=val, objective=float(model.f(x_next)),
        inner_iterations=res.iterations, inner_matvecs=res.matvecs,
        reset_to_anchor=reset,
    )

    theta_param = max(model.dom.theta, 1.0)
    mu_floor = cfg.epsilon / (2.0 * math.sqrt(theta_param) + 2.0)
    terminated = mu_k <= mu_floor * (1.0 + 1e-12) and c_norm <= cfg.epsilon

    nrm = float(np.linalg.norm(lam_tilde))
    lam_next = lam_tilde * min(1.0, cfg.safeguard / nrm) if nrm > 0 else lam_tilde
    rho_next = state.rho
    if state.k == 0 or (state.ctilde_norm_history
                        and ct_norm > cfg.alpha * state.ctilde_norm_history[-1]):
        rho_next = cfg.r * state.rho

    new_state = ALState(
        k=state.k + 1, x=x_next, lam=lam_next, lam_tilde=lam_tilde,
        rho=rho_next,
        mu=mu_schedule(cfg.epsilon, cfg.r, theta_param, state.k + 1),
        ctilde_norm_history=state.ctilde_norm_history + [ct_norm],
    )
    return new_state, record, res, terminated, lam_tilde


def solve(model: ConicModel, cfg: DriverConfig) -> SolveReport:
    t0 = time.perf_counter()
    theta_param = max(model.dom.theta, 1.0)

    z_eps = np.asarray(cfg.z_eps, dtype=float)
    model.dom.check_interior(z_eps)
    anchor_feas = float(np.linalg.norm(model.c(z_eps)))
    if anchor_feas > cfg.epsilon / 2.0:
        raise ValueError(f"anchor infeasibility {anchor_feas:g} exceeds epsilon/2")

    lam0 = (np.zeros(model.m) if cfg.lambda0 is None
            else np.asarray(cfg.lambda0, dtype=float))
    if np.linalg.norm(lam0) > cfg.safeguard * (1 + 1e-12):
        raise ValueError("initial multiplier lies outside the safeguard ball")
    x0 = np.asarray(cfg.x0, dtype=float)
    model.dom.check_interior(x0)

    mu0 = mu_schedule(cfg.epsilon, cfg.r, theta_param, 0)
    if cfg.beta < math.sqrt(mu0):
        raise ValueError("beta must be at least sqrt(mu_0) for the inner solver")

    seed_seq = np.random.SeedSequence(cfg.seed)
    state = ALState(k=0, x=x0, lam=lam0, lam_tilde=lam0.copy(),
                    rho=cfg.rho0, mu=mu0)
    trace: list[OuterRecord] = []
    inner = matvecs = factorizations = oracle_calls = 0

    while state.k < cfg.max_outer:
        child = seed_seq.spawn(1)[0] if cfg.oracle_mode == "randomized" else None
        mu_k = state.mu
        state, record, res, terminated, lam_tilde = outer_step(state, model, cfg, seed=child)
        trace.append(record)
        inner += res.iterations
        matvecs += res.matvecs
        factorizations += res.factorizations
        oracle_calls += res.oracle_calls

        if terminated:
            x = state.x
            cert = check_fosp(model, x, lam_tilde, cfg.epsilon, mu_scale=mu_k)
            # dual-norm chain: mu_k*(1+sqrt(theta)) collapses to epsilon/2
            assert cert.dual_norm <= mu_k * (1.0 + math.sqrt(theta_param)) + 1e-10, \
                "dual-norm certificate exceeds the guaranteed bound"
            want_sosp = (cfg.check_second_order
                         if cfg.check_second_order is not None
                         else cfg.oracle_mode == "deterministic")
            cert_sosp = None
            if want_sosp:
                eps2 = cfg.eps2 if cfg.eps2 is not None else math.sqrt(cfg.epsilon)
                cert_sosp = check_sosp(model, x, lam_tilde, cfg.epsilon, eps2,
                                       mu_scale=mu_k)
            return SolveReport(
                x=x, lam=lam_tilde, certificate=cert, certificate_sosp=cert_sosp,
                epsilon=cfg.epsilon, outer_iterations=state.k,
                inner_iterations=inner, matvecs=matvecs,
                factorizations=factorizations, oracle_calls=oracle_calls,
                wall_time=time.perf_counter() - t0, trace=trace,
            )

    raise OuterBudgetExceeded(
        f"no termination within {cfg.max_outer} outer iterations "
        f"(last ||c||={trace[-1].c_norm:.3e})" if trace else "no outer progress",
        state=state,
    )
