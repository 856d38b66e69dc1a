"""Preconditioned Newton-CG for barrier subproblems min F(x) + mu*B(x).

Each iteration factors the barrier metric once, works on the
preconditioned Hessian M' Hess(phi) M (whose matvec is one F
Hessian-vector product plus two factor applications), and takes either
a capped-CG solution step or a scaled negative-curvature step, each
followed by a backtracking line search in the preconditioned direction.
Termination requires both a small dual-norm gradient and a curvature
certificate from the minimum-eigenvalue oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barriers import BarrierDomain, InteriorPoint, preconditioner
from .capped_cg import CappedCgConfig, DirectionKind, capped_cg_solve
from .eig_oracle import CERTIFIED, OracleConfig, min_eig_oracle
from .errors import IterationBudgetExceeded, LineSearchStalled, NotInterior


@dataclass
class SubproblemObjective:
    """Smooth part F plus a weighted barrier over its domain."""

    f_value: callable
    f_grad: callable
    f_hvp: callable
    dom: BarrierDomain
    mu: float

    def phi(self, x) -> float:
        return float(self.f_value(x)) + self.mu * self.dom.value(x)

    def phi_grad(self, x) -> np.ndarray:
        return np.asarray(self.f_grad(x), dtype=float) + self.mu * self.dom.gradient(x)

    def phi_hvp(self, x, v) -> np.ndarray:
        return np.asarray(self.f_hvp(x, v), dtype=float) + self.mu * self.dom.hessian_apply(x, v)

    def hvp_operator(self, x):
        """Hessian-vector multiplier bound to one point; avoids per-call checks."""
        bar = self.dom.hessian_operator(x)
        f_hvp, mu = self.f_hvp, self.mu
        return lambda v: np.asarray(f_hvp(x, v), dtype=float) + mu * bar(v)


@dataclass(frozen=True)
class NewtonCgConfig:
    eps_g: float
    eps_H: float
    theta: float = 0.5
    zeta: float = 0.5
    beta: float = 0.9
    eta: float = 0.01
    delta: float = 0.05
    oracle_mode: str = "randomized"
    seed: int | None = None
    max_iters: int = 10_000
    max_backtracks: int = 60
    max_cg_matvecs: int | None = None

    def __post_init__(self):
        if not (0.0 < self.eps_g < 1.0 and 0.0 < self.eps_H < 1.0):
            raise ValueError("tolerances must be in (0,1)")
        for name in ("theta", "zeta", "eta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0,1)")
        if not self.eps_H <= self.beta < 1.0:
            raise ValueError("max step length beta must lie in [eps_H, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0,1)")


@dataclass
class IterationRecord:
    t: int
    phi: float
    step_kind: str  # "SOL" | "NC"
    alpha: float
    grad_dual_norm: float
    cg_iterations: int = 0
    from_oracle: bool = False


@dataclass
class SubproblemResult:
    x: np.ndarray
    phi: float
    grad_dual_norm: float
    second_order_certified: bool
    iterations: int
    matvecs: int
    factorizations: int
    oracle_calls: int
    trace: list = field(default_factory=list)


def _sgn(s: float) -> float:
    # convention: sign of zero is +1
    return 1.0 if s >= 0.0 else -1.0


def scale_sol_direction(d_hat: np.ndarray, beta: float) -> np.ndarray:
    """Clip a solution step to length beta."""
    return min(1.0, beta / float(np.linalg.norm(d_hat))) * d_hat


def scale_nc_direction(d_hat: np.ndarray, curvature: float, slope: float,
                       beta: float) -> np.ndarray:
    """Turn a raw negative-curvature direction into a bounded descent step.

    The result satisfies d'Hd <= -||d||^3 and ||d|| <= beta; slope is the
    preconditioned-gradient inner product fixing the sign.
    """
    dn = float(np.linalg.norm(d_hat))
    if dn == 0.0:
        raise LineSearchStalled("degenerate negative-curvature direction of zero length")
    return -_sgn(slope) * min(abs(curvature) / dn**3, beta / dn) * d_hat


def scale_oracle_direction(v: np.ndarray, curvature: float, slope: float,
                           beta: float) -> np.ndarray:
    """Scale a unit eigenvector estimate by its curvature, capped at beta."""
    return -_sgn(slope) * min(abs(curvature), beta) * v


def _backtrack(obj, x, phi_x, step, decrease, theta, max_backtracks):
    """Smallest j with phi(x + theta^j*step) < phi(x) - decrease*theta^(2j)."""
    for j in range(max_backtracks + 1):
        scale = theta**j
        trial = x + scale * step
        try:
            phi_trial = obj.phi(trial)
        except NotInterior:
            # theory keeps trial points interior; floating point may not
            continue
        if phi_trial < phi_x - decrease * scale * scale:
            return scale, trial, phi_trial
    raise LineSearchStalled(f"no sufficient decrease within {max_backtracks} backtracks")


def line_search_sol(obj, x, factor, d, cfg, phi_x=None):
    """Armijo-type search for a solution step; decrease eta*eps_H*||d||^2."""
    if phi_x is None:
        phi_x = obj.phi(x)
    dn2 = float(d @ d)
    if dn2 == 0.0:
        raise LineSearchStalled("zero-length solution direction")
    return _backtrack(obj, x, phi_x, factor.apply(d), cfg.eta * cfg.eps_H * dn2,
                      cfg.theta, cfg.max_backtracks)


def line_search_nc(obj, x, factor, d, cfg, phi_x=None):
    """Search along a negative-curvature step; decrease eta*||d||^3/2."""
    if phi_x is None:
        phi_x = obj.phi(x)
    dn = float(np.linalg.norm(d))
    if dn == 0.0:
        raise LineSearchStalled("degenerate negative-curvature direction of zero length")
    return _backtrack(obj, x, phi_x, factor.apply(d), cfg.eta * dn**3 / 2.0,
                      cfg.theta, cfg.max_backtracks)


def solve_subproblem(obj: SubproblemObjective, u0, cfg: NewtonCgConfig) -> SubproblemResult:
    x = u0.x.copy() if isinstance(u0, InteriorPoint) else np.array(u0, dtype=float)
    obj.dom.check_interior(x)
    phi_x = obj.phi(x)
    if not np.isfinite(phi_x):
        raise ValueError("objective not finite at the starting point")

    seed_seq = (cfg.seed if isinstance(cfg.seed, np.random.SeedSequence)
                else np.random.SeedSequence(cfg.seed))
    matvecs = 0
    factorizations = 0
    oracle_calls = 0
    trace: list[IterationRecord] = []

    for t in range(cfg.max_iters):
        factor = preconditioner(obj.dom, x)
        factorizations += 1
        g_pre = factor.apply_t(obj.phi_grad(x))
        gnorm = float(np.linalg.norm(g_pre))

        hvp_x = obj.hvp_operator(x)  # bound to the current iterate

        def h_apply(v, _hvp=hvp_x, _f=factor):
            nonlocal matvecs
            matvecs += 1
            return _f.apply_t(_hvp(_f.apply(v)))

        if gnorm > cfg.eps_g:
            cg = capped_cg_solve(
                h_apply, g_pre,
                CappedCgConfig(epsilon=cfg.eps_H, zeta=cfg.zeta,
                               max_matvecs=cfg.max_cg_matvecs),
            )
            d_hat = cg.direction
            if cg.kind is DirectionKind.NC:
                curv = float(d_hat @ h_apply(d_hat))
                d = scale_nc_direction(d_hat, curv, float(d_hat @ g_pre), cfg.beta)
                alpha, x, phi_x = line_search_nc(obj, x, factor, d, cfg, phi_x)
                kind = "NC"
            else:
                d = scale_sol_direction(d_hat, cfg.beta)
                alpha, x, phi_x = line_search_sol(obj, x, factor, d, cfg, phi_x)
                kind = "SOL"
            trace.append(IterationRecord(t, phi_x, kind, alpha, gnorm, cg.iterations))
            continue

        oracle_calls += 1
        child_seed = seed_seq.spawn(1)[0] if cfg.oracle_mode == "randomized" else None
        oracle = min_eig_oracle(
            h_apply, x.size,
            OracleConfig(epsilon=cfg.eps_H, delta=cfg.delta, mode=cfg.oracle_mode,
                         seed=child_seed),
        )
        if oracle.kind == CERTIFIED:
            return SubproblemResult(
                x=x, phi=phi_x, grad_dual_norm=gnorm,
                second_order_certified=True,
                iterations=t, matvecs=matvecs, factorizations=factorizations,
                oracle_calls=oracle_calls, trace=trace,
            )
        v = oracle.direction
        d = scale_oracle_direction(v, oracle.rayleigh, float(v @ g_pre), cfg.beta)
        alpha, x, phi_x = line_search_nc(obj, x, factor, d, cfg, phi_x)
        trace.append(IterationRecord(t, phi_x, "NC", alpha, gnorm, from_oracle=True))

    raise IterationBudgetExceeded(f"no termination within {cfg.max_iters} Newton iterations")
