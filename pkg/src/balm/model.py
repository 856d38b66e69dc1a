"""Model contract for min f(x) s.t. c(x)=0, x in K, plus certificates.

A ConicModel supplies first- and second-order callables for f and c
(second-order constraint information only as a weighted Hessian-vector
product, which is all the augmented-Lagrangian formulas consume) and the
barrier domain for K.  This module assembles shifted augmented
Lagrangians and verifies approximate first/second-order stationarity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .barriers import (
    BarrierDomain,
    dual_cone_certificate,
    dual_local_norm,
    preconditioner,
)
from .errors import RankDeficiencyWarning
from .newton_cg import SubproblemObjective


@dataclass
class ConicModel:
    n: int
    m: int
    dom: BarrierDomain
    f: callable
    grad_f: callable
    hvp_f: callable
    c: callable = None
    jac_apply: callable = None        # v -> J(x) v, length m
    jac_t_apply: callable = None      # w -> J(x)' w, length n
    constraint_hvp: callable = None   # (x, w, v) -> (sum_i w_i Hess c_i(x)) v
    name: str = ""

    def __post_init__(self):
        if self.dom.n != self.n:
            raise ValueError("domain layout disagrees with model dimension")
        if self.m == 0:
            zero_m = lambda x: np.zeros(0)
            self.c = self.c or zero_m
            self.jac_apply = self.jac_apply or (lambda x, v: np.zeros(0))
            self.jac_t_apply = self.jac_t_apply or (lambda x, w: np.zeros(self.n))
            self.constraint_hvp = self.constraint_hvp or (lambda x, w, v: np.zeros(self.n))
        elif None in (self.c, self.jac_apply, self.jac_t_apply, self.constraint_hvp):
            raise ValueError("constrained model is missing constraint callables")

    def jacobian_dense(self, x) -> np.ndarray:
        """m x n Jacobian of c, assembled one row per transpose-apply."""
        eye = np.eye(self.m)
        return np.vstack([self.jac_t_apply(x, eye[k]) for k in range(self.m)]) if self.m else np.zeros((0, self.n))

    def lagrangian_hessian_dense(self, x, lam) -> np.ndarray:
        """Hess f + sum_i lam_i Hess c_i, densified column by column."""
        eye = np.eye(self.n)
        cols = [self.hvp_f(x, eye[:, i]) + self.constraint_hvp(x, lam, eye[:, i])
                for i in range(self.n)]
        h = np.column_stack(cols)
        return 0.5 * (h + h.T)

    def validate(self, x0, seed=0, tol=1e-4, probes=5, step=1e-6):
        """Finite-difference consistency probe for all derivative callables."""
        x0 = np.asarray(x0, dtype=float)
        rng = np.random.default_rng(seed)
        scale = max(1.0, float(np.linalg.norm(x0)))
        for _ in range(probes):
            v = rng.standard_normal(self.n)
            v /= np.linalg.norm(v)
            h = step * scale
            fd_grad = (self.f(x0 + h * v) - self.f(x0 - h * v)) / (2 * h)
            an_grad = float(np.asarray(self.grad_f(x0)) @ v)
            _check_close(fd_grad, an_grad, tol, "grad_f")

            fd_hvp = (np.asarray(self.grad_f(x0 + h * v)) - np.asarray(self.grad_f(x0 - h * v))) / (2 * h)
            an_hvp = np.asarray(self.hvp_f(x0, v))
            _check_close_vec(fd_hvp, an_hvp, tol, "hvp_f")

            if self.m:
                fd_jac = (np.asarray(self.c(x0 + h * v)) - np.asarray(self.c(x0 - h * v))) / (2 * h)
                an_jac = np.asarray(self.jac_apply(x0, v))
                _check_close_vec(fd_jac, an_jac, tol, "jac_apply")

                w = rng.standard_normal(self.m)
                # adjoint identity <Jv, w> = <v, J'w> must hold to roundoff
                lhs = float(an_jac @ w)
                rhs = float(v @ np.asarray(self.jac_t_apply(x0, w)))
                _check_close(lhs, rhs, 1e-10, "jac_t_apply adjoint")

                fd_chvp = (np.asarray(self.jac_t_apply(x0 + h * v, w))
                           - np.asarray(self.jac_t_apply(x0 - h * v, w))) / (2 * h)
                an_chvp = np.asarray(self.constraint_hvp(x0, w, v))
                _check_close_vec(fd_chvp, an_chvp, tol, "constraint_hvp")
        return True


def _check_close(a, b, tol, label):
    denom = max(abs(a), abs(b), 1.0)
    if abs(a - b) > tol * denom:
        raise ValueError(f"{label} disagrees with finite differences: {a} vs {b}")


def _check_close_vec(a, b, tol, label):
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1.0)
    if float(np.linalg.norm(a - b)) > tol * denom:
        raise ValueError(f"{label} disagrees with finite differences "
                         f"(rel err {np.linalg.norm(a - b) / denom:.2e})")


@dataclass
class ALParameters:
    """Multiplier, penalty, barrier weight, and the shift anchor."""

    lam: np.ndarray
    rho: float
    mu: float
    z_eps: np.ndarray
    c_anchor: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rho <= 0.0 or self.mu <= 0.0:
            raise ValueError("rho and mu must be positive")
        self.lam = np.asarray(self.lam, dtype=float)

    @classmethod
    def at_anchor(cls, model: ConicModel, lam, rho, mu, z_eps):
        z_eps = np.asarray(z_eps, dtype=float)
        return cls(lam=lam, rho=rho, mu=mu, z_eps=z_eps,
                   c_anchor=np.asarray(model.c(z_eps), dtype=float))


def ctilde(model: ConicModel, p: ALParameters, x) -> np.ndarray:
    return np.asarray(model.c(x), dtype=float) - p.c_anchor


def al_value(model: ConicModel, p: ALParameters, x) -> float:
    ct = ctilde(model, p, x)
    return (float(model.f(x)) + p.mu * model.dom.value(x)
            + float(p.lam @ ct) + 0.5 * p.rho * float(ct @ ct))


def al_gradient(model: ConicModel, p: ALParameters, x) -> np.ndarray:
    ct = ctilde(model, p, x)
    g = np.asarray(model.grad_f(x), dtype=float)
    if model.m:
        g = g + model.jac_t_apply(x, p.lam + p.rho * ct)
    return g + p.mu * model.dom.gradient(x)


def al_hvp(model: ConicModel, p: ALParameters, x, v) -> np.ndarray:
    out = np.asarray(model.hvp_f(x, v), dtype=float)
    if model.m:
        ct = ctilde(model, p, x)
        out = out + model.constraint_hvp(x, p.lam + p.rho * ct, v)
        out = out + p.rho * model.jac_t_apply(x, model.jac_apply(x, v))
    return out + p.mu * model.dom.hessian_apply(x, v)


def al_objective(model: ConicModel, p: ALParameters) -> SubproblemObjective:
    """Package the smooth AL part as a barrier-subproblem objective.

    The shifted residual and its penalty-weighted multiplier are cached per
    point: Krylov loops take many Hessian-vector products at a fixed x.
    """
    memo = {"x": None, "ct": None, "w": None}

    def _shift(x):
        if memo["x"] is None or not np.array_equal(memo["x"], x):
            ct = ctilde(model, p, x)
            memo["x"] = np.array(x, copy=True)
            memo["ct"] = ct
            memo["w"] = p.lam + p.rho * ct
        return memo["ct"], memo["w"]

    def f_value(x):
        ct, _ = _shift(np.asarray(x, dtype=float))
        return float(model.f(x)) + float(p.lam @ ct) + 0.5 * p.rho * float(ct @ ct)

    def f_grad(x):
        g = np.asarray(model.grad_f(x), dtype=float)
        if model.m:
            _, w = _shift(np.asarray(x, dtype=float))
            g = g + model.jac_t_apply(x, w)
        return g

    def f_hvp(x, v):
        out = np.asarray(model.hvp_f(x, v), dtype=float)
        if model.m:
            _, w = _shift(np.asarray(x, dtype=float))
            out = out + model.constraint_hvp(x, w, v)
            out = out + p.rho * model.jac_t_apply(x, model.jac_apply(x, v))
        return out

    return SubproblemObjective(f_value=f_value, f_grad=f_grad, f_hvp=f_hvp,
                               dom=model.dom, mu=p.mu)


@dataclass
class Certificate:
    feasibility: float
    dual_norm: float
    cone_membership: bool
    worst_cone_violation: float
    eps1: float
    cone_tol: float
    eps2: float | None = None
    second_order: float | None = None
    jacobian_rank: int | None = None

    @property
    def first_order_ok(self) -> bool:
        return (self.feasibility <= self.eps1
                and self.dual_norm <= self.eps1
                and self.cone_membership)

    @property
    def second_order_ok(self) -> bool:
        if self.second_order is None or self.eps2 is None:
            return True
        return self.second_order >= -self.eps2

    @property
    def passed(self) -> bool:
        return self.first_order_ok and self.second_order_ok


def check_fosp(model: ConicModel, x, lam, eps1: float,
               cone_tol: float = 1e-8, mu_scale: float | None = None) -> Certificate:
    """Residuals of approximate first-order stationarity at (x, lam)."""
    x = np.asarray(x, dtype=float)
    model.dom.check_interior(x)
    lam = np.asarray(lam, dtype=float)
    s = np.asarray(model.grad_f(x), dtype=float)
    if model.m:
        s = s + model.jac_t_apply(x, lam)
    factor = preconditioner(model.dom, x)
    cone = dual_cone_certificate(model.dom, x, s, cone_tol, mu=mu_scale)
    return Certificate(
        feasibility=float(np.linalg.norm(model.c(x))),
        dual_norm=dual_local_norm(model.dom, x, s, factor=factor),
        cone_membership=cone.member,
        worst_cone_violation=cone.worst_violation,
        eps1=eps1,
        cone_tol=cone_tol,
    )


def check_sosp(model: ConicModel, x, lam, eps1: float, eps2: float,
               cone_tol: float = 1e-8, rank_tol: float = 1e-10,
               mu_scale: float | None = None) -> Certificate:
    """First-order residuals plus the smallest projected-Hessian eigenvalue.

    Densifies the preconditioned Lagrangian Hessian and projects onto the
    null space of the preconditioned Jacobian; verification tool only.
    """
    x = np.asarray(x, dtype=float)
    cert = check_fosp(model, x, lam, eps1, cone_tol=cone_tol, mu_scale=mu_scale)
    m_bar = model.dom.metric_inv_sqrt_dense(x)
    w = m_bar.T @ model.lagrangian_hessian_dense(x, np.asarray(lam, dtype=float)) @ m_bar
    w = 0.5 * (w + w.T)
    rank = 0
    if model.m:
        a = model.jacobian_dense(x) @ m_bar
        _, svals, vt = np.linalg.svd(a, full_matrices=True)
        cutoff = rank_tol * (svals[0] if svals.size else 0.0)
        rank = int(np.sum(svals > cutoff))
        if rank < min(model.m, model.n):
            warnings.warn("constraint Jacobian numerically rank-deficient",
                          RankDeficiencyWarning)
        z = vt[rank:].T
    else:
        z = np.eye(model.n)
    if z.shape[1] == 0:
        second = np.inf  # constraints pin every direction; condition vacuous
    else:
        second = float(np.linalg.eigvalsh(z.T @ w @ z)[0])
    cert.eps2 = eps2
    cert.second_order = second
    cert.jacobian_rank = rank
    return cert
