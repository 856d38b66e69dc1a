"""Capped conjugate gradient for damped, possibly indefinite Newton systems.

Solves (H + 2*eps*I) d = -g for symmetric H, terminating either with an
approximate solution (SOL) whose residual is below an adaptive relative
tolerance, or with a certified negative-curvature direction of H (NC).
The operator-norm bound U, and the derived quantities kappa, zeta_hat,
tau, T, grow adaptively as larger curvature is observed.

Only one apply_H call is made per iteration: the products H*p, H*y, H*r
are carried along by the same recurrences that update p, y, r themselves
(one fresh product per iteration re-anchors the recursion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CurvatureSearchFailed, MatvecBudgetExceeded, ZeroGradient


class DirectionKind(Enum):
    SOL = "SOL"
    NC = "NC"


@dataclass(frozen=True)
class CappedCgConfig:
    epsilon: float
    zeta: float
    u_bound: float = 0.0
    max_matvecs: int | None = None  # None: 40*n + 4000
    debug_certify: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0,1)")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must be in (0,1)")
        if self.u_bound < 0.0:
            raise ValueError("u_bound must be nonnegative")


@dataclass
class KrylovOutcome:
    direction: np.ndarray
    kind: DirectionKind
    matvec_count: int
    iterations: int
    # (U, kappa, zeta_hat, tau, T) at termination
    final_bounds: tuple = field(default=())
    residual_norm: float | None = None
    u_history: list = field(default_factory=list)


def _derived(u: float, eps: float, zeta: float):
    kappa = (u + 2.0 * eps) / eps
    zeta_hat = zeta / (3.0 * kappa)
    # zeta<1 and kappa>=2 give zeta_hat<1/6, which the SOL analysis needs
    assert zeta_hat < 1.0 / 6.0, "relative accuracy out of the admissible range"
    tau = math.sqrt(kappa) / (math.sqrt(kappa) + 1.0)
    big_t = 4.0 * kappa**4 / (1.0 - math.sqrt(tau)) ** 2
    return kappa, zeta_hat, tau, big_t


def capped_cg_solve(apply_h, g, cfg: CappedCgConfig) -> KrylovOutcome:
    """Run capped CG on (H + 2*eps*I) d = -g.

    apply_h must implement a symmetric linear operator (not checked).
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise ZeroGradient("capped CG needs a nonzero right-hand side")

    eps = cfg.epsilon
    budget = cfg.max_matvecs if cfg.max_matvecs is not None else 40 * n + 4000
    u = float(cfg.u_bound)
    kappa, zeta_hat, tau, big_t = _derived(u, eps, cfg.zeta)
    u_history = [u]

    matvecs = 0

    def hv(v):
        nonlocal matvecs
        matvecs += 1
        return np.asarray(apply_h(v), dtype=float)

    y = np.zeros(n)
    r = g.copy()
    p = -g

    hp = hv(p)
    if float(p @ (hp + 2.0 * eps * p)) < eps * float(p @ p):
        return _finish(p, DirectionKind.NC, matvecs, 0, (u, kappa, zeta_hat, tau, big_t),
                       apply_h, g, eps, zeta_hat, cfg.debug_certify, u_history=u_history)
    hp_norm, p_norm = math.sqrt(float(hp @ hp)), math.sqrt(float(p @ p))
    if hp_norm > u * p_norm:
        u = hp_norm / p_norm
        kappa, zeta_hat, tau, big_t = _derived(u, eps, cfg.zeta)
        u_history.append(u)

    hy = np.zeros(n)
    hr = -hp  # r0 = g = -p0
    ys = [y.copy()]
    hys = [hy.copy()]
    j = 0

    while True:
        if matvecs >= budget:
            best = math.sqrt(float(r @ r))
            raise MatvecBudgetExceeded(
                f"capped CG exceeded {budget} matvecs (residual {best:.3e})",
                best_residual=best,
            )
        rr = float(r @ r)
        hbar_p = hp + 2.0 * eps * p
        alpha = rr / float(p @ hbar_p)
        y = y + alpha * p
        hy = hy + alpha * hp
        r_new = r + alpha * hbar_p
        beta = float(r_new @ r_new) / rr
        r = r_new
        hr = hv(r)
        p = -r + beta * p
        hp = -hr + beta * hp
        j += 1
        ys.append(y)
        hys.append(hy)

        for vec, hvec in ((p, hp), (y, hy), (r, hr)):
            vn2 = float(vec @ vec)
            hn2 = float(hvec @ hvec)
            if vn2 > 0.0 and hn2 > u * u * vn2:
                u = math.sqrt(hn2 / vn2)
                kappa, zeta_hat, tau, big_t = _derived(u, eps, cfg.zeta)
                u_history.append(u)

        bounds = (u, kappa, zeta_hat, tau, big_t)
        yy = float(y @ y)
        if float(y @ hy) + 2.0 * eps * yy < eps * yy:
            return _finish(y, DirectionKind.NC, matvecs, j, bounds,
                           apply_h, g, eps, zeta_hat, cfg.debug_certify, u_history=u_history)
        rnorm = math.sqrt(float(r @ r))
        if rnorm <= zeta_hat * gnorm:
            return _finish(y, DirectionKind.SOL, matvecs, j, bounds,
                           apply_h, g, eps, zeta_hat, cfg.debug_certify,
                           residual=rnorm, u_history=u_history)
        pp = float(p @ p)
        if float(p @ hp) + 2.0 * eps * pp < eps * pp:
            return _finish(p, DirectionKind.NC, matvecs, j, bounds,
                           apply_h, g, eps, zeta_hat, cfg.debug_certify, u_history=u_history)
        if rnorm > math.sqrt(big_t) * tau ** (j / 2.0) * gnorm:
            # residual decay too slow for a positive definite damped system:
            # some difference of iterates must expose negative curvature
            alpha = float(r @ r) / float(p @ (hp + 2.0 * eps * p))
            y_ahead = y + alpha * p
            hy_ahead = hy + alpha * hp
            for i in range(j):
                d = y_ahead - ys[i]
                hd = hy_ahead - hys[i]
                dd = float(d @ d)
                if float(d @ hd) + 2.0 * eps * dd < eps * dd:
                    return _finish(d, DirectionKind.NC, matvecs, j, bounds,
                                   apply_h, g, eps, zeta_hat, cfg.debug_certify, u_history=u_history)
            raise CurvatureSearchFailed(
                "slow residual decay but no curvature witness among iterate differences"
            )


def _finish(d, kind, matvecs, iterations, bounds, apply_h, g, eps, zeta_hat, certify,
            residual=None, u_history=None):
    out = KrylovOutcome(
        direction=d,
        kind=kind,
        matvec_count=matvecs,
        iterations=iterations,
        final_bounds=bounds,
        residual_norm=residual,
        u_history=u_history if u_history is not None else [],
    )
    if certify:
        hd = np.asarray(apply_h(d), dtype=float)
        out.matvec_count += 1
        dd = float(d @ d)
        if kind is DirectionKind.NC:
            if not float(d @ hd) < -eps * dd * (1.0 - 1e-9):
                raise AssertionError("NC certificate failed post-hoc verification")
        else:
            res = float(np.linalg.norm(hd + 2.0 * eps * d + g))
            if not res <= zeta_hat * float(np.linalg.norm(g)) * (1.0 + 1e-9) + 1e-300:
                raise AssertionError("SOL residual failed post-hoc verification")
            if not float(d @ hd) >= -eps * dd * (1.0 + 1e-9) - 1e-300:
                raise AssertionError("SOL curvature failed post-hoc verification")
    return out
