"""Nonmonotone proximal-gradient baseline (SpaRSA) and exact projections.

The iterate map is x_t = P(x_{t-1} - grad f(x_{t-1}) / alpha), with the
spectral coefficient alpha initialized by a Barzilai-Borwein ratio and
grown by a fixed factor until f(x_t) sits below the running window
maximum minus a quadratic decrease term.  The stopping test certifies an
approximate first-order point of the projected problem.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import AllNegativeInput, StepOutOfRange


@dataclass(frozen=True)
class SparsaConfig:
    sigma: float = 0.01
    window: int = 5
    alpha_min: float = 1e-30
    alpha_max: float = 1e30
    eta: float = 2.0
    tol: float = 1e-4
    max_iters: int = 200_000


@dataclass
class SparsaResult:
    x: np.ndarray
    iterations: int
    converged: bool
    final_test: float
    objective: float
    trace: list = field(default_factory=list)  # (t, f, feasibility)


def sparsa_solve(f_value, f_gradient, project, x0, cfg: SparsaConfig,
                 feasibility=None) -> SparsaResult:
    x = np.array(x0, dtype=float)
    g = np.asarray(f_gradient(x), dtype=float)
    f_x = float(f_value(x))
    history = deque([f_x], maxlen=cfg.window + 1)
    trace = [(0, f_x, feasibility(x) if feasibility else 0.0)]
    alpha = 1.0  # spectral coefficient is undefined before the first step
    crit = np.inf

    for t in range(1, cfg.max_iters + 1):
        window_max = max(history)
        while True:
            accepted = False
            try:
                x_new = project(x - g / alpha)
                f_new = float(f_value(x_new))
                accepted = (f_new <= window_max
                            - 0.5 * cfg.sigma * alpha * float(np.sum((x_new - x) ** 2)))
            except AllNegativeInput:
                pass  # projection undefined for a wildly long trial step; shrink it
            if accepted:
                break
            alpha *= cfg.eta
            if alpha > cfg.alpha_max:
                raise StepOutOfRange(f"step coefficient grew past {cfg.alpha_max:g}")

        g_new = np.asarray(f_gradient(x_new), dtype=float)
        crit = float(np.linalg.norm(alpha * (x_new - x) + g - g_new))
        trace.append((t, f_new, feasibility(x_new) if feasibility else 0.0))

        s = x_new - x
        dg = g_new - g
        x, g, f_x = x_new, g_new, f_new
        history.append(f_x)
        if crit <= cfg.tol:
            return SparsaResult(x=x, iterations=t, converged=True,
                                final_test=crit, objective=f_x, trace=trace)

        sts = float(s @ s)
        alpha = float(np.clip(float(s @ dg) / sts, cfg.alpha_min, cfg.alpha_max)) if sts > 0 else 1.0

    return SparsaResult(x=x, iterations=cfg.max_iters, converged=False,
                        final_test=crit, objective=f_x, trace=trace)


def project_column_simplex(v: np.ndarray) -> np.ndarray:
    """Columnwise Euclidean projection onto the unit simplex (sort + threshold)."""
    v = np.asarray(v, dtype=float)
    l = v.shape[0]
    srt = np.sort(v, axis=0)[::-1]
    csum = np.cumsum(srt, axis=0) - 1.0
    idx = np.arange(1, l + 1).reshape(-1, 1)
    cond = srt - csum / idx > 0.0
    rho = l - 1 - np.argmax(cond[::-1], axis=0)  # largest index satisfying cond
    tau = csum[rho, np.arange(v.shape[1])] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def project_sphere_nonneg(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the nonnegative part of the Frobenius sphere."""
    clipped = np.maximum(np.asarray(v, dtype=float), 0.0)
    peak = float(clipped.max()) if clipped.size else 0.0
    if peak == 0.0:
        raise AllNegativeInput("no positive part to scale onto the sphere")
    # normalize by the peak first so squaring cannot under- or overflow
    scaled = clipped / peak
    return radius * scaled / float(np.linalg.norm(scaled))


def project_fro_ball(u: np.ndarray, b: float) -> np.ndarray:
    """Radial projection onto the Frobenius ball ||U||_F^2 <= b."""
    u = np.asarray(u, dtype=float)
    peak = float(np.max(np.abs(u))) if u.size else 0.0
    if peak == 0.0:
        return u.copy()
    scaled_norm = float(np.linalg.norm(u / peak))
    if peak * scaled_norm <= np.sqrt(b):
        return u.copy()
    return (u / peak) * (np.sqrt(b) / scaled_norm)
