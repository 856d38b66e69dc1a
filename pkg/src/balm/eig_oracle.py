"""Minimum-eigenvalue oracle.

Randomized mode runs Lanczos (full reorthogonalization) from a uniform
random unit start for a capped number of iterations and either returns a
unit direction v with v'Hv <= -eps/2 or certifies lambda_min(H) >= -eps
with probability at least 1-delta.  Deterministic mode densifies the
operator and takes the exact smallest eigenpair, applying the same
-eps/2 return threshold; the benchmark harness uses it so that reported
stationary points are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch

RANDOMIZED = "randomized"
DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class OracleConfig:
    epsilon: float
    delta: float = 0.05
    mode: str = RANDOMIZED
    seed: int | None = None
    h_norm_estimate: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0,1)")
        if self.mode not in (RANDOMIZED, DETERMINISTIC):
            raise ValueError(f"unknown oracle mode {self.mode!r}")


@dataclass
class OracleOutcome:
    kind: str  # "NEGATIVE_CURVATURE" | "CERTIFIED"
    direction: np.ndarray | None
    rayleigh: float | None
    iterations: int
    matvec_count: int
    restarts: int = 0
    cap: int = 0


NEGATIVE_CURVATURE = "NEGATIVE_CURVATURE"
CERTIFIED = "CERTIFIED"


def iteration_cap(n: int, h_norm: float, epsilon: float, delta: float) -> int:
    """Lanczos iteration budget sufficient for the 1-delta guarantee."""
    if h_norm <= 0.0:
        return 1
    inner = math.log(2.75 * n / delta**2) / 2.0 * math.sqrt(h_norm / epsilon)
    return min(n, 1 + math.ceil(inner))


def estimate_operator_norm(apply_h, n: int, rng: np.random.Generator, iters: int = 20,
                           inflation: float = 1.1) -> float:
    """Power-method upper estimate of ||H||, inflated for safety."""
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = np.asarray(apply_h(v), dtype=float)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return inflation * est


def min_eig_oracle(apply_h, n: int, cfg: OracleConfig) -> OracleOutcome:
    if n < 1:
        raise DimensionMismatch("operator dimension must be >= 1")

    if cfg.mode == DETERMINISTIC:
        return _dense_oracle(apply_h, n, cfg)
    return _lanczos_oracle(apply_h, n, cfg)


def _dense_oracle(apply_h, n, cfg):
    eye = np.eye(n)
    cols = [np.asarray(apply_h(eye[:, i]), dtype=float) for i in range(n)]
    h = np.column_stack(cols)
    if h.shape != (n, n):
        raise DimensionMismatch(f"operator returned shape {h.shape}")
    w, q = np.linalg.eigh(0.5 * (h + h.T))
    lam, v = float(w[0]), q[:, 0]
    if lam <= -cfg.epsilon / 2.0:
        return OracleOutcome(NEGATIVE_CURVATURE, v / np.linalg.norm(v), lam,
                             iterations=n, matvec_count=n, cap=n)
    return OracleOutcome(CERTIFIED, None, lam, iterations=n, matvec_count=n, cap=n)


def _lanczos_oracle(apply_h, n, cfg):
    rng = np.random.default_rng(cfg.seed)
    matvecs = 0

    def hv(v):
        nonlocal matvecs
        matvecs += 1
        out = np.asarray(apply_h(v), dtype=float)
        if out.shape != (n,):
            raise DimensionMismatch(f"operator returned shape {out.shape}")
        return out

    if cfg.h_norm_estimate is not None:
        h_norm = float(cfg.h_norm_estimate)
    else:
        h_norm = estimate_operator_norm(hv, n, rng)
    cap = iteration_cap(n, h_norm, cfg.epsilon, cfg.delta)

    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = np.empty((n, cap))
    basis[:, 0] = q
    alphas = np.empty(cap)
    betas = np.empty(max(cap - 1, 0))
    restarts = 0

    for j in range(cap):
        w = hv(basis[:, j])
        alphas[j] = float(basis[:, j] @ w)

        # smallest Ritz pair of the current tridiagonal section
        if j == 0:
            theta, u = alphas[0], np.ones(1)
        else:
            tw, tu = scipy.linalg.eigh_tridiagonal(alphas[: j + 1], betas[:j])
            theta, u = float(tw[0]), tu[:, 0]
        if theta <= -cfg.epsilon / 2.0:
            v = basis[:, : j + 1] @ u
            v /= np.linalg.norm(v)
            rayleigh = float(v @ hv(v))  # fresh product, not the Ritz estimate
            if rayleigh <= -cfg.epsilon / 2.0:
                return OracleOutcome(NEGATIVE_CURVATURE, v, rayleigh,
                                     iterations=j + 1, matvec_count=matvecs,
                                     restarts=restarts, cap=cap)

        if j + 1 == cap:
            break
        w -= alphas[j] * basis[:, j]
        if j > 0:
            w -= betas[j - 1] * basis[:, j - 1]
        # full reorthogonalization: cheap at this scale, robust always
        w -= basis[:, : j + 1] @ (basis[:, : j + 1].T @ w)
        beta = float(np.linalg.norm(w))
        if beta <= 1e-12 * max(1.0, h_norm):
            # invariant subspace exhausted: restart in the orthogonal complement
            restarts += 1
            w = rng.standard_normal(n)
            w -= basis[:, : j + 1] @ (basis[:, : j + 1].T @ w)
            beta_restart = float(np.linalg.norm(w))
            if beta_restart <= 1e-12:
                break  # whole space spanned
            w /= beta_restart
            betas[j] = 0.0
            basis[:, j + 1] = w
            continue
        betas[j] = beta
        basis[:, j + 1] = w / beta

    return OracleOutcome(CERTIFIED, None, None, iterations=cap,
                         matvec_count=matvecs, restarts=restarts, cap=cap)
