"""Log-homogeneous self-concordant barrier geometry.

The shipped cone is the nonnegative orthant with barrier -sum(ln x_i),
optionally preceded by a free (unmetered) block on which the metric is
the identity and the barrier contributes nothing.  All local-norm and
preconditioner computations go through a factor M with M M^T equal to
the inverse metric, so Euclidean quantities of preconditioned vectors
coincide with the local norms:

    ||M d||_x = ||d||        ||M^T g|| = ||g||_x*

Other barriers can plug in by subclassing BarrierDomain; they fall back
to a dense Cholesky factor applied through triangular solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FactorizationFailure, NotInterior

# Strict positivity threshold for conic coordinates; below this the
# barrier value overflows, so constructors reject instead of returning inf.
INTERIOR_TOL = 1e-300


@dataclass(frozen=True)
class VariableLayout:
    """Free block first, conic block second."""

    n_free: int
    n_conic: int

    def __post_init__(self):
        if self.n_free < 0 or self.n_conic < 0:
            raise ValueError("block dimensions must be nonnegative")
        if self.n_free + self.n_conic == 0:
            raise ValueError("layout must have at least one variable")

    @property
    def n(self) -> int:
        return self.n_free + self.n_conic

    @property
    def free(self) -> slice:
        return slice(0, self.n_free)

    @property
    def conic(self) -> slice:
        return slice(self.n_free, self.n)


class BarrierDomain:
    """Contract for a cone equipped with an LHSC barrier.

    Subclasses implement value/gradient/hessian_apply on raw coordinate
    arrays and report the barrier parameter theta.  The metric is the
    barrier Hessian on the conic block extended by the identity on the
    free block.
    """

    layout: VariableLayout

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def theta(self) -> float:
        raise NotImplementedError

    def check_interior(self, x: np.ndarray) -> None:
        raise NotImplementedError

    def is_interior(self, x: np.ndarray) -> bool:
        try:
            self.check_interior(x)
        except NotInterior:
            return False
        return True

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_operator(self, x: np.ndarray):
        """Metric multiplier bound to one validated point (hot-loop form)."""
        self.check_interior(np.asarray(x, dtype=float))
        return lambda v: self.hessian_apply(x, v)

    def hessian_dense(self, x: np.ndarray) -> np.ndarray:
        """Dense metric; default assembles columns via hessian_apply."""
        eye = np.eye(self.n)
        return np.column_stack([self.hessian_apply(x, eye[:, i]) for i in range(self.n)])

    def metric_inv_sqrt_dense(self, x: np.ndarray) -> np.ndarray:
        """Symmetric inverse square root of the metric (dense, audits only)."""
        g = self.hessian_dense(x)
        w, q = np.linalg.eigh(0.5 * (g + g.T))
        if np.any(w <= 0):
            raise FactorizationFailure("metric not positive definite")
        return (q / np.sqrt(w)) @ q.T

    def dual_membership_violation(self, s: np.ndarray) -> float:
        """Worst componentwise violation of s in the dual cone (orthant only)."""
        raise NotImplementedError


class OrthantBarrier(BarrierDomain):
    """-sum(ln x_i) over the conic block; identity metric on the free block."""

    def __init__(self, layout: VariableLayout):
        self.layout = layout

    @property
    def theta(self) -> float:
        return float(self.layout.n_conic)

    def check_interior(self, x: np.ndarray) -> None:
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise NotInterior(f"expected shape ({self.n},), got {x.shape}")
        xc = x[self.layout.conic]
        if xc.size and not np.all(xc > INTERIOR_TOL):
            worst = float(xc.min())
            raise NotInterior(f"conic coordinate not strictly positive (min {worst:g})")
        if not np.all(np.isfinite(x)):
            raise NotInterior("nonfinite coordinate")

    def value(self, x: np.ndarray) -> float:
        self.check_interior(x)
        xc = x[self.layout.conic]
        return -float(np.sum(np.log(xc))) if xc.size else 0.0

    def gradient(self, x: np.ndarray) -> np.ndarray:
        self.check_interior(x)
        g = np.zeros(self.n)
        g[self.layout.conic] = -1.0 / x[self.layout.conic]
        return g

    def hessian_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        self.check_interior(x)
        out = np.array(v, dtype=float)
        sl = self.layout.conic
        out[sl] = v[sl] / x[sl] ** 2
        return out

    def hessian_operator(self, x: np.ndarray):
        self.check_interior(x)
        diag = np.ones(self.n)
        sl = self.layout.conic
        diag[sl] = 1.0 / x[sl] ** 2
        return lambda v: diag * v

    def hessian_dense(self, x: np.ndarray) -> np.ndarray:
        self.check_interior(x)
        d = np.ones(self.n)
        d[self.layout.conic] = 1.0 / x[self.layout.conic] ** 2
        return np.diag(d)

    def metric_inv_sqrt_dense(self, x: np.ndarray) -> np.ndarray:
        self.check_interior(x)
        d = np.ones(self.n)
        d[self.layout.conic] = x[self.layout.conic]
        return np.diag(d)

    def dual_membership_violation(self, s: np.ndarray) -> float:
        sc = np.asarray(s)[self.layout.conic]
        return float(max(0.0, -sc.min())) if sc.size else 0.0


def orthant(n_conic: int, n_free: int = 0) -> OrthantBarrier:
    return OrthantBarrier(VariableLayout(n_free=n_free, n_conic=n_conic))


class InteriorPoint:
    """Coordinate vector validated against a domain's interior at construction."""

    __slots__ = ("dom", "x")

    def __init__(self, dom: BarrierDomain, x):
        x = np.array(x, dtype=float)
        dom.check_interior(x)
        x.setflags(write=False)
        self.dom = dom
        self.x = x

    def __repr__(self):
        return f"InteriorPoint(n={self.x.size})"


def _coords(dom: BarrierDomain, x) -> np.ndarray:
    if isinstance(x, InteriorPoint):
        return x.x
    x = np.asarray(x, dtype=float)
    dom.check_interior(x)
    return x


class PreconditionerFactor:
    """A matrix M with M M^T equal to the inverse metric at one point."""

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_t(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DiagonalFactor(PreconditionerFactor):
    __slots__ = ("diag",)

    def __init__(self, diag: np.ndarray):
        self.diag = np.asarray(diag, dtype=float)

    def apply(self, v):
        return self.diag * v

    def apply_t(self, v):
        return self.diag * v

    def apply_inv(self, v):
        return v / self.diag


class TriangularFactor(PreconditionerFactor):
    """M = L^{-T} for the lower Cholesky factor L of the metric.

    apply/apply_t are one triangular solve each; apply_inv is a product.
    """

    __slots__ = ("chol_lower",)

    def __init__(self, chol_lower: np.ndarray):
        self.chol_lower = chol_lower

    def apply(self, v):
        return scipy.linalg.solve_triangular(self.chol_lower.T, v, lower=False)

    def apply_t(self, v):
        return scipy.linalg.solve_triangular(self.chol_lower, v, lower=True)

    def apply_inv(self, v):
        return self.chol_lower.T @ v


def preconditioner(dom: BarrierDomain, x) -> PreconditionerFactor:
    """Factor of the inverse metric at x; diagonal for the orthant."""
    x = _coords(dom, x)
    if isinstance(dom, OrthantBarrier):
        d = np.ones(dom.n)
        d[dom.layout.conic] = x[dom.layout.conic]
        return DiagonalFactor(d)
    g = dom.hessian_dense(x)
    try:
        low = scipy.linalg.cholesky(0.5 * (g + g.T), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationFailure(f"metric Cholesky failed: {exc}") from exc
    return TriangularFactor(low)


def barrier_value(dom: BarrierDomain, x) -> float:
    return dom.value(_coords(dom, x))


def barrier_gradient(dom: BarrierDomain, x) -> np.ndarray:
    return dom.gradient(_coords(dom, x))


def barrier_hessian_apply(dom: BarrierDomain, x, v) -> np.ndarray:
    return dom.hessian_apply(_coords(dom, x), np.asarray(v, dtype=float))


def local_norm(dom: BarrierDomain, x, v, factor: PreconditionerFactor | None = None) -> float:
    if factor is None:
        factor = preconditioner(dom, x)
    return float(np.linalg.norm(factor.apply_inv(np.asarray(v, dtype=float))))


def dual_local_norm(dom: BarrierDomain, x, g, factor: PreconditionerFactor | None = None) -> float:
    if factor is None:
        factor = preconditioner(dom, x)
    return float(np.linalg.norm(factor.apply_t(np.asarray(g, dtype=float))))


@dataclass(frozen=True)
class DualConeCheck:
    member: bool
    worst_violation: float
    # ||s/mu + grad B(x)||_x* <= 1 certifies membership without touching
    # the cone's description; populated only when a scale mu is supplied.
    sufficient: bool | None = None

    def __bool__(self):
        return self.member


def dual_cone_certificate(dom: BarrierDomain, x, s, tol: float, mu: float | None = None) -> DualConeCheck:
    """Test s for dual-cone membership at componentwise tolerance tol."""
    x = _coords(dom, x)
    s = np.asarray(s, dtype=float)
    violation = dom.dual_membership_violation(s)
    sufficient = None
    if mu is not None:
        shifted = s / mu + dom.gradient(x)
        sufficient = dual_local_norm(dom, x, shifted) <= 1.0 + 1e-12
    return DualConeCheck(member=violation <= tol, worst_violation=violation, sufficient=sufficient)
