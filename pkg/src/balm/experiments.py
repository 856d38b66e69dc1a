"""Seeded benchmark families: low-rank recovery and two constrained NMFs.

Each generator reproduces a fixed random recipe from a named seed, and
each binding packs the matrix variables into the flat layout the solver
stack consumes (column-stacked, free block first).  Bindings also carry
exactly feasible interior anchor points, the paper-style initial points,
feasibility projections used before metrics, and the pieces the SpaRSA
baseline needs on the original (unreformulated) problem.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .barriers import orthant
from .errors import DegenerateColumn, ZeroGroundTruth
from .model import ConicModel
from .sparsa import project_column_simplex, project_fro_ball, project_sphere_nonneg

RECOVERY = "recovery"
NMF_SIMPLEX = "nmf_simplex"
NMF_SPHERE = "nmf_sphere"
FAMILIES = (RECOVERY, NMF_SIMPLEX, NMF_SPHERE)

NOISE_STD = 0.01
NMF_GAMMA = 0.005


def _vec(a: np.ndarray) -> np.ndarray:
    return a.flatten(order="F")


def _mat(v: np.ndarray, shape) -> np.ndarray:
    return v.reshape(shape, order="F")


@dataclass
class RecoveryInstance:
    n: int
    l: int
    m: int
    A: np.ndarray            # m x n^2 sensing matrix
    y: np.ndarray
    b: float                 # Frobenius-ball radius ||U~||_F^2
    ground_truth: np.ndarray  # X* = U~ U~'
    seed: int


@dataclass
class NmfInstance:
    n: int
    l: int
    m: int
    X: np.ndarray
    kind: str                # NMF_SIMPLEX | NMF_SPHERE
    u_star: np.ndarray
    v_star: np.ndarray
    ground_truth: np.ndarray  # U* V*
    seed: int
    gamma: float = NMF_GAMMA


def gen_recovery(n: int, l: int, m: int, seed) -> RecoveryInstance:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n * n)) / math.sqrt(m)
    u_t = rng.standard_normal((n, l))
    x_star = u_t @ u_t.T
    b = float(np.sum(u_t * u_t))
    e = NOISE_STD * rng.standard_normal(m)
    y = a @ _vec(x_star) + e
    return RecoveryInstance(n=n, l=l, m=m, A=a, y=y, b=b, ground_truth=x_star,
                            seed=int(seed) if np.isscalar(seed) else seed)


def gen_nmf(kind: str, n: int, l: int, m: int, seed) -> NmfInstance:
    if kind not in (NMF_SIMPLEX, NMF_SPHERE):
        raise ValueError(f"unknown NMF kind {kind!r}")
    rng = np.random.default_rng(seed)
    u_star = rng.uniform(0.0, 2.0, size=(n, l))
    v_t = rng.uniform(0.0, 1.0, size=(l, m))
    if kind == NMF_SIMPLEX:
        v_star = v_t / v_t.sum(axis=0)
    else:
        v_star = math.sqrt(m) * v_t / np.linalg.norm(v_t)
    e = NOISE_STD * rng.standard_normal((n, m))
    x = u_star @ v_star + e
    return NmfInstance(n=n, l=l, m=m, X=x, kind=kind, u_star=u_star, v_star=v_star,
                       ground_truth=u_star @ v_star,
                       seed=int(seed) if np.isscalar(seed) else seed)


def relative_error(product: np.ndarray, ground_truth: np.ndarray) -> float:
    denom = float(np.linalg.norm(ground_truth))
    if denom == 0.0:
        raise ZeroGroundTruth("ground-truth matrix has zero norm")
    return float(np.linalg.norm(product - ground_truth)) / denom


class _PointCache:
    """Reuse per-point quantities across the many matvecs taken at one x."""

    __slots__ = ("key", "value")

    def __init__(self):
        self.key = None
        self.value = None

    def get(self, x, compute):
        if self.key is not None and self.key.shape == x.shape and np.array_equal(self.key, x):
            return self.value
        value = compute(x)
        self.key = np.array(x, copy=True)
        self.value = value
        return value


@dataclass
class SparsaBinding:
    x0: np.ndarray
    value: callable
    grad: callable
    project: callable
    rel_error: callable
    feasibility: callable


@dataclass
class ProblemSetup:
    family: str
    instance: object
    model: ConicModel
    x0: np.ndarray
    z_eps: np.ndarray
    lambda0: np.ndarray
    unpack: callable
    project_feasible: callable
    objective: callable
    rel_error: callable
    feasibility: callable
    sparsa: SparsaBinding


def bind_recovery(inst: RecoveryInstance, validate: bool = True) -> ProblemSetup:
    """Ball-constrained recovery reformulated with a slack: ||U||_F^2 + s = b, s >= 0."""
    n, l = inst.n, inst.l
    nl = n * l
    a, y, b = inst.A, inst.y, inst.b
    dom = orthant(n_conic=1, n_free=nl)

    def unpack(x):
        return _mat(x[:nl], (n, l)), float(x[nl])

    cache = _PointCache()

    def _residual_state(x):
        u, _ = unpack(x)
        r = a @ _vec(u @ u.T) - y
        g = _mat(a.T @ r, (n, n))
        return u, r, g + g.T

    def f(x):
        _, r, _ = cache.get(np.asarray(x, dtype=float), _residual_state)
        return 0.5 * float(r @ r)

    def grad_f(x):
        u, _, gs = cache.get(np.asarray(x, dtype=float), _residual_state)
        out = np.empty(nl + 1)
        out[:nl] = _vec(gs @ u)
        out[nl] = 0.0
        return out

    def hvp_f(x, v):
        u, _, gs = cache.get(np.asarray(x, dtype=float), _residual_state)
        z = _mat(np.asarray(v)[:nl], (n, l))
        w1 = z @ u.T + u @ z.T
        gd = _mat(a.T @ (a @ _vec(w1)), (n, n))
        out = np.empty(nl + 1)
        out[:nl] = _vec((gd + gd.T) @ u + gs @ z)
        out[nl] = 0.0
        return out

    def c(x):
        return np.array([float(x[:nl] @ x[:nl]) + x[nl] - b])

    def jac_apply(x, v):
        return np.array([2.0 * float(x[:nl] @ v[:nl]) + v[nl]])

    def jac_t_apply(x, w):
        out = np.empty(nl + 1)
        out[:nl] = 2.0 * w[0] * x[:nl]
        out[nl] = w[0]
        return out

    def constraint_hvp(x, w, v):
        out = np.empty(nl + 1)
        out[:nl] = 2.0 * w[0] * np.asarray(v)[:nl]
        out[nl] = 0.0
        return out

    model = ConicModel(n=nl + 1, m=1, dom=dom, f=f, grad_f=grad_f, hvp_f=hvp_f,
                       c=c, jac_apply=jac_apply, jac_t_apply=jac_t_apply,
                       constraint_hvp=constraint_hvp, name=f"recovery_{n}x{l}x{inst.m}")

    u0 = np.full((n, l), math.sqrt(b / (2.0 * nl)))
    x0 = np.concatenate([_vec(u0), [b / 2.0]])  # exactly feasible and interior
    z_eps = x0.copy()

    if validate:
        model.validate(x0, seed=inst.seed)

    def project_feasible(x):
        u, _ = unpack(x)
        u = project_fro_ball(u, b)
        # restore exact equality in the reformulated variables
        return np.concatenate([_vec(u), [b - float(np.sum(u * u))]])

    def objective(x):
        u, _ = unpack(x)
        r = a @ _vec(u @ u.T) - y
        return 0.5 * float(r @ r)

    def rel_error(x):
        u, _ = unpack(x)
        return relative_error(u @ u.T, inst.ground_truth)

    def feasibility(x):
        u, _ = unpack(x)
        return max(0.0, float(np.sum(u * u)) - b)

    # SpaRSA works on the original ball-constrained formulation in U alone
    def s_value(uflat):
        u = _mat(uflat, (n, l))
        r = a @ _vec(u @ u.T) - y
        return 0.5 * float(r @ r)

    def s_grad(uflat):
        u = _mat(uflat, (n, l))
        r = a @ _vec(u @ u.T) - y
        g = _mat(a.T @ r, (n, n))
        return _vec((g + g.T) @ u)

    sparsa = SparsaBinding(
        x0=_vec(u0),
        value=s_value,
        grad=s_grad,
        project=lambda uflat: _vec(project_fro_ball(_mat(uflat, (n, l)), b)),
        rel_error=lambda uflat: relative_error(
            _mat(uflat, (n, l)) @ _mat(uflat, (n, l)).T, inst.ground_truth),
        feasibility=lambda uflat: max(0.0, float(uflat @ uflat) - b),
    )

    return ProblemSetup(
        family=RECOVERY, instance=inst, model=model, x0=x0, z_eps=z_eps,
        lambda0=np.zeros(1), unpack=unpack, project_feasible=project_feasible,
        objective=objective, rel_error=rel_error, feasibility=feasibility,
        sparsa=sparsa,
    )


def bind_nmf(inst: NmfInstance, validate: bool = True) -> ProblemSetup:
    """Regularized NMF with entrywise-nonnegative factors.

    Simplex kind constrains each column of V to sum to one (m affine
    equalities); sphere kind fixes ||V||_F^2 = m (one quadratic equality).
    """
    n, l, m_cols = inst.n, inst.l, inst.m
    nl, lm = n * l, l * m_cols
    x_data, gamma = inst.X, inst.gamma
    dom = orthant(n_conic=nl + lm, n_free=0)
    simplex = inst.kind == NMF_SIMPLEX

    def unpack(x):
        return _mat(x[:nl], (n, l)), _mat(x[nl:], (l, m_cols))

    cache = _PointCache()

    def _state(x):
        u, v = unpack(x)
        return u, v, u @ v - x_data

    def f(x):
        u, v, r = cache.get(np.asarray(x, dtype=float), _state)
        return 0.5 * float(np.sum(r * r)) + gamma * (float(np.sum(u * u)) + float(np.sum(v * v)))

    def grad_f(x):
        u, v, r = cache.get(np.asarray(x, dtype=float), _state)
        return np.concatenate([_vec(r @ v.T + 2.0 * gamma * u),
                               _vec(u.T @ r + 2.0 * gamma * v)])

    def hvp_f(x, vv):
        u, v, r = cache.get(np.asarray(x, dtype=float), _state)
        zu = _mat(np.asarray(vv)[:nl], (n, l))
        zv = _mat(np.asarray(vv)[nl:], (l, m_cols))
        dr = zu @ v + u @ zv
        return np.concatenate([_vec(dr @ v.T + r @ zv.T + 2.0 * gamma * zu),
                               _vec(zu.T @ r + u.T @ dr + 2.0 * gamma * zv)])

    if simplex:
        m_eq = m_cols

        def c(x):
            _, v = unpack(x)
            return v.sum(axis=0) - 1.0

        def jac_apply(x, vv):
            return _mat(np.asarray(vv)[nl:], (l, m_cols)).sum(axis=0)

        def jac_t_apply(x, w):
            out = np.zeros(nl + lm)
            out[nl:] = np.repeat(np.asarray(w), l)  # column j of V gets w_j
            return out

        def constraint_hvp(x, w, vv):
            return np.zeros(nl + lm)
    else:
        m_eq = 1

        def c(x):
            _, v = unpack(x)
            return np.array([float(np.sum(v * v)) - m_cols])

        def jac_apply(x, vv):
            return np.array([2.0 * float(x[nl:] @ np.asarray(vv)[nl:])])

        def jac_t_apply(x, w):
            out = np.zeros(nl + lm)
            out[nl:] = 2.0 * w[0] * x[nl:]
            return out

        def constraint_hvp(x, w, vv):
            out = np.zeros(nl + lm)
            out[nl:] = 2.0 * w[0] * np.asarray(vv)[nl:]
            return out

    model = ConicModel(n=nl + lm, m=m_eq, dom=dom, f=f, grad_f=grad_f, hvp_f=hvp_f,
                       c=c, jac_apply=jac_apply, jac_t_apply=jac_t_apply,
                       constraint_hvp=constraint_hvp,
                       name=f"{inst.kind}_{n}x{l}x{m_cols}")

    u0 = np.ones((n, l))
    v0 = np.full((l, m_cols), 1.0 / l)
    x0 = np.concatenate([_vec(u0), _vec(v0)])
    if simplex:
        z_eps = x0.copy()  # column sums are exactly one
    else:
        v_anchor = math.sqrt(m_cols) * v0 / np.linalg.norm(v0)
        z_eps = np.concatenate([_vec(u0), _vec(v_anchor)])

    if validate:
        model.validate(x0, seed=inst.seed)

    def project_feasible(x):
        u, v = unpack(x)
        u = np.maximum(u, 0.0)
        v = np.maximum(v, 0.0)
        if simplex:
            sums = v.sum(axis=0)
            if np.any(sums <= 0.0):
                raise DegenerateColumn("column sum vanished during rescaling")
            v = v / sums
        else:
            v = project_sphere_nonneg(v, math.sqrt(m_cols))
        return np.concatenate([_vec(u), _vec(v)])

    def objective(x):
        u, v = unpack(x)
        r = u @ v - x_data
        return 0.5 * float(np.sum(r * r)) + gamma * (float(np.sum(u * u)) + float(np.sum(v * v)))

    def rel_error(x):
        u, v = unpack(x)
        return relative_error(u @ v, inst.ground_truth)

    def feasibility(x):
        _, v = unpack(x)
        if simplex:
            return float(np.linalg.norm(v.sum(axis=0) - 1.0))
        return abs(float(np.sum(v * v)) - m_cols)

    def s_project(xflat):
        u = np.maximum(_mat(xflat[:nl], (n, l)), 0.0)
        v = _mat(xflat[nl:], (l, m_cols))
        if simplex:
            v = project_column_simplex(v)
        else:
            v = project_sphere_nonneg(v, math.sqrt(m_cols))
        return np.concatenate([_vec(u), _vec(v)])

    sparsa = SparsaBinding(
        x0=x0.copy(),
        value=objective,
        grad=grad_f,
        project=s_project,
        rel_error=rel_error,
        feasibility=feasibility,
    )

    return ProblemSetup(
        family=inst.kind, instance=inst, model=model, x0=x0, z_eps=z_eps,
        lambda0=np.zeros(m_eq), unpack=unpack, project_feasible=project_feasible,
        objective=objective, rel_error=rel_error, feasibility=feasibility,
        sparsa=sparsa,
    )


def feasibility_projection(setup: ProblemSetup, x) -> np.ndarray:
    """Project a solver iterate onto the family's feasible set (metrics only)."""
    return setup.project_feasible(np.asarray(x, dtype=float))


def generate(family: str, n: int, l: int, m: int, seed):
    if family == RECOVERY:
        return gen_recovery(n, l, m, seed)
    return gen_nmf(family, n, l, m, seed)


def bind(instance, validate: bool = True) -> ProblemSetup:
    if isinstance(instance, RecoveryInstance):
        return bind_recovery(instance, validate=validate)
    return bind_nmf(instance, validate=validate)


_MAGIC = b"BALM-INSTANCE-1\n"


def save_instance(inst, path) -> None:
    """Flat binary bundle: magic, one JSON header line, row-major float64 payloads."""
    if isinstance(inst, RecoveryInstance):
        header = {"family": RECOVERY, "n": inst.n, "l": inst.l, "m": inst.m,
                  "seed": inst.seed, "b": inst.b}
        arrays = [("A", inst.A), ("y", inst.y), ("ground_truth", inst.ground_truth)]
    else:
        header = {"family": inst.kind, "n": inst.n, "l": inst.l, "m": inst.m,
                  "seed": inst.seed, "gamma": inst.gamma}
        arrays = [("X", inst.X), ("u_star", inst.u_star), ("v_star", inst.v_star),
                  ("ground_truth", inst.ground_truth)]
    header["arrays"] = [[name, list(arr.shape)] for name, arr in arrays]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_instance(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an instance bundle")
        header = json.loads(fh.readline())
        payload = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 8), dtype=np.float64)
            payload[name] = data.reshape(shape).copy()
    if header["family"] == RECOVERY:
        return RecoveryInstance(n=header["n"], l=header["l"], m=header["m"],
                                A=payload["A"], y=payload["y"], b=header["b"],
                                ground_truth=payload["ground_truth"], seed=header["seed"])
    return NmfInstance(n=header["n"], l=header["l"], m=header["m"], X=payload["X"],
                       kind=header["family"], u_star=payload["u_star"],
                       v_star=payload["v_star"], ground_truth=payload["ground_truth"],
                       seed=header["seed"], gamma=header["gamma"])
