import numpy as np
import pytest

from balm.eig_oracle import (
    CERTIFIED,
    NEGATIVE_CURVATURE,
    OracleConfig,
    estimate_operator_norm,
    iteration_cap,
    min_eig_oracle,
)
from balm.errors import DimensionMismatch


def _op(h):
    h = np.asarray(h, dtype=float)
    return lambda v: h @ v


def test_deterministic_examples():
    out = min_eig_oracle(_op(-np.eye(2)), 2, OracleConfig(epsilon=0.5, mode="deterministic"))
    assert out.kind == NEGATIVE_CURVATURE
    assert out.rayleigh == pytest.approx(-1.0)
    assert abs(np.linalg.norm(out.direction) - 1.0) <= 1e-12

    out = min_eig_oracle(_op(np.eye(2)), 2, OracleConfig(epsilon=0.5, mode="deterministic"))
    assert out.kind == CERTIFIED


def test_iteration_cap_formula():
    # ln(2.75*100/0.05^2)/2 * sqrt(1/0.01) = 58.04..., capped at min(n, 1+59)
    assert iteration_cap(100, 1.0, 0.01, 0.05) == 60
    assert iteration_cap(10, 1.0, 0.01, 0.05) == 10
    assert iteration_cap(100, 0.0, 0.01, 0.05) == 1


def test_iteration_cap_probe_grid():
    import math
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 500))
        h_norm = float(rng.uniform(0.01, 50.0))
        eps = float(rng.uniform(1e-4, 0.5))
        delta = float(rng.uniform(0.01, 0.5))
        want = min(n, 1 + math.ceil(math.log(2.75 * n / delta**2) / 2.0 * math.sqrt(h_norm / eps)))
        assert iteration_cap(n, h_norm, eps, delta) == want


def test_randomized_finds_planted_curvature():
    rng = np.random.default_rng(0)
    eps = 0.1
    hits = 0
    runs = 200
    for i in range(runs):
        n = int(rng.integers(5, 51))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        lam = rng.uniform(0.5, 3.0, n)
        lam[0] = -2 * eps
        h = q @ np.diag(lam) @ q.T
        out = min_eig_oracle(_op(h), n, OracleConfig(epsilon=eps, delta=0.05, seed=i))
        if out.kind == NEGATIVE_CURVATURE:
            assert abs(np.linalg.norm(out.direction) - 1.0) <= 1e-12
            assert float(out.direction @ h @ out.direction) <= -eps / 2 + 1e-12
            hits += 1
    assert hits / runs >= 0.95


def test_randomized_certifies_psd():
    rng = np.random.default_rng(1)
    for i in range(50):
        n = int(rng.integers(2, 40))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h = q @ np.diag(rng.uniform(0.0, 2.0, n)) @ q.T
        out = min_eig_oracle(_op(h), n, OracleConfig(epsilon=0.25, delta=0.05, seed=i))
        assert out.kind == CERTIFIED
        assert out.iterations <= out.cap


def test_deterministic_agrees_with_dense_eigensolve():
    rng = np.random.default_rng(2)
    for _ in range(60):
        n = int(rng.integers(1, 30))
        h = rng.standard_normal((n, n))
        h = 0.5 * (h + h.T)
        eps = float(rng.uniform(0.01, 1.0))
        out = min_eig_oracle(_op(h), n, OracleConfig(epsilon=eps, mode="deterministic"))
        lam = float(np.linalg.eigvalsh(h)[0])
        assert out.rayleigh == pytest.approx(lam, abs=1e-10)
        assert (out.kind == NEGATIVE_CURVATURE) == (lam <= -eps / 2)


def test_supplied_norm_bound_controls_cap():
    h = np.diag([1.0, 2.0, 3.0])
    out = min_eig_oracle(_op(h), 3, OracleConfig(epsilon=0.5, seed=0, h_norm_estimate=3.0))
    assert out.cap == iteration_cap(3, 3.0, 0.5, 0.05)


def test_norm_estimate_upper_bounds_spectral_norm():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n = int(rng.integers(2, 40))
        h = rng.standard_normal((n, n))
        h = 0.5 * (h + h.T)
        est = estimate_operator_norm(_op(h), n, np.random.default_rng(0))
        assert est >= 0.9 * float(np.linalg.norm(h, 2))


def test_repeated_eigenvalue_operator_with_breakdown():
    # identity: Lanczos breaks down immediately; restarts then certify
    out = min_eig_oracle(_op(np.eye(6)), 6, OracleConfig(epsilon=0.5, seed=0))
    assert out.kind == CERTIFIED


def test_dimension_errors():
    with pytest.raises(DimensionMismatch):
        min_eig_oracle(_op(np.eye(2)), 0, OracleConfig(epsilon=0.5))
    with pytest.raises(DimensionMismatch):
        min_eig_oracle(lambda v: np.zeros(3), 2, OracleConfig(epsilon=0.5, seed=0))
