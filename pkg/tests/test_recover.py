import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmsync import circlefold as cf
from bmsync.models import gen_z2
from bmsync.recover import (correlation, exact_recovery, frobenius_gap, metrics, overlap,
                            round_gaussian, spectral_baseline)


def _rot(th):
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])


def _signs(n, seed):
    return np.random.default_rng(seed).choice([-1.0, 1.0], n)


def test_correlation_examples(rng):
    z = _signs(10, 0)
    assert correlation(np.column_stack([z, np.zeros(10)]), z) == 1.0
    Q = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert abs(correlation(Q, np.array([1.0, 1.0])) - np.sqrt(2) / 2) <= 1e-15
    with pytest.raises(ValueError):
        correlation(Q, np.ones(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
def test_metric_invariances(n, seed, th):
    rng = np.random.default_rng(seed)
    Q = cf.random_point(n, rng)
    z = rng.choice([-1.0, 1.0], n)
    c = correlation(Q, z)
    assert abs(c - np.sqrt(np.sum((Q @ Q.T) * np.outer(z, z))) / n) <= 1e-12
    assert c <= 1 + 1e-12
    R = _rot(th)
    assert abs(correlation(Q @ R, z) - c) <= 1e-12
    assert abs(correlation(Q, -z) - c) <= 1e-12
    assert abs(frobenius_gap(Q @ R, z) - frobenius_gap(Q, -z)) <= 1e-9 * max(1, n)
    assert abs(frobenius_gap(Q, z) - np.linalg.norm(Q @ Q.T - np.outer(z, z))) <= 1e-9 * max(1, n)
    zh = rng.choice([-1.0, 1.0], n)
    assert overlap(zh, z) == overlap(-zh, z) == overlap(zh, -z)


def test_round_gaussian(rng):
    z = _signs(50, 1)
    Q = np.column_stack([z, np.zeros(50)]) @ _rot(0.7)
    for seed in range(20):
        zh = round_gaussian(Q, seed)
        assert np.array_equal(zh, z) or np.array_equal(zh, -z)
    Q = cf.random_point(50, rng)
    g = np.random.default_rng(5).standard_normal(2)
    s = np.sign(Q @ g)
    s[s == 0] = 1
    assert np.array_equal(round_gaussian(Q, 5), s)
    assert np.array_equal(round_gaussian(np.zeros((3, 2)), 0), np.ones(3))


def test_rounding_moments(rng):
    n = 40
    Q = cf.random_point(n, rng)
    z = _signs(n, 2)
    G = rng.standard_normal((2, 200_000))
    QG = Q @ G
    assert abs(np.mean(np.sum(QG**2, axis=0)) / n - 1) <= 0.05
    want = np.sum((Q.T @ z) ** 2)
    assert abs(np.mean((z @ QG) ** 2) / want - 1) <= 0.05


def test_exact_recovery_examples(rng):
    n = 30
    z = _signs(n, 3)
    Q = np.column_stack([z, np.zeros(n)]) @ _rot(rng.uniform(0, 6))
    assert exact_recovery(Q, z)
    Qf = np.column_stack([z, np.zeros(n)])
    Qf[4] *= -1
    assert abs(frobenius_gap(Qf, z) ** 2 - 8 * (n - 1)) <= 1e-9
    assert not exact_recovery(Qf, z, tol=1.0)
    assert not exact_recovery(cf.random_point(500, rng), _signs(500, 4))
    with pytest.raises(ValueError):
        exact_recovery(Q, z, tol=0.0)


def test_frobenius_gap_small_perturbation():
    # the direct n^2 expansion would lose everything below ~n sqrt(eps)
    n = 400
    z = _signs(n, 6)
    d = 1e-6 * np.random.default_rng(0).standard_normal(n)
    Q = np.column_stack([z * np.cos(d), z * np.sin(d)])
    dense = np.linalg.norm(Q @ Q.T - np.outer(z, z))
    assert abs(frobenius_gap(Q, z) - dense) <= 1e-3 * dense + 1e-12


def test_metrics_bundle():
    z = _signs(20, 7)
    m = metrics(np.column_stack([z, np.zeros(20)]), z, rng=0)
    assert m.correlation == 1.0 and m.overlap == 1.0 and m.exact and m.frobenius_gap == 0.0
    assert set(m.to_dict()) == {"correlation", "overlap", "exact", "frobenius_gap"}


def test_spectral_baseline_noiseless():
    inst = gen_z2(100, sigma=0.0, rng=0)
    assert overlap(spectral_baseline(inst.Y), inst.z) == 1.0


def test_spectral_baseline_regimes():
    n = 2000
    above = [overlap(spectral_baseline(gen_z2(n, lam=5.0, rng=s).Y), gen_z2(n, lam=5.0, rng=s).z)
             for s in range(10)]
    assert sum(o > 0.2 for o in above) >= 9
    below = [overlap(spectral_baseline(gen_z2(n, lam=0.2, rng=s).Y), gen_z2(n, lam=0.2, rng=s).z)
             for s in range(10)]
    assert np.median(below) <= 3 / np.sqrt(n)
