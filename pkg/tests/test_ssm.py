import math
import time

import numpy as np
import pytest

from hdmba import tensor as T
from hdmba.ssm import SelectiveSSM, SsmConfig, discretize, selective_scan
from hdmba.tensor import ShapeError, Tensor

from conftest import fd_grad, max_rel_err


def naive_scan(u, delta, A, B, C, D, reverse=False):
    """Per-step scalar loops in plain Python floats."""
    nb, length, d_inner = u.shape
    n = A.shape[1]
    y = np.zeros_like(u)
    for b in range(nb):
        for d in range(d_inner):
            h = [0.0] * n
            order = range(length - 1, -1, -1) if reverse else range(length)
            for t in order:
                acc = 0.0
                for k in range(n):
                    h[k] = math.exp(delta[b, t, d] * A[d, k]) * h[k] + delta[b, t, d] * B[b, t, k] * u[b, t, d]
                    acc += C[b, t, k] * h[k]
                y[b, t, d] = acc + D[d] * u[b, t, d]
    return y


def random_instance(r, nb, length, d_inner, n):
    return (r.normal(size=(nb, length, d_inner)),
            r.uniform(0.01, 1.0, size=(nb, length, d_inner)),
            -r.uniform(0.1, 2.0, size=(d_inner, n)),
            r.normal(size=(nb, length, n)),
            r.normal(size=(nb, length, n)),
            r.normal(size=d_inner))


def scan_np(*arrays, reverse=False):
    return selective_scan(*[Tensor(a) for a in arrays], reverse=reverse).data


def test_discretize_half():
    Abar, Bbar = discretize(np.array([[-math.log(2)]]), np.array([[3.0]]), np.array([[1.0]]))
    assert Abar[0, 0, 0] == pytest.approx(0.5, abs=1e-15)
    assert Bbar[0, 0, 0] == 3.0


def test_discretize_small_step_limit():
    Abar, Bbar = discretize(np.array([[-1.0, -5.0]]), np.array([[2.0, 2.0]]), np.array([[1e-12]]))
    np.testing.assert_allclose(Abar, 1.0, atol=1e-10)
    np.testing.assert_allclose(Bbar, 0.0, atol=1e-10)


def test_discretize_scalar_oracle(rng):
    A = -rng.uniform(0.1, 2, size=(2, 3))
    B = rng.normal(size=(4, 3))
    delta = rng.uniform(0.01, 1, size=(4, 2))
    Abar, Bbar = discretize(A, B, delta)
    for t in range(4):
        for d in range(2):
            for k in range(3):
                assert abs(Abar[t, d, k] - math.exp(delta[t, d] * A[d, k])) < 1e-12
                assert abs(Bbar[t, d, k] - delta[t, d] * B[t, k]) < 1e-12


def test_discretize_rejects_nonpositive_delta():
    with pytest.raises(ValueError, match="positive"):
        discretize(np.array([[-1.0]]), np.array([[1.0]]), np.array([[0.0]]))


def test_discretize_shape_error():
    with pytest.raises(ShapeError):
        discretize(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 2)))


def test_two_step_unroll():
    u = np.ones((1, 2, 1))
    delta = np.ones((1, 2, 1))
    A = np.array([[-math.log(2)]])
    B = np.ones((1, 2, 1))
    C = np.ones((1, 2, 1))
    y = scan_np(u, delta, A, B, C, np.zeros(1))
    np.testing.assert_allclose(y[0, :, 0], [1.0, 1.5], atol=1e-15)


def test_memoryless_when_abar_zero(rng):
    u = rng.normal(size=(1, 6, 1))
    # exp(delta * A) underflows to exactly 0 for a huge negative A
    y = scan_np(u, np.ones_like(u), np.array([[-1e4]]), np.ones((1, 6, 1)), np.ones((1, 6, 1)), np.zeros(1))
    np.testing.assert_array_equal(y, u)


def test_random_instance_matches_naive(rng):
    args = random_instance(rng, 1, 16, 4, 8)
    assert np.max(np.abs(scan_np(*args) - naive_scan(*args))) < 1e-10


def test_hundred_random_instances_match_naive():
    r = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        length = int(r.integers(1, 33))
        args = random_instance(r, int(r.integers(1, 3)), length, int(r.integers(1, 4)), int(r.integers(1, 5)))
        worst = max(worst, float(np.max(np.abs(scan_np(*args) - naive_scan(*args)))))
    assert worst < 1e-10


def test_reverse_matches_naive(rng):
    args = random_instance(rng, 2, 9, 3, 4)
    assert np.max(np.abs(scan_np(*args, reverse=True) - naive_scan(*args, reverse=True))) < 1e-10


def test_reverse_equals_flipped_forward(rng):
    u, dl, A, B, C, D = random_instance(rng, 1, 7, 2, 3)
    flip = lambda a: a[:, ::-1].copy()
    fwd = scan_np(flip(u), flip(dl), A, flip(B), flip(C), D)
    np.testing.assert_allclose(scan_np(u, dl, A, B, C, D, reverse=True), flip(fwd), atol=1e-12)


def test_causality(rng):
    u, dl, A, B, C, D = random_instance(rng, 1, 12, 3, 4)
    base = scan_np(u, dl, A, B, C, D)
    for t in (0, 5, 11):
        u2 = u.copy()
        u2[0, t] += 0.7
        out = scan_np(u2, dl, A, B, C, D)
        np.testing.assert_array_equal(out[0, :t], base[0, :t])
        assert np.all(np.abs(out[0, t:] - base[0, t:]).sum(axis=-1) > 0)


def test_zero_input_gives_exact_zero(rng):
    _, dl, A, B, C, D = random_instance(rng, 2, 10, 3, 4)
    y = scan_np(np.zeros((2, 10, 3)), dl, A, B, C, D)
    assert np.all(y == 0.0)


@pytest.mark.parametrize("reverse", [False, True])
def test_gradients_match_finite_differences(rng, reverse):
    arrays = list(random_instance(rng, 2, 6, 3, 4))
    probe = rng.normal(size=(2, 6, 3))
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    (selective_scan(*ts, reverse=reverse) * Tensor(probe)).sum().backward()

    def f():
        return float(np.sum(scan_np(*arrays, reverse=reverse) * probe))

    for a, t in zip(arrays, ts):
        assert max_rel_err(t.grad, fd_grad(f, a, h=1e-6)) < 1e-5


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        scan_np(np.zeros((1, 0, 2)), np.ones((1, 0, 2)), -np.ones((2, 3)),
                np.zeros((1, 0, 3)), np.zeros((1, 0, 3)), np.zeros(2))


def test_scan_shape_error():
    with pytest.raises(ShapeError, match="selective_scan"):
        scan_np(np.zeros((1, 4, 2)), np.ones((1, 4, 2)), -np.ones((3, 3)),
                np.zeros((1, 4, 3)), np.zeros((1, 4, 3)), np.zeros(2))


def test_linear_time():
    r = np.random.default_rng(0)

    def best_time(length):
        args = [Tensor(a) for a in random_instance(r, 16, length, 16, 16)]
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            selective_scan(*args)
            times.append(time.perf_counter() - t0)
        return min(times)

    best_time(64)  # warm-up
    ratio = best_time(1024) / best_time(512)
    assert ratio <= 2.3, ratio


def test_selective_ssm_defaults():
    ssm = SelectiveSSM(32, SsmConfig(), rng=np.random.default_rng(0), dtype=np.float64)
    assert ssm.dt_rank == 2 and ssm.d_state == 16
    A = ssm.A().data
    assert np.all(A < 0)
    np.testing.assert_allclose(A[0], -np.arange(1, 17))
    np.testing.assert_array_equal(ssm.D.data, 1.0)
    dt = np.log1p(np.exp(ssm.dt_proj.bias.data))
    assert np.all(dt >= 1e-3 - 1e-12) and np.all(dt <= 1e-1 + 1e-12)
    assert ssm.x_proj.bias is None


def test_selective_ssm_delta_positive(rng):
    ssm = SelectiveSSM(8, SsmConfig(d_state=4), rng=np.random.default_rng(1), dtype=np.float64)
    delta, B, C = ssm.project(Tensor(rng.normal(size=(3, 10, 8)) * 5))
    assert np.all(delta.data > 0)
    assert B.shape == C.shape == (3, 10, 4)


def test_bidirectional_adds_reverse_scan(rng):
    cfg = SsmConfig(d_state=4, bidirectional=True)
    ssm = SelectiveSSM(4, cfg, rng=np.random.default_rng(3), dtype=np.float64)
    u = Tensor(rng.normal(size=(1, 5, 4)))
    delta, B, C = ssm.project(u)
    args = (u, delta, ssm.A(), B, C, ssm.D)
    expected = selective_scan(*args).data + selective_scan(*args, reverse=True).data
    np.testing.assert_allclose(ssm(u).data, expected, atol=1e-14)


def test_ssm_module_gradient(rng):
    ssm = SelectiveSSM(4, SsmConfig(d_state=3), rng=np.random.default_rng(4), dtype=np.float64)
    x = rng.normal(size=(2, 5, 4))
    ssm(Tensor(x)).sum().backward()
    with T.no_grad():
        for name, p in ssm.named_parameters():
            num = fd_grad(lambda: float(ssm(Tensor(x)).data.sum()), p.data, h=1e-5)
            # entries below 1e-4 are dominated by difference roundoff
            assert max_rel_err(p.grad, num, floor=1e-4) < 1e-5, name
