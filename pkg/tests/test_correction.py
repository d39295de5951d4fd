import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from superpose.circuits.compile import ternary_code
from superpose.correction import (RELU_GAUSSIAN_MEAN, apply_and_measure_contraction, build_error_correction,
                                  build_norm_balancer, contraction_threshold, f_pl, semicircle_knots)
from superpose.features import BooleanVector, ReadoffMatrix, identity_dictionary, random_unit_dictionary
from superpose.tensor import PreconditionError, RngStream, staircase_round


def _identity_layer(m, d, s, seed):
    return build_error_correction(m, d, s, ReadoffMatrix(np.eye(m)), RngStream(seed),
                                  input_dictionary=identity_dictionary(m))


def _bits(m, active):
    b = np.zeros(m)
    b[list(active)] = 1.0
    return b


def test_layer_structure():
    layer = _identity_layer(64, 256, 4, 1)
    phi = layer.phi1_unnormalized
    assert set(np.unique(phi)) <= {-1.0, 0.0, 1.0}
    assert layer.normalization == pytest.approx((4 / 256) ** 0.25)
    assert np.array_equal(layer.dictionary().phi, phi * layer.normalization)
    assert layer.params["p"] == pytest.approx(1 / math.sqrt(256 * 4))
    # unit-norm output codes up to the spread of the support size
    norms = np.linalg.norm(layer.dictionary().phi, axis=0)
    sizes = layer.support_sizes
    assert np.allclose(norms, np.sqrt(sizes) * layer.normalization)


def test_zero_input_zero_output():
    layer = _identity_layer(64, 256, 4, 2)
    assert not layer(np.zeros(64)).any()


def test_clean_recovery_matches_self_interference():
    m, d, s = 200, 1024, 3
    layer = _identity_layer(m, d, s, 3)
    phi = layer.phi1_unnormalized
    R = layer.readoff()
    gen = np.random.default_rng(4)
    checked = 0
    for _ in range(50):
        active = gen.choice(m, s, replace=False)
        b = _bits(m, active)
        if layer.collision_stats(b[None])["rounding_collisions"]:
            continue
        out = R.apply(layer(b))
        # oracle: mean over the support of k of phi_ik * (phi b)_i
        sizes = np.maximum(layer.support_sizes, 1)
        expect = (phi.T @ (phi @ b)) / sizes
        assert np.allclose(out, expect, atol=1e-12)
        assert np.allclose(out[active], 1.0 + (expect[active] - 1.0), atol=1e-12)
        checked += 1
    assert checked > 40


def test_triple_overlap_rate_binomial():
    m, d, s = 512, 256, 8
    layer = _identity_layer(m, d, s, 5)
    gen = np.random.default_rng(6)
    bits = np.zeros((2000, m))
    for row in bits:
        row[gen.choice(m, s, replace=False)] = 1
    rate = layer.collision_stats(bits)["triple_overlap_rate"]
    p = layer.params["p"]
    expect = binom.sf(2, s, p)
    n = bits.shape[0] * d
    assert expect == pytest.approx(math.comb(s, 3) * p ** 3, rel=0.1)
    assert abs(rate - expect) < 5 * math.sqrt(expect / n) + 0.3 * expect


def test_threshold_formula():
    assert contraction_threshold(4096, 1024, 4) == pytest.approx(1024 ** 0.25 / (64 * 4 ** 0.25))
    assert contraction_threshold(4096, 1024, 4, K=2.0) == pytest.approx(2 * contraction_threshold(4096, 1024, 4))


def _ternary_layer(m, d, s, seed):
    rng = RngStream(seed)
    dct, R = ternary_code(m, d, s, rng.child(0))
    return build_error_correction(m, d, s, R, rng.child(1), input_dictionary=dct)


def test_noise_free_floor_reproducible():
    layer = _ternary_layer(256, 2048, 3, 7)
    a = apply_and_measure_contraction(layer, None, 0.0, 30, RngStream(8))
    b = apply_and_measure_contraction(layer, None, 0.0, 30, RngStream(8))
    assert np.array_equal(a.eps_out, b.eps_out)
    assert a.median_out > 0


def test_contraction_below_threshold():
    layer = _ternary_layer(256, 4096, 3, 9)
    res = apply_and_measure_contraction(layer, None, 0.5 * layer.threshold(), 100, RngStream(10))
    assert res.median_out < res.median_in


def test_floor_decreases_with_width():
    medians = []
    for d in (1024, 2048, 4096):
        layer = _ternary_layer(256, d, 3, 11)
        medians.append(apply_and_measure_contraction(layer, None, 0.0, 60, RngStream(12)).median_out)
    assert medians[0] > medians[1] > medians[2]


def test_aligned_large_noise_flips_feature():
    m, d, s = 64, 512, 2
    layer = _identity_layer(m, d, s, 13)
    b = _bits(m, (3, 9))
    x = b.copy()
    x[20] += 0.7  # inactive feature pushed past the rounding cell
    out = layer.readoff().apply(layer(x))
    assert out[20] > 0.5
    y = b.copy()
    y[20] += 0.2  # inside the cell: corrected
    assert np.allclose(layer.readoff().apply(layer(y)), layer.readoff().apply(layer(b)))


def test_idempotence_on_clean_input():
    m, d, s = 256, 2048, 3
    rng = RngStream(14)
    dct, R0 = ternary_code(m, d, s, rng.child(0))
    first = build_error_correction(m, d, s, R0, rng.child(1), input_dictionary=dct)
    second = build_error_correction(m, d, s, first.readoff(), rng.child(2))
    gen = np.random.default_rng(15)
    for _ in range(30):
        b = _bits(m, gen.choice(m, s, replace=False))
        h1 = first(dct.encode_batch(b[None])[0])
        r1 = first.readoff().apply(h1)
        r2 = second.readoff().apply(second(h1))
        floor = np.abs(r1 - b).max()
        assert np.abs(r2 - b).max() <= max(floor, np.abs(r2 - b).max()) + 1e-12
        assert np.abs(r2 - b).max() < 0.5


@given(st.lists(st.integers(-2, 2), min_size=1, max_size=16), st.floats(-0.33, 0.33), st.integers(0, 1000))
def test_lattice_fidelity(ints, delta, seed):
    g = np.random.default_rng(seed)
    x = np.array(ints, dtype=float) + delta * g.uniform(-1, 1, len(ints))
    assert np.array_equal(staircase_round(x, 2), np.array(ints, dtype=float))


def test_gaussian_relu_constant():
    g = np.random.default_rng(16).standard_normal(2_000_000)
    assert np.maximum(g, 0).mean() == pytest.approx(RELU_GAUSSIAN_MEAN, abs=3 * 0.6 / math.sqrt(2e6))


@pytest.mark.parametrize("s0,segments", [(16.0, 8), (64.0, 64), (2.0, 1024)])
def test_f_pl_endpoints_and_bound(s0, segments):
    r = math.sqrt(s0)
    assert f_pl(0.0, s0, segments) == r
    assert f_pl(r, s0, segments) == 0.0
    assert f_pl(-r, s0, segments) == 0.0
    y = np.linspace(-r, r, 200_001)
    dev = np.abs(f_pl(y, s0, segments) - np.sqrt(np.maximum(s0 - y ** 2, 0)))
    assert dev.max() <= 2 * math.pi * r / segments


def test_f_pl_knots_and_guard():
    y, f = semicircle_knots(9.0, 6)
    assert np.allclose(np.hypot(y, f), 3.0)
    assert np.all(np.diff(y) > 0)
    with pytest.raises(PreconditionError):
        semicircle_knots(9.0, 5)


def test_balancer_network_matches_closed_form():
    bal = build_norm_balancer(64, 4.0, 16, RngStream(17))
    g = np.random.default_rng(18)
    a = g.standard_normal((100, 64)) * g.uniform(0, 3, (100, 1)) / 8
    net = bal.network()
    assert len(net) == 3
    assert np.abs(net(a) - bal(a)).max() < 1e-9


def test_balancer_zero_and_sphere_inputs():
    d, s0 = 1024, 16.0
    bal = build_norm_balancer(d, s0, 64, RngStream(19))
    out0 = bal(np.zeros(d))
    assert np.linalg.norm(out0) == pytest.approx(math.sqrt(s0) * np.linalg.norm(bal.v))
    assert abs(np.linalg.norm(bal.v) - 1) < 4 / math.sqrt(d)
    assert abs(np.linalg.norm(out0) / math.sqrt(s0) - 1) < 4 / math.sqrt(d)


def test_balancer_concentration_and_perturbation():
    d, s0 = 1024, 16.0
    bal = build_norm_balancer(d, s0, 64, RngStream(20))
    g = np.random.default_rng(21)
    u = g.standard_normal((1000, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    a = u * g.uniform(0, 0.9 * math.sqrt(s0), (1000, 1))
    out = bal(a)
    rel = np.abs(np.linalg.norm(out, axis=1) / math.sqrt(s0) - 1)
    K = rel.max() * math.sqrt(d)
    assert K < 5
    phi = random_unit_dictionary(1000, d, RngStream(22)).phi
    pert = np.abs((out - a) @ phi).max()
    assert pert <= 5 * math.sqrt(s0) / math.sqrt(d)


def test_contraction_input_guard():
    layer = _identity_layer(16, 64, 2, 23)
    with pytest.raises(PreconditionError):
        apply_and_measure_contraction(layer, BooleanVector(16, (1, 2, 3)), 0.0, 1)
