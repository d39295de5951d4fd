import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from superpose.network import RELU, Layer, MlpNetwork, staircase
from superpose.tensor import (PreconditionError, RngStream, clamp_prob, matrix_from_csv, matrix_to_csv,
                              read_sbmat, relu, sample_bernoulli_matrix, sample_gaussian_matrix,
                              sample_ternary_matrix, staircase_relu_terms, staircase_round, write_sbmat)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_relu_examples():
    assert relu(np.array([-1.0]))[0] == 0.0
    assert relu(np.array([0.5]))[0] == 0.5
    assert relu(np.array([1.0 + 1.0 - 1.0]))[0] == 1.0


@given(arrays(np.float64, 20, elements=finite))
def test_relu_bounds(x):
    y = relu(x)
    assert (y >= 0).all()
    assert (y >= x - np.abs(x)).all()


def test_staircase_examples():
    assert staircase_round(1.0, 2) == 1.0
    assert staircase_round(0.2, 2) == 0.0
    assert staircase_round(0.5, 2) == pytest.approx(0.5, abs=1e-15)
    # 3(relu(0.5 - 1/3) - relu(0.5 - 2/3)) by hand
    assert staircase_round(0.5, 2) == pytest.approx(3 * (0.5 - 1 / 3), abs=1e-15)
    assert staircase_round(2.9, 2) == 2.0


def test_staircase_lattice_grid():
    for a in (1, 2, 3):
        for n in range(-a, a + 1):
            deltas = np.linspace(-0.33, 0.33, 661)
            assert np.array_equal(staircase_round(n + deltas, a), np.full(deltas.size, float(n)))


@given(st.floats(-5, 5), st.integers(1, 3))
def test_staircase_odd_and_bounded(x, a):
    assert staircase_round(-x, a) == pytest.approx(-staircase_round(x, a), abs=1e-12)
    assert abs(staircase_round(x, a)) <= a


def test_staircase_relu_form_matches_closed_form():
    for a in (1, 2, 3):
        coef, shift, sign = staircase_relu_terms(a)
        assert coef.size == 4 * a
        x = np.linspace(-a - 2, a + 2, 20001)
        mlp = (coef * relu(np.outer(x, sign) + shift)).sum(axis=1)
        assert np.abs(mlp - staircase_round(x, a)).max() < 1e-12


def test_staircase_network_to_relu(rng):
    w = rng.generator.normal(size=(5, 4))
    net = MlpNetwork([Layer([w], np.zeros(5), staircase(2), 0.7, "ec")])
    expanded = net.to_relu()
    assert all(l.activation.name in ("relu", "identity") for l in expanded.layers)
    x = rng.generator.normal(size=(50, 4)) * 2
    assert np.allclose(net(x), expanded(x), atol=1e-12)


def test_bernoulli_extremes(rng):
    assert not sample_bernoulli_matrix(30, 40, 0.0, rng).any()
    assert sample_bernoulli_matrix(30, 40, 1.0, rng).all()


def test_bernoulli_density(rng):
    x = sample_bernoulli_matrix(1000, 1000, 0.5, rng)
    # 99.9% binomial interval: 3.29 * sqrt(0.25 / 1e6) = 0.0016
    assert abs(x.mean() - 0.5) < 0.002
    assert set(np.unique(x)) <= {0.0, 1.0}


def test_ternary(rng):
    assert not sample_ternary_matrix(20, 20, 0.0, rng).any()
    x = sample_ternary_matrix(1000, 1000, 1.0, rng)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(x.mean()) < 0.004
    d = s = 4
    p = 2 / np.sqrt(d * s)
    assert p == 0.5
    y = sample_ternary_matrix(1000, 1000, p, rng)
    assert abs((y != 0).mean() - 0.5) < 0.01


def test_gaussian(rng):
    x = sample_gaussian_matrix(1000, 1000, 1.0, rng)
    assert abs(x.var() - 1.0) < 0.01
    with pytest.raises(PreconditionError):
        sample_gaussian_matrix(2, 2, 0.0, rng)
    d = 4096
    row = sample_gaussian_matrix(1, d, 1.0 / d, rng)[0]
    assert abs(np.linalg.norm(row) - 1.0) < 0.1


def test_probability_guard(rng):
    with pytest.raises(PreconditionError):
        sample_bernoulli_matrix(2, 2, 1.5, rng)
    assert clamp_prob(3.0) == 1.0 and clamp_prob(-1) == 0.0


def test_rng_reproducible_and_independent():
    a = RngStream(5, 1).generator.random(8)
    b = RngStream(5, 1).generator.random(8)
    c = RngStream(5, 2).generator.random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    s = RngStream(5)
    assert s.child(3) == s.child(3)
    assert s.child(3).stream_id != s.child(4).stream_id
    assert np.array_equal(s.child(3).generator.random(4), RngStream(5).child(3).generator.random(4))


def test_rng_child_thread_independent():
    from concurrent.futures import ThreadPoolExecutor
    s = RngStream(11)

    def draw(i):
        return s.child(i).generator.random(100)

    serial = [draw(i) for i in range(8)]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(draw, range(8)))
    assert all(np.array_equal(x, y) for x, y in zip(serial, parallel))


@given(arrays(np.float64, st.tuples(st.integers(0, 6), st.integers(0, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_sbmat_round_trip(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("sb") / "m.sbmat"
    write_sbmat(path, m)
    back = read_sbmat(path)
    assert back.shape == m.shape
    assert back.tobytes() == m.astype("<f8").tobytes()


def test_sbmat_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        write_sbmat(tmp_path / "bad.sbmat", np.array([[1.0, np.inf]]))


def test_sbmat_header(tmp_path):
    write_sbmat(tmp_path / "x.sbmat", np.arange(6.0).reshape(2, 3))
    raw = (tmp_path / "x.sbmat").read_bytes()
    assert raw.startswith(b"SBMAT v1 2 3\n")
    assert len(raw) == len(b"SBMAT v1 2 3\n") + 6 * 8


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_lossless(m):
    assert np.array_equal(matrix_from_csv(matrix_to_csv(m)), m)


def test_layer_chain_guard():
    with pytest.raises(PreconditionError):
        Layer([np.ones((2, 3)), np.ones((2, 2))], np.zeros(2), RELU)


def test_network_save_load(tmp_path, rng):
    g = rng.generator
    net = MlpNetwork([Layer([g.normal(size=(4, 3)), g.normal(size=(3, 5))], g.normal(size=4), RELU, 2.0, "a"),
                      Layer([g.normal(size=(2, 4))], np.zeros(2), staircase(2), 0.5, "b")])
    net.save(tmp_path / "n", {"kind": "test"})
    back, doc = MlpNetwork.load(tmp_path / "n")
    x = g.normal(size=(7, 5))
    assert np.array_equal(net(x), back(x))
    assert doc["kind"] == "test"
