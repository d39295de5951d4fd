import warnings

import numpy as np
import pytest

from superpose.circuits import (BooleanCircuit, ContractionWarning, Gate, and_decomposition, compile_deep,
                                compile_one_layer, compose_and_or, eval_dense, generate_random_sparse_circuit,
                                generate_uand_circuit, layer_eps, parse_circuit)
from superpose.features import identity_dictionary
from superpose.harness.sampling import exhaustive_bits, random_supports, supports_to_bits
from superpose.network import MlpNetwork
from superpose.tensor import PreconditionError, RngStream, read_sbmat
from superpose.uand import build_uand_highfanin


def _sparse_bits(m, s, count, seed):
    return supports_to_bits(random_supports(m, s, count, np.random.default_rng(seed)), m).astype(float)


def _term_errors(cc, polys, blocks, bits):
    """Per-output max over inputs of sum_S |coef_S| * |read-off of S - AND_S|, from the hidden layer."""
    m = bits.shape[1]
    h = cc.network.trace(cc.encode(bits))[0]
    rx = h[:, :m] - h[:, m:2 * m]
    bound = np.zeros(len(polys))
    block_eps = 0.0
    for j, poly in enumerate(polys):
        total = np.zeros(len(bits))
        for subset, coef in poly.terms.items():
            idx = sorted(subset)
            truth = bits[:, idx].prod(axis=1)
            if len(idx) == 1:
                est = rx[:, idx[0]]
            else:
                net, off = blocks[len(idx)]
                est = h[:, off:off + net.d] @ net.readoff_vector(*idx)
            err = np.abs(est - truth)
            block_eps = max(block_eps, err.max())
            total += abs(coef) * err
        bound[j] = total.max() if poly.terms else 0.0
    return bound, block_eps


# -- one-layer ---------------------------------------------------------------

def _one_layer_blocks(c, m, d, s, C, seed):
    """Rebuild the AND blocks the compiler used (same child streams) with their column offsets."""
    polys = and_decomposition(c)
    degrees = sorted({len(t) for p in polys for t in p.terms if len(t) >= 2})
    rng = RngStream(seed)
    out, pos = {}, 2 * m
    for n in degrees:
        net, _ = build_uand_highfanin(m, d, s, n, C, rng.child(n))
        out[n] = (net, pos)
        pos += net.d
    return polys, out


@pytest.mark.parametrize("depth", [1, 2])
def test_one_layer_error_within_l1_bound(depth):
    m, d, s, C = 24, 4096, 3, 1.0
    c, _ = generate_random_sparse_circuit(m, depth, s, rng=RngStream(depth))
    cc = compile_one_layer(c, identity_dictionary(m), d, s, C, RngStream(11))
    polys, blocks = _one_layer_blocks(c, m, d, s, C, 11)
    bits = _sparse_bits(m, s, 400, 12)
    err = np.abs(cc.readout(bits) - eval_dense(c, bits)).max(axis=0)
    per_output, block_eps = _term_errors(cc, polys, blocks, bits)
    l1 = np.array(cc.report["l1"], dtype=float)
    assert np.all(err <= per_output + 1e-9)
    assert np.all(err <= l1 * block_eps + 1e-9)


def test_one_layer_constant_gate_is_exact():
    c = parse_circuit("circuit width=4 depth=1\nlayer 1:\n  w0 = CONST1()\n  w1 = CONST0()\n  w2 = NOT(w3)\n")
    cc = compile_one_layer(c, identity_dictionary(4), 64, 2, 1.0, RngStream(0))
    bits = exhaustive_bits(4, 2).astype(float)
    out = cc.readout(bits)
    assert np.array_equal(out[:, 0], np.ones(len(bits)))
    assert np.array_equal(out[:, 1], np.zeros(len(bits)))
    assert np.allclose(out, eval_dense(c, bits), atol=1e-12)


def test_one_layer_all_and_is_plain_uand():
    m, d, s = 8, 2048, 3
    c = generate_uand_circuit(m)
    width = c.width
    rng = RngStream(3)
    cc = compile_one_layer(c, identity_dictionary(width), d, s, 1.0, rng)
    net, _ = build_uand_highfanin(width, d, s, 2, 1.0, rng.child(2))
    bits = np.zeros((200, width))
    bits[:, :m] = _sparse_bits(m, s, 200, 4)
    h = np.maximum(bits @ net.win.T + net.bias, 0)
    pairs = [g.inputs for g in c.layers[0] if g.op == "AND"]
    direct = np.stack([h @ net.readoff_vector(*p) for p in pairs], axis=1)
    assert np.allclose(cc.readout(bits)[:, :len(pairs)], direct, atol=1e-12)


def test_one_layer_or_within_three_block_eps():
    m, d, s, C = 256, 4096, 3, 1.0
    c = BooleanCircuit(m, (tuple([Gate("OR", (17, 200))] + [Gate("CONST0")] * (m - 1)),))
    rng = RngStream(5)
    cc = compile_one_layer(c, identity_dictionary(m), d, s, C, rng)
    net, _ = build_uand_highfanin(m, d, s, 2, C, rng.child(2))
    gen = np.random.default_rng(6)
    sup = np.vstack([random_supports(m, s, 300, gen),
                     np.hstack([np.full((300, 1), 17), random_supports(m, s - 1, 300, gen, exclude=(17, 200))]),
                     np.hstack([np.full((300, 2), [17, 200]), random_supports(m, s - 2, 300, gen, exclude=(17, 200))])])
    bits = supports_to_bits(sup, m).astype(float)
    h = np.maximum(bits @ net.win.T + net.bias, 0)
    block_eps = np.abs(h @ net.readoff_vector(17, 200) - bits[:, 17] * bits[:, 200]).max()
    err = np.abs(cc.readout(bits)[:, 0] - np.maximum(bits[:, 17], bits[:, 200])).max()
    assert err <= 3 * block_eps + 1e-9
    assert cc.report["l1"][0] == 3


def test_one_layer_width_mismatch():
    with pytest.raises(PreconditionError):
        compile_one_layer(BooleanCircuit.identity(4, 1), identity_dictionary(5), 64, 2)


# -- deep --------------------------------------------------------------------

def test_deep_matches_one_layer_on_depth_one():
    c, _ = generate_random_sparse_circuit(12, 1, 3, rng=RngStream(5))
    bits = exhaustive_bits(12, 3).astype(float)
    truth = eval_dense(c, bits)
    deep = compile_deep(c, 2048, 3, rng=RngStream(6))
    one = compile_one_layer(c, identity_dictionary(12), 8192, 3, 1.0, RngStream(7))
    assert len(deep.network) == 2
    assert np.array_equal(deep.predict(bits), truth)
    assert np.array_equal(one.predict(bits), deep.predict(bits))


@pytest.mark.parametrize("L", [1, 2, 4])
def test_deep_layer_count(L):
    c, _ = generate_random_sparse_circuit(16, L, 2, rng=RngStream(L))
    cc = compile_deep(c, 256, 2, rng=RngStream(0), probe_inputs=0)
    assert len(cc.network) == 2 * L
    assert len(cc.readoffs) == L and len(cc.dictionaries) == L + 1
    assert all(R.n_features == 16 for R in cc.readoffs)


def test_deep_identity_circuit_exact():
    m, s = 64, 3
    cc = compile_deep(BooleanCircuit.identity(m, 3), 2048, s, rng=RngStream(8))
    bits = _sparse_bits(m, s, 500, 9)
    assert np.array_equal(cc.predict(bits), bits.astype(bool))
    per_layer = cc.layer_readouts(bits)
    assert all(np.array_equal(r > 0.5, bits.astype(bool)) for r in per_layer)


def test_deep_universal_block_on_small_circuit():
    c, _ = generate_random_sparse_circuit(12, 2, 3, rng=RngStream(13))
    cc = compile_deep(c, 2048, 3, rng=RngStream(14), and_block="universal", d_and=8192)
    bits = exhaustive_bits(12, 3).astype(float)
    assert (cc.predict(bits) == eval_dense(c, bits)).all(axis=1).mean() > 0.95


def test_deep_contraction_warning():
    c, _ = generate_random_sparse_circuit(64, 2, 3, rng=RngStream(9))
    with pytest.warns(ContractionWarning):
        cc = compile_deep(c, 128, 3, rng=RngStream(10))
    assert cc.report["precondition_violations"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ok = compile_deep(BooleanCircuit.identity(64, 2), 2048, 3, rng=RngStream(8))
    assert ok.report["precondition_violations"] == []
    assert all(e < t for e, t in zip(ok.report["probe_eps_in"], ok.report["thresholds"]))


def test_layer_eps_zero_for_constant_layers():
    c = BooleanCircuit(8, (tuple(Gate("CONST1") for _ in range(8)),))
    cc = compile_deep(c, 512, 2, rng=RngStream(0), probe_inputs=0)
    assert layer_eps(cc, c, _sparse_bits(8, 2, 20, 0)) == [0.0]


def test_deep_rejects_unknown_block():
    with pytest.raises(PreconditionError):
        compile_deep(BooleanCircuit.identity(4, 1), 64, 2, and_block="dense")


def test_save_round_trip(tmp_path):
    c, _ = generate_random_sparse_circuit(16, 2, 2, rng=RngStream(1))
    cc = compile_deep(c, 256, 2, rng=RngStream(2), probe_inputs=0)
    cc.save(tmp_path)
    net, manifest = MlpNetwork.load(tmp_path)
    assert manifest["mode"] == "deep" and manifest["provenance"]["circuit"] == c.digest()
    x = cc.encode(_sparse_bits(16, 2, 10, 3))
    assert np.array_equal(net(x), cc.network(x))
    assert np.array_equal(read_sbmat(tmp_path / "readoff1.sbmat"), cc.readoffs[1].matrix)
    assert np.array_equal(read_sbmat(tmp_path / "input_dictionary.sbmat"), cc.dictionaries[0].phi)


# -- composition ---------------------------------------------------------------

@pytest.mark.parametrize("f1,f2", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_compose_exact(f1, f2):
    net, R = compose_and_or([1.0, 0.0], [0.0, 1.0])
    out = R.apply(net(np.array([[f1, f2]], dtype=float)))[0]
    assert np.array_equal(out, [f1 & f2, f1 | f2])


def test_compose_corner_perturbations():
    eps = 0.1
    net, R = compose_and_or([1.0, 0.0], [0.0, 1.0], eps)
    worst = 0.0
    for f1 in (0, 1):
        for f2 in (0, 1):
            for d1 in (-eps, eps):
                for d2 in (-eps, eps):
                    out = R.apply(net(np.array([[f1 + d1, f2 + d2]])))[0]
                    worst = max(worst, np.abs(out - [f1 & f2, f1 | f2]).max())
    assert worst <= 2 * eps + 1e-12


def test_compose_guards():
    with pytest.raises(PreconditionError):
        compose_and_or([1.0], [1.0], 0.25)
    with pytest.raises(PreconditionError):
        compose_and_or([1.0, 0.0], [1.0], 0.0)
