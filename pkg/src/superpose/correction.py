"""Error-correction re-encoding layer and the norm balancer.

The correction layer reads every feature from its input, writes a fresh
ternary code for the active ones and snaps each neuron to the nearest
integer in [-2, 2], which removes small read-off noise.  The balancer maps
inputs of varying norm onto a sphere while barely moving feature read-offs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import BooleanVector, FeatureDictionary, ReadoffMatrix
from .network import IDENTITY, RELU, Layer, MlpNetwork, staircase
from .tensor import PreconditionError, RngStream, sample_gaussian_matrix, sample_ternary_matrix

# mean of ReLU(x) for x ~ N(0, 1)
RELU_GAUSSIAN_MEAN = 1.0 / math.sqrt(2.0 * math.pi)


def contraction_threshold(m: int, d: int, s: int, K: float = 1.0) -> float:
    """Largest input interference the layer is meant to absorb: K d^(1/4) / (m^(1/2) s^(1/4))."""
    return K * d ** 0.25 / (math.sqrt(m) * s ** 0.25)


@dataclass
class ErrorCorrectionLayer:
    """``x -> A * round(Phi_u (R_in x + bias_in))`` with A = (s/d)^(1/4).

    The output code of feature k is column k of ``phi1_unnormalized`` times
    A, so each code has unit norm up to the binomial spread of its support.
    Read-offs average over the realized support with the stored signs.
    """

    phi1_unnormalized: np.ndarray
    r_in: ReadoffMatrix
    params: dict
    a: int = 2
    input_dictionary: FeatureDictionary | None = None
    empty_supports: list = field(default_factory=list)

    def __post_init__(self):
        sizes = np.count_nonzero(self.phi1_unnormalized, axis=0)
        self.support_sizes = sizes
        self.empty_supports = np.flatnonzero(sizes == 0).tolist()

    @property
    def d(self) -> int:
        return self.phi1_unnormalized.shape[0]

    @property
    def m(self) -> int:
        return self.phi1_unnormalized.shape[1]

    @property
    def normalization(self) -> float:
        return (self.params["s"] / self.d) ** 0.25

    def threshold(self, K: float | None = None) -> float:
        K = self.params.get("K", 1.0) if K is None else K
        return contraction_threshold(self.m, self.d, self.params["s"], K)

    def dictionary(self) -> FeatureDictionary:
        return FeatureDictionary(self.phi1_unnormalized * self.normalization, kind="ternary",
                                 seed=self.params.get("seed"))

    def readoff(self) -> ReadoffMatrix:
        sizes = np.where(self.support_sizes > 0, self.support_sizes, 1)
        return ReadoffMatrix(self.phi1_unnormalized.T / (self.normalization * sizes[:, None]))

    def layer(self) -> Layer:
        factors = [self.phi1_unnormalized, self.r_in.matrix]
        bias = np.zeros(self.d) if self.r_in.bias is None else self.phi1_unnormalized @ self.r_in.bias
        return Layer(factors, bias, staircase(self.a), self.normalization, "error-correction")

    def preactivation(self, x) -> np.ndarray:
        return self.layer().preactivation(x)

    def __call__(self, x):
        return self.layer()(x)

    def ground_truth(self, bits: np.ndarray) -> np.ndarray:
        """Integer neuron values Phi_u b for (batched) boolean vectors."""
        return np.asarray(bits, dtype=np.float64) @ self.phi1_unnormalized.T

    def collision_stats(self, bits: np.ndarray) -> dict:
        """Neurons shared by >= 3 active features, and neurons where rounding changes the code."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.float64))
        mask = (self.phi1_unnormalized != 0).astype(np.float64)
        overlap = bits @ mask.T
        truth = self.ground_truth(bits)
        wrong = np.abs(truth) > self.a
        return {"triple_overlap_rate": float((overlap >= 3).mean()),
                "rounding_collisions": int(wrong.sum()),
                "neurons": int(overlap.size)}

    def manifest(self) -> dict:
        out = dict(self.params)
        out.update({"normalization": self.normalization, "a": self.a,
                    "threshold": self.threshold(), "empty_supports": self.empty_supports})
        return out


def build_error_correction(m: int, d: int, s: int, r_in: ReadoffMatrix, rng: RngStream | None = None,
                           K: float = 1.0, input_dictionary: FeatureDictionary | None = None,
                           p: float | None = None) -> ErrorCorrectionLayer:
    if r_in.n_features != m:
        raise PreconditionError(f"input read-off has {r_in.n_features} rows, expected {m}")
    rng = rng or RngStream(0)
    p = 1.0 / math.sqrt(d * s) if p is None else p
    phi = sample_ternary_matrix(d, m, min(1.0, p), rng)
    params = {"kind": "error-correction", "m": m, "d": d, "s": s, "p": p, "K": K,
              "seed": rng.seed, "stream": rng.stream_id}
    return ErrorCorrectionLayer(phi, r_in, params, 2, input_dictionary)


def _encode_input(layer: ErrorCorrectionLayer, bits: np.ndarray) -> np.ndarray:
    if layer.input_dictionary is not None:
        return layer.input_dictionary.encode_batch(bits)
    # least-norm activation whose read-off is exactly b
    target = bits if layer.r_in.bias is None else bits - layer.r_in.bias
    sol, *_ = np.linalg.lstsq(layer.r_in.matrix, target.T, rcond=None)
    return sol.T


@dataclass
class ContractionResult:
    eps_in: np.ndarray
    eps_out: np.ndarray
    rounding_collisions: int

    @property
    def median_in(self) -> float:
        return float(np.median(self.eps_in))

    @property
    def median_out(self) -> float:
        return float(np.median(self.eps_out))

    def __iter__(self):
        yield self.eps_in
        yield self.eps_out


def apply_and_measure_contraction(layer: ErrorCorrectionLayer, b: BooleanVector | None, noise_eps: float,
                                  trials: int, rng: RngStream | None = None, s: int | None = None) -> ContractionResult:
    """Inject read-off noise of size ``noise_eps`` into the encoded input and measure both errors.

    The perturbation mixes a random direction with the worst direction for
    one random neuron (its composite weight row) and is scaled so that it
    moves no input read-off by more than ``noise_eps``.  Measured eps_in is
    the max input read-off error (encoding interference included); eps_out
    the max output read-off error.  With ``b=None`` each trial draws a fresh
    random ``s``-sparse vector.
    """
    rng = rng or RngStream(0)
    s = s or layer.params["s"]
    if b is not None and b.sparsity > s:
        raise PreconditionError("input sparsity exceeds s")
    R_out = layer.readoff()
    w = layer.layer().dense_weight()
    eps_in = np.empty(trials)
    eps_out = np.empty(trials)
    coll = 0
    for t in range(trials):
        gen = rng.child(t).generator
        if b is None:
            bits = np.zeros(layer.m)
            bits[gen.choice(layer.m, size=s, replace=False)] = 1.0
        else:
            bits = b.dense()
        x0 = _encode_input(layer, bits[None, :])[0]
        if noise_eps > 0:
            g = gen.standard_normal(x0.size)
            i = gen.integers(layer.d)
            u = w[i] * (1.0 if gen.random() < 0.5 else -1.0)
            parts = [v / max(np.abs(layer.r_in.matrix @ v).max(), 1e-300) for v in (g, u)]
            delta = 0.5 * (parts[0] + parts[1])
            delta *= noise_eps / max(np.abs(layer.r_in.matrix @ delta).max(), 1e-300)
        else:
            delta = 0.0
        x = x0 + delta
        eps_in[t] = np.abs(layer.r_in.apply(x) - bits).max()
        out = layer(x)
        eps_out[t] = np.abs(R_out.apply(out) - bits).max()
        coll += layer.collision_stats(bits)["rounding_collisions"]
    return ContractionResult(eps_in, eps_out, coll)


# -- norm balancer ----------------------------------------------------------

def semicircle_knots(s0: float, segments: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-arc knots of y -> sqrt(s0 - y^2) on [-sqrt(s0), sqrt(s0)], increasing in y."""
    if segments < 2 or segments % 2:
        raise PreconditionError("segments must be an even integer >= 2 (so y = 0 is a knot)")
    r = math.sqrt(s0)
    theta = np.pi * (np.arange(segments + 1) - segments // 2) / segments
    y = r * np.sin(theta)
    f = r * np.cos(theta)
    y[0], y[-1], y[segments // 2] = -r, r, 0.0
    f[0] = f[-1] = 0.0
    f[segments // 2] = r
    return y, f


def f_pl(y, s0: float, segments: int):
    """Piecewise-linear semicircle, first and last arcs extended linearly."""
    ky, kf = semicircle_knots(s0, segments)
    y = np.asarray(y, dtype=np.float64)
    out = np.interp(y, ky, kf)
    lo_slope = (kf[1] - kf[0]) / (ky[1] - ky[0])
    hi_slope = (kf[-1] - kf[-2]) / (ky[-1] - ky[-2])
    out = np.where(y < ky[0], kf[0] + lo_slope * (y - ky[0]), out)
    out = np.where(y > ky[-1], kf[-1] + hi_slope * (y - ky[-1]), out)
    return out if out.ndim else float(out)


def f_pl_relu_terms(s0: float, segments: int):
    """(const, slope0, shifts, weights) with f_pl(y) = const + slope0*relu(y) + sum w_j relu(y - shift_j) for y >= 0."""
    ky, kf = semicircle_knots(s0, segments)
    slopes = np.diff(kf) / np.diff(ky)
    const = kf[0] - slopes[0] * ky[0]
    return const, slopes[0], ky[1:-1].copy(), np.diff(slopes)


@dataclass
class NormBalancer:
    w: np.ndarray
    v: np.ndarray
    s0: float
    segments: int
    c: float = RELU_GAUSSIAN_MEAN
    params: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def norm_estimate(self, a) -> np.ndarray:
        """N(a) / c, an estimate of |a|."""
        a = np.asarray(a, dtype=np.float64)
        return np.maximum(a @ self.w.T, 0.0).sum(axis=-1) / self.c

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        f = f_pl(self.norm_estimate(a), self.s0, self.segments)
        return a + np.multiply.outer(f, self.v)

    def network(self) -> MlpNetwork:
        d = self.d
        eye = np.eye(d)
        l1 = Layer([np.vstack([self.w, eye, -eye])], np.zeros(3 * d), RELU, 1.0, "norm-sum")
        const, slope0, shifts, weights = f_pl_relu_terms(self.s0, self.segments)
        k = shifts.size
        sum_row = np.concatenate([np.full(d, 1.0 / self.c), np.zeros(2 * d)])
        w2 = np.zeros((k + 1 + 2 * d, 3 * d))
        w2[: k + 1] = sum_row
        w2[k + 1:, d:] = np.eye(2 * d)
        b2 = np.concatenate([-shifts, [0.0], np.zeros(2 * d)])
        l2 = Layer([w2], b2, RELU, 1.0, "semicircle")
        w3 = np.zeros((d, k + 1 + 2 * d))
        w3[:, :k] = np.outer(self.v, weights)
        w3[:, k] = self.v * slope0
        w3[:, k + 1:k + 1 + d] = np.eye(d)
        w3[:, k + 1 + d:] = -np.eye(d)
        l3 = Layer([w3], self.v * const, IDENTITY, 1.0, "balance")
        return MlpNetwork([l1, l2, l3])

    def manifest(self) -> dict:
        out = dict(self.params)
        out.update({"s0": self.s0, "segments": self.segments, "c": self.c})
        return out


def build_norm_balancer(d: int, s0: float, segments: int | None = None, rng: RngStream | None = None,
                        c: float = RELU_GAUSSIAN_MEAN) -> NormBalancer:
    rng = rng or RngStream(0)
    segments = d if segments is None else segments
    if s0 <= 0:
        raise PreconditionError("s0 must be positive")
    w = sample_gaussian_matrix(d, d, 1.0 / d ** 2, rng)
    v = sample_gaussian_matrix(1, d, 1.0 / d, rng)[0]
    params = {"kind": "norm-balancer", "d": d, "seed": rng.seed, "stream": rng.stream_id,
              "s0_bound": math.sqrt(d)}
    return NormBalancer(w, v, float(s0), int(segments), c, params)

