"""Universal-AND layers: one ReLU layer whose neurons each watch a random
subset of features, read off by averaging over the neurons shared by a pair
(or n-tuple) of features.

Also here: read-offs for randomly initialized Gaussian layers, the signed
expectation that makes those read-offs work, and the targeted (graph) AND
together with the graph partition it relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .features import FeatureDictionary, ReadoffMatrix
from .network import MlpNetwork, Layer, RELU
from .tensor import PreconditionError, RngStream, clamp_prob, sample_bernoulli_matrix


class EmptyIndexSet(LookupError):
    """No neuron is connected to every feature of the requested tuple."""

    def __init__(self, features):
        self.features = tuple(features)
        super().__init__(f"empty index set for features {self.features}")


class CalibrationError(RuntimeError):
    pass


def connection_probability(m: int, d: int, n: int = 2, C: float = 1.0) -> float:
    """C * ln(m)^2 / d^(1/n), clamped to [0, 1]."""
    return clamp_prob(C * math.log(m) ** 2 / d ** (1.0 / n))


@dataclass
class UandNetwork:
    """A (possibly superposed) U-AND layer: ReLU(win @ R @ x + bias).

    ``input_readoff`` is None for basis-aligned inputs.  Index sets are
    computed from ``win`` on demand and cached.
    """

    win: np.ndarray
    bias: np.ndarray
    fanin: int
    p: float
    params: dict
    input_readoff: ReadoffMatrix | None = None
    _mask: np.ndarray = field(init=False, repr=False)
    _gamma: dict = field(init=False, repr=False, default_factory=dict)
    empty_index_sets: list = field(init=False, default_factory=list)

    def __post_init__(self):
        self._mask = self.win.astype(bool)

    @property
    def d(self) -> int:
        return self.win.shape[0]

    @property
    def m(self) -> int:
        return self.win.shape[1]

    def gamma(self, *features: int) -> np.ndarray:
        key = tuple(sorted(features))
        g = self._gamma.get(key)
        if g is None:
            g = np.flatnonzero(self._mask[:, list(key)].all(axis=1))
            self._gamma[key] = g
        return g

    def gamma_map(self) -> dict:
        return dict(self._gamma)

    def readoff_vector(self, *features: int) -> np.ndarray:
        g = self.gamma(*features)
        if g.size == 0:
            key = tuple(sorted(features))
            if key not in self.empty_index_sets:
                self.empty_index_sets.append(key)
            raise EmptyIndexSet(key)
        r = np.zeros(self.d)
        r[g] = 1.0 / g.size
        return r

    def readoff_matrix(self, tuples) -> tuple[ReadoffMatrix, list]:
        """Rows for every tuple; empty tuples get a zero row and are listed."""
        rows, empty = [], []
        for t in tuples:
            try:
                rows.append(self.readoff_vector(*t))
            except EmptyIndexSet as exc:
                rows.append(np.zeros(self.d))
                empty.append(exc.features)
        return ReadoffMatrix(np.array(rows).reshape(len(rows), self.d)), empty

    def layer(self) -> Layer:
        factors = [self.win] if self.input_readoff is None else [self.win, self.input_readoff.matrix]
        bias = self.bias
        if self.input_readoff is not None and self.input_readoff.bias is not None:
            bias = bias + self.win @ self.input_readoff.bias
        return Layer(factors, bias, RELU, 1.0, f"uand{self.fanin}")

    def network(self) -> MlpNetwork:
        return MlpNetwork([self.layer()])

    def hidden(self, x: np.ndarray) -> np.ndarray:
        return self.layer()(x)

    def tuple_readoffs(self, features, actives: np.ndarray) -> np.ndarray:
        """Read-off of one tuple on many basis-aligned sparse inputs.

        ``actives`` is (n_inputs, k) of active feature indices.  Only the
        neurons in the tuple's index set are evaluated.
        """
        if self.input_readoff is not None:
            raise PreconditionError("sparse evaluation is for basis-aligned inputs only")
        g = self.gamma(*features)
        if g.size == 0:
            raise EmptyIndexSet(features)
        sub = self._mask[g]
        actives = np.asarray(actives, dtype=np.intp)
        pre = sub[:, actives].sum(axis=2, dtype=np.float64) + self.bias[g][:, None]
        return np.maximum(pre, 0.0).mean(axis=0)

    def manifest(self) -> dict:
        out = dict(self.params)
        out["empty_index_sets"] = [list(t) for t in self.empty_index_sets]
        return out


def _build(kind, m, d, s, n, C, rng) -> UandNetwork:
    if m < 2 or d < 1 or n < 1:
        raise PreconditionError("need m >= 2, d >= 1 and fan-in >= 1")
    p = connection_probability(m, d, n, C)
    win = sample_bernoulli_matrix(d, m, p, rng)
    bias = np.full(d, -(n - 1.0))
    params = {"kind": kind, "m": m, "d": d, "s": s, "n": n, "C": C, "p": p,
              "seed": rng.seed, "stream": rng.stream_id}
    return UandNetwork(win, bias, n, p, params)


def build_uand_basis(m: int, d: int, s: int, C: float = 1.0, rng: RngStream | None = None):
    """Pairwise U-AND on basis-aligned inputs.

    Returns ``(net, readoff)`` where ``readoff(k1, k2)`` gives the averaging
    vector over the realized index set (raises :class:`EmptyIndexSet`).
    """
    if s < 2:
        raise PreconditionError("pairwise AND needs sparsity s >= 2")
    net = _build("basis", m, d, s, 2, C, rng or RngStream(0))
    return net, net.readoff_vector


def build_uand_highfanin(m: int, d: int, s: int, n: int, C: float = 1.0, rng: RngStream | None = None):
    """AND of every n-tuple: bias -(n-1), connection probability C ln^2 m / d^(1/n)."""
    net = _build("highfanin", m, d, s, n, C, rng or RngStream(0))
    return net, net.readoff_vector


def readoff_pair(net: UandNetwork, activation: np.ndarray, k1: int, k2: int) -> float:
    g = net.gamma(k1, k2)
    if g.size == 0:
        raise EmptyIndexSet((k1, k2))
    return float(np.asarray(activation)[g].mean())


def build_uand_superposed(dictionary: FeatureDictionary, d: int, s: int, C: float = 1.0,
                          rng: RngStream | None = None):
    """U-AND consuming superposed activations ``Phi b``: weights ``win @ Phi^T``."""
    net = _build("superposed", dictionary.m, d, s, 2, C, rng or RngStream(0))
    net.input_readoff = dictionary.readoff()
    net.params["d_in"] = dictionary.d
    net.params["dictionary"] = dictionary.kind
    return net, net.readoff_vector


# -- randomly initialized layers ------------------------------------------

@dataclass(frozen=True)
class EtaCalibration:
    eta: float
    n_samples: int
    gap: float
    radius: float  # 1-sigma uncertainty of the calibrated mean read-off, read-off units


def sign_agreement(w: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """+1 where columns k1, k2 have the same strict sign, -1 otherwise (zeros disagree)."""
    return np.where(w[:, k1] * w[:, k2] > 0, 1.0, -1.0)


def random_mlp_readoff(w: np.ndarray, k1: int, k2: int, eta: EtaCalibration | float) -> np.ndarray:
    e = eta.eta if isinstance(eta, EtaCalibration) else float(eta)
    return e * sign_agreement(w, k1, k2)


def _random_inputs(m, s, n, gen):
    """n rows: a random pair followed by s-2 further distinct features."""
    keys = gen.random((n, m))
    return np.argsort(keys, axis=1)[:, :s]


def calibrate_eta(w: np.ndarray, s: int, r_norm: float | None = None, n_samples: int = 10_000,
                  rng: RngStream | None = None, chunk: int = 256) -> EtaCalibration:
    """Scale making the mean (1,1) read-off of a Gaussian ReLU layer equal 1.

    Each sample draws a random pair and ``s - 2`` other active features (or,
    when ``r_norm`` is given, a Gaussian rest-of-input term of norm
    ``r_norm`` in weight units) and averages the signed post-ReLU
    contribution over all neurons; eta = 1 / (d * mean).
    """
    if n_samples < 10_000:
        raise PreconditionError("calibration needs at least 10^4 samples")
    rng = rng or RngStream(0)
    gen = rng.generator
    d, m = w.shape
    scale = float(w.std())
    means = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        stop = min(n_samples, start + chunk)
        idx = _random_inputs(m, s, stop - start, gen)
        x = w[:, idx[:, 0]]
        y = w[:, idx[:, 1]]
        if r_norm is None:
            z = w[:, idx[:, 2:].ravel()].reshape(d, stop - start, -1).sum(axis=2) if s > 2 else 0.0
        else:
            z = gen.normal(0.0, scale * r_norm, size=(d, stop - start))
        sgn = np.where(x * y > 0, 1.0, -1.0)
        means[start:stop] = (sgn * np.maximum(x + y + z, 0.0)).mean(axis=0)
    gap = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(n_samples))
    if not gap > 3.0 * se:
        raise CalibrationError(f"contribution gap {gap:.3g} not separated from zero (se {se:.3g})")
    return EtaCalibration(eta=1.0 / (d * gap), n_samples=n_samples, gap=gap, radius=se / gap)


@dataclass(frozen=True)
class Estimate:
    value: float
    radius: float  # one standard error
    n: int

    @property
    def sigmas(self) -> float:
        return self.value / self.radius if self.radius > 0 else math.inf


def _e0_terms(x, y, z, bk, bl):
    return np.sign(x) * np.sign(y) * np.maximum(bk * x + bl * y + z, 0.0)


def estimate_e0(r_prime: float, n_samples: int = 200_000, rng: RngStream | None = None,
                bk: int = 1, bl: int = 1, method: str = "antithetic", chunk: int = 1 << 18) -> Estimate:
    """Monte Carlo estimate of E[sign(x) sign(y) ReLU(bk x + bl y + z)].

    x, y ~ N(0, 1) and z ~ N(0, r_prime^2).  ``method="antithetic"`` averages
    each draw over the four sign reflections of (x, y); with bk = bl = 1 this
    is the five-region integrand and has far lower variance than ``"plain"``.
    """
    if not r_prime > 0:
        raise PreconditionError("r_prime must be positive")
    if method not in ("plain", "antithetic"):
        raise PreconditionError(f"unknown method {method!r}")
    gen = (rng or RngStream(0)).generator
    total = total_sq = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        x, y = gen.standard_normal(n), gen.standard_normal(n)
        z = gen.normal(0.0, r_prime, n)
        if method == "plain":
            v = _e0_terms(x, y, z, bk, bl)
        else:
            v = 0.25 * (_e0_terms(x, y, z, bk, bl) + _e0_terms(-x, y, z, bk, bl)
                        + _e0_terms(x, -y, z, bk, bl) + _e0_terms(-x, -y, z, bk, bl))
        total += v.sum()
        total_sq += (v * v).sum()
        done += n
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return Estimate(float(mean), math.sqrt(var / done), done)


E0_REGIONS = ("A--", "A-", "A0", "A+", "A++")


def e0_regions(r_prime: float, n_samples: int = 200_000, rng: RngStream | None = None) -> dict:
    """Split E0 over the five z-regions of the folded integrand.

    With 0 <= a <= b (folded |x|, |y|) the regions are z below -a-b, then up
    to a-b, b-a, a+b, and above a+b.  E0 = sum of the returned values.
    """
    gen = (rng or RngStream(0)).generator
    ab = np.sort(np.abs(gen.standard_normal((n_samples, 2))), axis=1)
    a, b = ab[:, 0], ab[:, 1]
    z = gen.normal(0.0, r_prime, n_samples)
    h = (np.maximum(a + b + z, 0) - np.maximum(a - b + z, 0)
         - np.maximum(-a + b + z, 0) + np.maximum(-a - b + z, 0))
    edges = [-np.inf * np.ones_like(a), -a - b, a - b, b - a, a + b, np.inf * np.ones_like(a)]
    out = {}
    for name, lo, hi in zip(E0_REGIONS, edges[:-1], edges[1:]):
        v = 0.25 * h * ((z >= lo) & (z < hi))
        out[name] = Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples)), n_samples)
    return out


def folded_integrand_above(r_prime: float, n_samples: int, rng: RngStream | None = None) -> np.ndarray:
    """Unsimplified four-ReLU integrand on draws conditioned to z >= |x| + |y|."""
    gen = (rng or RngStream(0)).generator
    a, b = np.abs(gen.standard_normal(n_samples)), np.abs(gen.standard_normal(n_samples))
    # z | z >= a+b by inverse-cdf sampling of the upper tail
    lo = norm.cdf((a + b) / r_prime)
    u = lo + (1.0 - lo) * gen.random(n_samples)
    z = r_prime * norm.ppf(np.minimum(u, 1 - 1e-16))
    z = np.maximum(z, a + b)
    return (np.maximum(a + b + z, 0) - np.maximum(a - b + z, 0)
            - np.maximum(-a + b + z, 0) + np.maximum(-a - b + z, 0))


# -- graphs and targeted AND ------------------------------------------------

@dataclass
class FeatureGraph:
    m: int
    edges: frozenset = frozenset()

    def __post_init__(self):
        clean = set()
        for e in self.edges:
            k, l = sorted(int(v) for v in e)
            if k == l:
                raise PreconditionError("self-loops are not allowed")
            if not 0 <= k < l < self.m:
                raise PreconditionError(f"edge {e} out of range")
            clean.add((k, l))
        self.edges = frozenset(clean)

    @classmethod
    def complete(cls, vertices, m=None):
        vertices = list(vertices)
        return cls(m or (max(vertices) + 1), frozenset(itertools.combinations(sorted(vertices), 2)))

    def degrees(self) -> dict:
        deg: dict = {}
        for k, l in self.edges:
            deg[k] = deg.get(k, 0) + 1
            deg[l] = deg.get(l, 0) + 1
        return deg

    def __len__(self):
        return len(self.edges)


@dataclass
class GraphPiece:
    graph: FeatureGraph
    kind: str  # "self" or "bipartite"
    left: tuple = ()   # V0 for bipartite pieces (the smaller side)
    right: tuple = ()
    certificate: dict = field(default_factory=dict)


def _certify(piece_edges, left, right):
    e = len(piece_edges)
    deg: dict = {}
    for k, l in piece_edges:
        deg[k] = deg.get(k, 0) + 1
        deg[l] = deg.get(l, 0) + 1
    a, b = len(left), len(right)
    d0 = max(deg[v] for v in left)
    d1 = max(deg[v] for v in right)
    slack = max(d0 * a / e, d1 * b / e)
    return {"a": a, "b": b, "edges": e, "max_deg_left": d0, "max_deg_right": d1, "slack": slack}


def polylog_bound(n_edges: int) -> int:
    return max(1, math.ceil(math.log(max(n_edges, 2)) ** 2))


def balance_partition(g: FeatureGraph) -> list[GraphPiece]:
    """Split a graph into edge-disjoint self-balanced and bipartite balanced pieces.

    Each round peels the edges between the high-degree vertices (degree above
    twice the average, or the upper half by degree when no vertex exceeds
    that) and the rest into one bipartite piece; what remains has its
    largest degrees roughly halved.  Stops when the remainder has maximum
    degree at most ceil(ln^2 |E|), which becomes a self-balanced piece.
    Bipartite certificates record (a, b) and the slack factor by which the
    largest degree on each side exceeds ``edges / side size``.
    """
    if not g.edges:
        return []
    bound = polylog_bound(len(g.edges))
    pieces = []
    rest = set(g.edges)
    while rest:
        deg: dict = {}
        for k, l in rest:
            deg[k] = deg.get(k, 0) + 1
            deg[l] = deg.get(l, 0) + 1
        if max(deg.values()) <= bound:
            pieces.append(GraphPiece(FeatureGraph(g.m, frozenset(rest)), "self",
                                     certificate={"max_degree": max(deg.values()), "bound": bound}))
            break
        tau = 2.0 * len(rest) / len(deg)
        high = {v for v, dv in deg.items() if dv > tau}
        if not high:
            order = sorted(deg, key=lambda v: (-deg[v], v))
            high = set(order[::2])
        cross = {e for e in rest if (e[0] in high) != (e[1] in high)}
        rest -= cross
        left = tuple(sorted({v for e in cross for v in e if v in high}))
        right = tuple(sorted({v for e in cross for v in e if v not in high}))
        if len(left) > len(right):
            left, right = right, left
        pieces.append(GraphPiece(FeatureGraph(g.m, frozenset(cross)), "bipartite", left, right,
                                 _certify(cross, left, right)))
    return pieces


@dataclass
class TargetedUand:
    """Block-diagonal over partition pieces; each block is ReLU(Phi_in x - 1) scaled by 4/A."""

    phi_in: np.ndarray          # (total width, m) signed indicator
    out_sets: dict              # edge -> neuron indices where both signs are +1
    pieces: list
    A: int
    params: dict
    input_readoff: ReadoffMatrix | None = None
    empty_index_sets: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.phi_in.shape[0]

    def layer(self) -> Layer:
        factors = [self.phi_in] if self.input_readoff is None else [self.phi_in, self.input_readoff.matrix]
        bias = -np.ones(self.d)
        if self.input_readoff is not None and self.input_readoff.bias is not None:
            bias = bias + self.phi_in @ self.input_readoff.bias
        return Layer(factors, bias, RELU, 4.0 / self.A, "targeted-and")

    def network(self) -> MlpNetwork:
        return MlpNetwork([self.layer()])

    def readoff_vector(self, k: int, l: int) -> np.ndarray:
        key = tuple(sorted((k, l)))
        if key not in self.out_sets:
            raise KeyError(f"edge {key} is not part of the targeted graph")
        idx = self.out_sets[key]
        if idx.size == 0:
            raise EmptyIndexSet(key)
        r = np.zeros(self.d)
        r[idx] = self.A / (4.0 * idx.size)
        return r

    def readoff_matrix(self, edges) -> tuple[ReadoffMatrix, list]:
        rows, empty = [], []
        for e in edges:
            try:
                rows.append(self.readoff_vector(*e))
            except EmptyIndexSet as exc:
                rows.append(np.zeros(self.d))
                empty.append(exc.features)
        return ReadoffMatrix(np.array(rows).reshape(len(rows), self.d)), empty


def build_targeted_uand(g: FeatureGraph, d: int, s: int, rng: RngStream | None = None,
                        input_readoff: ReadoffMatrix | None = None, check_edges: bool = True):
    """AND of the pairs in ``g`` only, with ``d`` neurons per partition piece.

    Returns ``(net, readoff)`` with ``readoff(k, l)`` defined for edges of g.
    """
    rng = rng or RngStream(0)
    gen = rng.generator
    m = g.m
    if check_edges and len(g) > m * math.ceil(math.log(max(m, 2)) ** 2):
        raise PreconditionError("targeted AND expects O~(m) edges")
    A = max(1, round(math.sqrt(d / s)))
    pieces = balance_partition(g)
    blocks, out_sets = [], {}
    offset = 0
    for piece in pieces:
        sigma = np.where(gen.random((d, m)) < 0.5, 1.0, -1.0)
        member = np.zeros((d, m), dtype=bool)
        sub_sets = {}
        if piece.kind == "self":
            for e in sorted(piece.graph.edges):
                sub_sets[e] = gen.choice(d, size=min(A, d), replace=False)
                member[sub_sets[e], e[0]] = True
                member[sub_sets[e], e[1]] = True
        else:
            owner = gen.integers(0, len(piece.left), size=d)
            size = max(1, round(math.sqrt(d) / s))
            pos = {v: i for i, v in enumerate(piece.left)}
            for v in piece.left:
                member[owner == pos[v], v] = True
            for e in sorted(piece.graph.edges):
                k, l = (e[0], e[1]) if e[0] in pos else (e[1], e[0])
                group = np.flatnonzero(owner == pos[k])
                pick = gen.choice(group, size=min(size, group.size), replace=False) if group.size else group
                sub_sets[e] = pick
                member[pick, l] = True
        phi = np.where(member, sigma, 0.0)
        for e, idx in sub_sets.items():
            idx = np.sort(idx)
            keep = idx[(sigma[idx, e[0]] > 0) & (sigma[idx, e[1]] > 0)]
            out_sets[e] = keep + offset
        blocks.append(phi)
        offset += d
    phi_in = np.vstack(blocks) if blocks else np.zeros((0, m))
    params = {"kind": "targeted", "m": m, "d": d, "s": s, "A": A, "pieces": len(pieces),
              "seed": rng.seed, "stream": rng.stream_id}
    net = TargetedUand(phi_in, out_sets, pieces, A, params, input_readoff)
    net.empty_index_sets = sorted(e for e, idx in out_sets.items() if idx.size == 0)
    return net, net.readoff_vector
