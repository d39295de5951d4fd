"""Boolean circuits: model, text format, AND-polynomials, generators and compilers."""

from .compile import CompiledCircuit, ContractionWarning, compile_deep, compile_one_layer, compose_and_or, layer_eps
from .dsl import CircuitSyntaxError, format_circuit, parse_circuit
from .generate import DEFAULT_MIX, GenerationError, gate_frequencies, generate_random_sparse_circuit, generate_uand_circuit
from .model import ARITY, OPS, BooleanCircuit, CircuitError, Gate, check_sparsity, cone, eval_circuit, eval_dense
from .polynomial import MAX_FANIN, AndPolynomial, FanInExplosion, and_decomposition, gate_polynomial, moebius

__all__ = [
    "ARITY", "OPS", "BooleanCircuit", "CircuitError", "Gate", "check_sparsity", "cone", "eval_circuit",
    "eval_dense", "CircuitSyntaxError", "format_circuit", "parse_circuit", "MAX_FANIN", "AndPolynomial",
    "FanInExplosion", "and_decomposition", "gate_polynomial", "moebius", "DEFAULT_MIX", "GenerationError",
    "gate_frequencies", "generate_random_sparse_circuit", "generate_uand_circuit", "CompiledCircuit",
    "ContractionWarning", "compile_deep", "compile_one_layer", "compose_and_or", "layer_eps",
]
