"""Hamilton-Jacobi constraint analysis for first-order field theories.

The package computes, exactly and symbolically, the constraint structure
of BF-type field theories on a 3d spatial slice: fundamental and
generalized (star) brackets, the C-matrix over the non-involutive
constraint set, constraints generated by integrability, their closed
algebra, reducibility relations, degree-of-freedom counts,
characteristic equations and gauge transformations.  Two models are
built in: the Pontryagin and Euler topological invariants in 3+1 BF
variables.
"""

from .dsl import ParseError, SymbolInfo, canonical_str, parse_expression
from .expr import (Expression, ExprError, INTERNAL, SPATIAL, ZERO,
                   canonicalize, multiply, spatial_derivative, substitute)
from .hj import AnalysisReport, Options, PipelineError, analyze
from .oracle import OracleError, PointReduction, cross_validate
from .phase import (BUILTIN_MODELS, BracketTable, FieldDecl, Hamiltonian,
                    Model, ModelError, builtin_model, builtin_source,
                    load_model)
from .report import emit, parse_structured

__version__ = "1.0.0"

__all__ = [
    "AnalysisReport", "BUILTIN_MODELS", "BracketTable", "Expression",
    "ExprError", "FieldDecl", "Hamiltonian", "INTERNAL", "Model",
    "ModelError", "Options", "OracleError", "ParseError", "PipelineError",
    "PointReduction", "SPATIAL", "SymbolInfo", "ZERO", "analyze",
    "builtin_model", "builtin_source", "canonical_str", "canonicalize",
    "cross_validate", "emit", "load_model", "multiply", "parse_expression",
    "parse_structured", "spatial_derivative", "substitute",
]
