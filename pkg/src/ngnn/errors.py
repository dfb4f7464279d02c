"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
first token of its single-line failure message.
"""


class NGNNError(Exception):
    category = "error"


class DimensionError(NGNNError, ValueError):
    category = "dimension"


class ContractError(NGNNError, ValueError):
    category = "contract"


class IngestionError(NGNNError, ValueError):
    category = "ingestion"


class EmptyGraphError(NGNNError, ValueError):
    category = "empty-graph"


class ValidationError(NGNNError, ValueError):
    category = "validation"


class FormatError(NGNNError, ValueError):
    category = "format"


class ItemLookupError(NGNNError, KeyError):
    category = "lookup"

    def __str__(self):
        return str(self.args[0]) if self.args else "lookup failed"


class ConfigError(NGNNError, ValueError):
    category = "config"


class SamplingError(NGNNError, RuntimeError):
    category = "sampling"


class DivergenceError(NGNNError, FloatingPointError):
    category = "divergence"


class FitError(NGNNError, ValueError):
    category = "fit"


class GenerationError(NGNNError, ValueError):
    category = "generation"
