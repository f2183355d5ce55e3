"""Exception hierarchy shared across the package."""


class IncongruityError(Exception):
    """Base class for all package errors."""


class DimensionError(IncongruityError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(IncongruityError):
    """An API contract was violated (non-scalar loss, mismatched lengths, ...)."""


class EmptySequenceError(IncongruityError):
    """A sequence operation received no unmasked positions."""


class EmptyInputError(IncongruityError):
    """A model received an empty headline or body."""


class VocabularyError(IncongruityError):
    """A token id falls outside the vocabulary."""


class InfeasibleImplantError(IncongruityError):
    """No donor block satisfies the implanted-fraction constraint."""


class ArticleRejectedError(IncongruityError):
    """Cleansing removed every paragraph of an article."""


class GenerationError(IncongruityError):
    """Dataset generation violated an invariant (e.g. headline overlap)."""


class UndefinedMetricError(IncongruityError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""


class SerializationError(IncongruityError):
    """Parameter/checkpoint file is malformed or inconsistent."""


class ConfigError(IncongruityError):
    """Invalid run configuration (CLI exit code 2)."""


class DataError(IncongruityError):
    """Missing or malformed input data (CLI exit code 3)."""


class NumericError(IncongruityError):
    """Numeric failure such as a NaN loss (CLI exit code 4)."""
