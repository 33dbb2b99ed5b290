"""Error taxonomy shared across the package.

Every exception carries an ``exit_code`` used by the CLI: 2 for configuration
problems, 3 for data problems, 4 for numerically degenerate inputs.
"""


class LataError(Exception):
    exit_code = 3


# -- configuration ----------------------------------------------------------

class KOutOfRange(LataError):
    exit_code = 2


class SizeOutOfRange(LataError):
    exit_code = 2


# -- container format -------------------------------------------------------

class BadMagic(LataError):
    pass


class UnsupportedVersion(LataError):
    pass


class UnsupportedDtype(LataError):
    pass


class TruncatedPayload(LataError):
    pass


class InvalidShape(LataError):
    pass


class NonFiniteElement(LataError):
    pass


# -- manifests and bundles --------------------------------------------------

class MissingFile(LataError):
    pass


class RowCountMismatch(LataError):
    pass


class LabelOutOfRange(LataError):
    pass


class ManifestError(LataError):
    pass


class ParseError(LataError):
    pass


# -- geometry and ranking ---------------------------------------------------

class DimensionMismatch(LataError):
    pass


class ZeroNormRow(LataError):
    pass


class ZeroNormQuery(LataError):
    pass


class MissingPoolLabels(LataError):
    pass


class MissingClassInPool(LataError):
    pass


class LengthMismatch(LataError):
    pass


class PermutationDomainMismatch(LataError):
    pass


class EmptyModelList(LataError):
    pass


class EmptyValidationSet(LataError):
    pass


class NonFiniteLogit(LataError):
    pass


# -- theory bench -----------------------------------------------------------

class ResampleBudgetExceeded(LataError):
    pass


class ConstructionViolated(LataError):
    pass


# -- numerically degenerate -------------------------------------------------

class NonPositiveIdealDCG(LataError):
    exit_code = 4


class DegenerateFeatures(LataError):
    exit_code = 4


class DegenerateLogits(LataError):
    exit_code = 4


class ZeroVariance(LataError):
    exit_code = 4


class SingleClassDegenerate(LataError):
    exit_code = 4
