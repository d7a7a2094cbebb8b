"""Exception types raised across the pipeline."""


class GowergraphError(Exception):
    """Base class for all library errors."""


class MissingColumn(GowergraphError):
    def __init__(self, name: str):
        super().__init__(f"required column missing from input: {name!r}")
        self.name = name


class MissingCell(GowergraphError):
    def __init__(self, row: int, col: str):
        super().__init__(f"missing value at row {row}, column {col!r}")
        self.row = row
        self.col = col


class NonNumericCell(GowergraphError):
    def __init__(self, row: int, col: str, value: str = ""):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col
        self.value = value


class DuplicateId(GowergraphError):
    def __init__(self, id_: str):
        super().__init__(f"duplicate id: {id_!r}")
        self.id = id_


class NonpositivePopulation(GowergraphError):
    pass


class UnknownCategory(GowergraphError):
    def __init__(self, label: str, feature: str = ""):
        where = f" in feature {feature!r}" if feature else ""
        super().__init__(f"unknown category {label!r}{where}")
        self.label = label
        self.feature = feature


class TooFewRows(GowergraphError):
    pass


class SingularSystem(GowergraphError):
    pass


class ZeroVarianceTruth(GowergraphError):
    pass


class FeatureSetMismatch(GowergraphError):
    pass


class ZeroTotalWeight(GowergraphError):
    pass


class KOutOfRange(GowergraphError):
    pass


class EmptyGraph(GowergraphError):
    pass


class DegenerateGroups(GowergraphError):
    pass


class BadThresholds(GowergraphError):
    pass


class ConfigError(GowergraphError):
    pass


class StageFailure(GowergraphError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class MissingUpstream(GowergraphError):
    def __init__(self, artifact: str):
        super().__init__(f"missing upstream artifact: {artifact}")
        self.artifact = artifact
