"""Exception types shared across the package."""


class FedBoostError(Exception):
    """Base class for every error raised by fedboost."""


# --- dataset shards ---------------------------------------------------------

class ShapeMismatch(FedBoostError):
    pass


class LabelOutOfRange(FedBoostError):
    def __init__(self, row: int, label: int, num_classes: int):
        self.row = row
        self.label = label
        super().__init__(f"label {label} at row {row} outside [0, {num_classes})")


class NonFiniteFeature(FedBoostError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite feature value at ({row}, {col})")


# --- ensembles and prediction -----------------------------------------------

class EmptyEnsemble(FedBoostError):
    pass


class ArityMismatch(FedBoostError):
    pass


# --- learner families and payload codecs ------------------------------------

class UnknownFamily(FedBoostError):
    pass


class DegenerateShard(FedBoostError):
    pass


class VersionUnsupported(FedBoostError):
    pass


class MalformedPayload(FedBoostError):
    pass


# --- boosting round logic ----------------------------------------------------

class ReportCountMismatch(FedBoostError):
    pass


class LengthMismatch(FedBoostError):
    pass


class StaleRound(FedBoostError):
    pass


class DecodeFailure(FedBoostError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"hypothesis {index} failed to decode: {cause}")


# --- wire protocol ------------------------------------------------------------

class FrameTooLarge(FedBoostError):
    pass


class ConnectionClosed(FedBoostError):
    pass


class MalformedFrame(FedBoostError):
    pass


class FederationError(FedBoostError):
    pass


class AggregatorGone(FederationError):
    pass


class CollaboratorDropped(FederationError):
    def __init__(self, collab_id: str, round_no: int):
        self.collab_id = collab_id
        self.round_no = round_no
        super().__init__(f"collaborator {collab_id} dropped in round {round_no}")


class DuplicateHello(FederationError):
    pass


# --- plans and ingestion -------------------------------------------------------

class PlanError(FedBoostError):
    pass


class UnknownKey(PlanError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"unknown key: {path}")


class BadTaskOrder(PlanError):
    pass


class MissingField(PlanError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"missing required field: {path}")


class NonNumericFeature(FedBoostError):
    def __init__(self, row: int, col: int, text: str):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric feature {text!r} at ({row}, {col})")


class EmptyFile(FedBoostError):
    pass


class RaggedRow(FedBoostError):
    def __init__(self, line: int):
        self.line = line
        super().__init__(f"ragged row at line {line}")


class TooManyParts(FedBoostError):
    pass
