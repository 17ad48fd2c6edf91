"""Domain errors shared across the toolkit.

Every error carries a stable ``name`` used by the CLI when printing to
stderr, so callers can match on it without parsing messages.
"""


class IrtransError(Exception):
    name = "Error"


class MalformedIR(IrtransError):
    name = "MalformedIR"


class DanglingLabel(IrtransError):
    name = "DanglingLabel"


class DemanglerFailure(IrtransError):
    name = "DemanglerFailure"


class MissingFrontend(IrtransError):
    name = "MissingFrontend"


class EmptyCorpus(IrtransError):
    name = "EmptyCorpus"


class UnknownByte(IrtransError):
    name = "UnknownByte"


class SequenceTooLong(IrtransError):
    name = "SequenceTooLong"


class EmptyMaskSet(IrtransError):
    name = "EmptyMaskSet"


class NonFiniteLoss(IrtransError):
    name = "NonFiniteLoss"


class MissingIR(IrtransError):
    name = "MissingIR"


class ToolchainMissing(IrtransError):
    name = "ToolchainMissing"


class UnknownToken(IrtransError):
    name = "UnknownToken"


class EmptyInput(IrtransError):
    name = "EmptyInput"


class CheckpointMismatch(IrtransError):
    name = "CheckpointMismatch"


class CompileFailure(IrtransError):
    name = "CompileFailure"
