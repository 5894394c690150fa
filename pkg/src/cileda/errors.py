"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 2); ``TrainingError``
covers numerical failures during fitting (CLI exit code 3).
"""


class CiledaError(Exception):
    pass


class ValidationError(CiledaError, ValueError):
    pass


class TrainingError(CiledaError, RuntimeError):
    pass


# dataio
class DegenerateSignal(ValidationError):
    pass


class SignalTooShort(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    def __init__(self, label, requested=None, available=None):
        self.label = label
        self.requested = requested
        self.available = available
        msg = f"class {label}: requested {requested}, available {available}"
        super().__init__(msg)


class ManifestParse(ValidationError):
    pass


class FileMissing(ValidationError, FileNotFoundError):
    pass


class NonFiniteSample(ValidationError):
    pass


# wpd / cloudfeat
class BadLength(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class MixedDomains(ValidationError):
    pass


# networks
class ShapeMismatch(ValidationError):
    pass


class ZeroCandidate(ValidationError):
    pass


class NonFinite(TrainingError):
    pass


# ensemble / harness
class DuplicateDomain(ValidationError):
    pass


class UnknownParameter(ValidationError):
    pass
