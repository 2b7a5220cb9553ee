"""Exception hierarchy shared across the package."""


class C3OError(Exception):
    """Base class for all domain errors raised by c3o."""


class InvalidField(C3OError, ValueError):
    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class UnknownMachineType(C3OError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"unknown machine type {self.name!r}"


class HeterogeneousFeatures(C3OError, ValueError):
    pass


class FeatureMismatch(C3OError, ValueError):
    pass


class EmptyInput(C3OError, ValueError):
    pass


class EmptyDataset(C3OError, ValueError):
    pass


class NotEnoughData(C3OError, ValueError):
    pass


class SignatureMismatch(C3OError, ValueError):
    pass


class FeatureKeyMismatch(C3OError, ValueError):
    pass


class NoPredictableCandidate(C3OError, ValueError):
    pass


class InvalidScenario(C3OError, ValueError):
    pass
