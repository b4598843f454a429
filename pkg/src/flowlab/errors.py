"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Inputs have inconsistent or unsupported dimensions."""


class EmptyDomainError(ValueError):
    """An evaluation set or integration domain is empty."""


class SceneSpecError(ValueError):
    """A scene specification is degenerate or violates its invariants."""


class UnsupportedAugmentationError(ValueError):
    """The requested augmentation needs data the sample does not carry."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; carries diagnostics in the message."""


class SolverFailureError(RuntimeError):
    """The variational solver failed to make progress or diverged."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible with the requested use."""
