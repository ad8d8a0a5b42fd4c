"""Exception hierarchy shared across the package."""


class CrossroadsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CrossroadsError):
    """Invalid user-supplied data (scenario files, configs, CLI arguments)."""


class ContractViolationError(CrossroadsError):
    """A caller broke an internal API precondition."""


class CheckpointFormatError(CrossroadsError):
    """Checkpoint file is not in the expected format or is truncated."""


class CheckpointVersionError(CheckpointFormatError):
    """Checkpoint format version is not supported."""


class ArchitectureMismatchError(CrossroadsError):
    """Checkpoint tensors do not match the target network architecture."""


class InfeasibleDemandError(CrossroadsError):
    """Webster cycle length is undefined: flow ratios sum to >= 1."""
