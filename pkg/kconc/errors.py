from typing import Optional


class KConcError(Exception):
    """Base error. Carries a short machine-readable code and the CLI exit code."""

    error_code: str = "kconc_error"
    exit_code: int = 5

    def __init__(self, detail: str, error_code: Optional[str] = None):
        super().__init__(detail)
        self.detail = detail
        if error_code is not None:
            self.error_code = error_code

    def to_dict(self) -> dict:
        return {"error_code": self.error_code, "detail": self.detail}


# Tensor / model contracts
class DimensionError(KConcError):
    error_code = "dimension_mismatch"


class ContractError(KConcError):
    error_code = "contract_violation"


class DegenerateInputError(KConcError):
    error_code = "degenerate_input"


class SpecValidationError(KConcError):
    error_code = "invalid_spec"
    exit_code = 4


# Taxonomy
class UnknownLabelError(KConcError, KeyError):
    error_code = "unknown_label"

    def __str__(self) -> str:
        return self.detail


class NoVerticalError(KConcError):
    error_code = "no_vertical"


class TaxonomyError(KConcError):
    error_code = "invalid_taxonomy"
    exit_code = 4


# Pipeline
class NoDataError(KConcError):
    error_code = "no_data"


class RoutingError(KConcError):
    error_code = "missing_teacher"


class MissingTargetsError(KConcError):
    error_code = "missing_targets"

    def __init__(self, sample_ids):
        self.sample_ids = sorted(sample_ids)
        preview = ", ".join(str(s) for s in self.sample_ids[:20])
        more = "" if len(self.sample_ids) <= 20 else f" (+{len(self.sample_ids) - 20} more)"
        super().__init__(f"no soft targets for sample ids: {preview}{more}")


class UndefinedAPError(KConcError):
    error_code = "undefined_ap"


# Checkpoints
class CheckpointError(KConcError):
    error_code = "checkpoint_error"
    exit_code = 6


class CheckpointVersionError(CheckpointError):
    error_code = "checkpoint_version"


class CheckpointTruncatedError(CheckpointError):
    error_code = "checkpoint_truncated"


class CheckpointShapeError(CheckpointError):
    error_code = "checkpoint_shape"


# CLI
class UsageError(KConcError):
    error_code = "usage"
    exit_code = 2


class MissingFileError(KConcError):
    error_code = "missing_file"
    exit_code = 3
