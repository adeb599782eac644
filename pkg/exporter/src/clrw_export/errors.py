class ExportError(Exception):
    exit_code = 1


class ManifestError(ExportError):
    """The manifest is incomplete or inconsistent with the checkpoint."""

    exit_code = 2


class CheckpointError(ExportError):
    """The checkpoint cannot be read or holds unusable tensors."""

    exit_code = 3
