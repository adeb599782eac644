"""Checkpoint exporter.

Converts framework-native pre-trained checkpoints (PyTorch state dicts)
into the CLRW binary weight container plus a matching architecture JSON,
the two file formats the pruning toolkit consumes.  This package owns
the framework dependency; it shares no code with the pruning toolkit,
only the documented file formats.
"""

from .errors import CheckpointError, ManifestError
from .export import export_checkpoint
from .manifest import ExportManifest

__version__ = "0.1.0"
