"""Dump pretrained speech-model hidden layers into PMA feature archives."""

__version__ = "0.1.0"

from .archive import write_archive
from .extract import ExtractionResult, extract
from .models import (
    CpcModel,
    ExtractorSpec,
    PhoneRecognizerModel,
    build_adapter,
    save_torch_checkpoint,
)

__all__ = [
    "CpcModel",
    "ExtractionResult",
    "ExtractorSpec",
    "PhoneRecognizerModel",
    "build_adapter",
    "extract",
    "save_torch_checkpoint",
    "write_archive",
]
