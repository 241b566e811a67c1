"""Offline batch encoder: title/query TSV in, embedding text file out."""

__version__ = "0.1.0"

from .encoders import EncoderUnavailableError, make_encoder
from .export import ExportJob, ExportSummary, export_embeddings

__all__ = [
    "EncoderUnavailableError",
    "ExportJob",
    "ExportSummary",
    "export_embeddings",
    "make_encoder",
]
