"""Embedding-file exporter for the online composition-adaptation engine."""

from .dataset import SplitSpec, load_split
from .encoders import ClipEncoder, FinetunedEncoder, StubEncoder, make_encoder
from .export import ExportJob, export_prototypes, export_stream, run_export
from .fixture import FixtureConfig, generate_fixture

__version__ = "0.1.0"
