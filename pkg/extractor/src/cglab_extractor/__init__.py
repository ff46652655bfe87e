"""Embedding extraction into the cglab dump format."""

from .dump import write_dump
from .extract import ExtractionJob, extract
from .sprites import SpriteGrid, load_dataset

__version__ = "0.1.0"
