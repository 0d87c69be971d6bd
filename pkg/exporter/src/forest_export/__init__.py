"""Fixture generation: train small ensembles, export to the exchange format."""

from .datasets import SHAPES, synthesize, write_csv
from .export import (ExportConfig, ExportError, ExportResult, export_model,
                     export_gradient_boosting, export_random_forest)

__version__ = "0.1.0"
