"""Bridge from labeled images to the engine's mask-embedding dataset format:
folder ingestion or prompt-driven generation, a segmentation backbone in
uniform-grid mode, and single-hot-labeled record export.
"""

from .job import ExtractionJob, ExtractionSummary, extract

__all__ = ["ExtractionJob", "ExtractionSummary", "extract"]

__version__ = "0.1.0"
