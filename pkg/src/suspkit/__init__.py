"""Feature pipelines, content clustering, graph embeddings and
explainable models for social-account suspension analysis."""

from .errors import MissingArtifact, SuspkitError
from .pipeline import PipelineConfig

__version__ = "0.1.0"

__all__ = ["MissingArtifact", "PipelineConfig", "SuspkitError", "__version__"]
