"""Cross-modal text-to-video retrieval with unsupervised domain adaptation.

Trains joint multi-view (verb / noun / action) embeddings on a captioned
source gallery, adapts them to an uncaptioned target gallery through
iterative pseudo-labelling with prototype confidence and per-prototype
sampling, and evaluates retrieval quality with nDCG and mAP. Everything
operates on pre-extracted feature vectors.
"""

__version__ = "0.1.0"

from .kernels import backend_name

__all__ = ["backend_name", "__version__"]
