"""Dense feature exporter for the dosing-error screening pipeline.

Produces the two feature blocks the screening matrix assembles alongside
its sparse text features: sentence-embedding rows for each corpus
document, and scalar per-document scores from any pretrained sequence
classifier via sliding-window chunking with top-k mean pooling. Both are
written as FMX1 blocks, one row per corpus record, in corpus order.
"""

from .export import export_chunked_scores, export_embeddings

__all__ = ["export_chunked_scores", "export_embeddings"]
