"""Triplet-loss metric learning engine with hard-example mining.

The package trains a small dense embedder under a margin-based triplet
objective. Batches are built as P identities x K samples, triplets are
selected from pairwise squared-distance matrices by one of five mining
strategies, and candidate features can come from the current batch
(online), the whole dataset (offline), or a rolling multi-batch feature
pool (semi-online). Embeddings are scored with a fold-cross-validated
pair-verification protocol.
"""

__version__ = "0.1.0"
