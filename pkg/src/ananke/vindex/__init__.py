from ._kernels import USE_NUMBA, backend_name
from .embed import (LOCAL_DIM, Embedder, HashEmbedder, HttpEmbedder, check_vector, embed_local,
                    serialize_sequence, tokenize)
from .index import Metric, Retrieved, VectorIndex, retrieve, search, similarity, threat_retrieve

__all__ = [
    "USE_NUMBA", "backend_name", "LOCAL_DIM", "Embedder", "HashEmbedder", "HttpEmbedder",
    "check_vector", "embed_local", "serialize_sequence", "tokenize", "Metric", "Retrieved",
    "VectorIndex", "retrieve", "search", "similarity", "threat_retrieve",
]
