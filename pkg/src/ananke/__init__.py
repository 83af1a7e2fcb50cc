"""Attack investigation over provenance graphs with a phase-annotated knowledge base."""

__version__ = "0.1.0"
