"""Sentence-level retrieval plus a jointly trained passage ranker and span
reader for open-domain QA, on a small reverse-mode autodiff core."""

__version__ = "0.1.0"
