"""Interpretable text embeddings from yes/no question banks.

A corpus is clustered, contrast-aware yes/no questions are generated and
filtered into a question bank, and a stack of small per-question classifier
heads is trained on cached LLM answers so every embedding dimension stays a
human-readable question.
"""

__version__ = "0.1.0"
