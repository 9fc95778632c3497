"""Hybrid retrieval DSL: SQL filters over email metadata combined with vector search.

Submodules: ``corpus`` (schema, JSONL I/O), ``dsl`` (parser, renderer),
``vectors`` (hashing embedder, field indexes), ``executor``, ``datagen``
(synthetic corpora and triplets), ``reward``, ``objectives`` (GRPO/DAPO),
``rollout`` (mock-policy rollouts), ``metrics`` and ``cli``.
"""

from .corpus import Corpus, EmailRecord, load_corpus, save_corpus
from .dsl import parse_program, render_program
from .executor import ExecutionContext, RetrievalResult, execute

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "EmailRecord",
    "ExecutionContext",
    "RetrievalResult",
    "execute",
    "load_corpus",
    "parse_program",
    "render_program",
    "save_corpus",
]
