"""Release-aware retrieval-augmented question answering.

The package keeps one vector corpus per documentation release, rewrites
conversational queries into standalone forms, retrieves page-sized context
through dual chunking, and answers strictly from the retrieved text. An
evaluation suite scores answers with verdict prompts and compares system
variants statistically.
"""

__version__ = "0.1.0"
