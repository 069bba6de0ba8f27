"""Question answering over an incomplete knowledge base plus linked text.

A subgraph reader turns one hop of the question's KB neighbourhood into
entity vectors; a knowledge-aware text reader uses them to reformulate the
query and to gate document tokens; a bilinear scorer ranks candidates.
"""

from .config import RunConfig
from .model import KAReader, Vocab

__all__ = ["KAReader", "RunConfig", "Vocab"]
__version__ = "0.1.0"
