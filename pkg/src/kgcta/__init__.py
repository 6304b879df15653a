"""Column type annotation with knowledge-graph candidate types and a small transformer."""

from .config import ABLATIONS, Config
from .corpus import TableCorpus, gen_micro_corpus, read_corpus
from .index import InvertedIndex, bm25_score, build_index, idf, search, tokenize
from .kg_store import KnowledgeGraph, build_kg, load_kg
from .pipeline import Annotator, annotate_corpus

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "Annotator", "Config", "InvertedIndex", "KnowledgeGraph", "TableCorpus",
    "annotate_corpus", "bm25_score", "build_index", "build_kg", "gen_micro_corpus", "idf",
    "load_kg", "read_corpus", "search", "tokenize",
]
