from .alias import AliasTable, build_alias_table
from .line import train_line
from .table import EmbeddingTable, read_embeddings, write_embeddings
from .walks import train_walk_embedding

__all__ = [
    "AliasTable",
    "EmbeddingTable",
    "build_alias_table",
    "read_embeddings",
    "train_line",
    "train_walk_embedding",
    "write_embeddings",
]
