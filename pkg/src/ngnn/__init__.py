"""Outfit compatibility learning with node-wise graph neural networks."""

from .corpus import Item, Outfit, read_corpus, write_corpus
from .graph import FashionGraph, build_graph, build_vocab, extract_subgraph
from .model import CompatibilityModel, ModelConfig, count_params, score_multimodal, score_outfit
from .training import TrainConfig, train

__version__ = "0.1.0"
