__all__ = [
    "EdgeList",
    "knn_edges",
    "knn_edges_bruteforce",
    "radius_edges",
    "symmetrize",
    "squared_distance",
    "Graph",
    "EDGE_FEATURE_WIDTH",
    "edge_feature",
    "edge_features",
    "build_multiscale_graph",
]

from .knn import EdgeList, knn_edges, knn_edges_bruteforce, radius_edges, symmetrize, squared_distance
from .graph import Graph, EDGE_FEATURE_WIDTH, edge_feature, edge_features, build_multiscale_graph
