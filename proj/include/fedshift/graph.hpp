#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedshift/mat.hpp"

namespace fedshift {

struct Edge {
    int u = 0;
    int v = 0;
    double w = 1.0;
};

// Simple graph with node features and a class label. Undirected graphs
// store each edge once with u < v; ingestion drops self-loops and merges
// duplicates.
struct Graph {
    int num_nodes = 0;
    std::vector<Edge> edges;
    bool directed = false;
    Mat features;  // num_nodes x d
    int label = 0;

    bool weighted() const;
    int degree(int u) const;  // undirected degree (ignores direction)
    std::vector<std::vector<int>> adjacency() const;  // undirected neighbor lists
};

struct Dataset {
    std::vector<Graph> graphs;
    int num_classes = 0;
    int feature_dim = 0;
    std::string name;
};

struct Partition {
    std::vector<std::vector<int>> client_indices;
    std::vector<int> test_indices;
};

// Canonicalize: drop self-loops, merge duplicate edges (last weight wins),
// order u < v when undirected.
void normalize_edges(Graph& g);

// Clustering coefficient per the formula matching the graph kind:
// directed form when g.directed, weighted geometric-mean form when any
// weight differs from 1, otherwise the plain triangle fraction.
double clustering_coefficient(const Graph& g, int u);

// The k nodes with the largest coefficients, descending; ties broken by
// ascending node index.
std::vector<int> top_k_nodes(const Graph& g, int k);

}  // namespace fedshift
