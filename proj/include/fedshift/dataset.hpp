#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedshift/graph.hpp"

namespace fedshift {

// TU benchmark format: DS_A.txt (1-indexed edge rows "u, v"),
// DS_graph_indicator.txt, DS_graph_labels.txt, optional
// DS_node_attributes.txt / DS_node_labels.txt. Labels are remapped to a
// contiguous [0, C). Parse errors name the file and line.
Dataset load_tu_dataset(const std::string& directory);

// Writes a dataset back in the same layout (used for round-trip checks
// and the ingest cache).
void save_tu_dataset(const Dataset& ds, const std::string& directory);

struct SyntheticSpec {
    int num_classes = 2;
    int graphs_per_class = 100;
    int min_nodes = 12;
    int max_nodes = 24;
    int feature_dim = 16;
    uint64_t seed = 0;
};

// Two classes that share the same structural distribution (two dense
// communities joined by a sparse bridge); the label is carried entirely by
// class-conditional feature means on a few signal dimensions, with
// heavy-tailed noise on the rest.
Dataset generate_synthetic(const SyntheticSpec& spec);

std::pair<std::vector<int>, std::vector<int>> split_train_test(const Dataset& ds, double ratio,
                                                               uint64_t seed);

Partition partition_clients(const std::vector<int>& train_indices, int num_clients, uint64_t seed);

}  // namespace fedshift
