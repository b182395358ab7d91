#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fedshift/dataset.hpp"
#include "fedshift/rng.hpp"

namespace fedshift {

namespace {

// Feature layout: the first signal_dims carry the class-conditional mean
// (+mu for class 0, -mu for class 1), the rest are pure noise. Structure is
// drawn from the same distribution for both classes so the label depends on
// features alone. The noise is a Gaussian core plus a sparse heavy tail:
// rare large entries widen per-dimension data ranges without moving the
// graph-level means that carry the class signal.
constexpr double kMu = 0.75;
constexpr double kSigma = 1.5;
constexpr double kOutlierProb = 0.04;
constexpr double kOutlierSpan = 12.0;

int signal_dims(int d) { return std::max(1, d / 8); }

Graph make_community_graph(int n, std::mt19937_64& eng) {
    Graph g;
    g.num_nodes = n;
    int n1 = n / 2;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double p_in = 0.7;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            bool same = (u < n1) == (v < n1);
            if (same && coin(eng) < p_in) g.edges.push_back({u, v, 1.0});
        }
    // Sparse bridge between the two communities.
    std::uniform_int_distribution<int> left(0, n1 - 1), right(n1, n - 1);
    for (int b = 0; b < 2; ++b) g.edges.push_back({left(eng), right(eng), 1.0});
    normalize_edges(g);
    return g;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.min_nodes < 4 || spec.max_nodes < spec.min_nodes)
        throw std::invalid_argument("generate_synthetic: sizes must be >= 4");
    if (spec.feature_dim < 4)
        throw std::invalid_argument("generate_synthetic: feature dim must be >= 4");
    if (spec.num_classes != 2)
        throw std::invalid_argument("generate_synthetic: only 2 classes supported");

    Dataset ds;
    ds.name = "synthetic";
    ds.num_classes = 2;
    ds.feature_dim = spec.feature_dim;
    int s = signal_dims(spec.feature_dim);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < spec.graphs_per_class; ++i) {
            auto eng = rng::engine(spec.seed, {0x53594eULL, static_cast<uint64_t>(c),
                                               static_cast<uint64_t>(i)});
            std::uniform_int_distribution<int> size_dist(spec.min_nodes, spec.max_nodes);
            int n = size_dist(eng);
            Graph g = make_community_graph(n, eng);
            g.label = c;
            g.features = Mat(n, spec.feature_dim);
            std::normal_distribution<double> noise(0.0, kSigma);
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            std::uniform_real_distribution<double> tail(-kOutlierSpan, kOutlierSpan);
            double mu = (c == 0) ? kMu : -kMu;
            for (int u = 0; u < n; ++u)
                for (int j = 0; j < spec.feature_dim; ++j) {
                    double e = coin(eng) < kOutlierProb ? tail(eng) : noise(eng);
                    g.features.at(u, j) = (j < s ? mu : 0.0) + e;
                }
            ds.graphs.push_back(std::move(g));
        }
    return ds;
}

std::pair<std::vector<int>, std::vector<int>> split_train_test(const Dataset& ds, double ratio,
                                                               uint64_t seed) {
    if (ratio <= 0.0 || ratio >= 1.0)
        throw std::invalid_argument("split_train_test: ratio must be in (0, 1)");
    std::vector<int> idx(ds.graphs.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto eng = rng::engine(seed, {0x53504cULL});
    std::shuffle(idx.begin(), idx.end(), eng);
    size_t n_train = static_cast<size_t>(std::ceil(ratio * static_cast<double>(idx.size())));
    std::vector<int> train(idx.begin(), idx.begin() + n_train);
    std::vector<int> test(idx.begin() + n_train, idx.end());
    return {train, test};
}

Partition partition_clients(const std::vector<int>& train_indices, int num_clients,
                            uint64_t seed) {
    if (num_clients < 2) throw std::invalid_argument("partition_clients: need N >= 2");
    if (static_cast<int>(train_indices.size()) < num_clients)
        throw std::invalid_argument("partition_clients: fewer graphs than clients");
    std::vector<int> idx = train_indices;
    auto eng = rng::engine(seed, {0x504152ULL});
    std::shuffle(idx.begin(), idx.end(), eng);
    Partition part;
    part.client_indices.resize(num_clients);
    int base = static_cast<int>(idx.size()) / num_clients;
    int extra = static_cast<int>(idx.size()) % num_clients;
    size_t pos = 0;
    for (int c = 0; c < num_clients; ++c) {
        int take = base + (c < extra ? 1 : 0);
        part.client_indices[c].assign(idx.begin() + pos, idx.begin() + pos + take);
        pos += take;
    }
    return part;
}

}  // namespace fedshift
