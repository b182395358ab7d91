#include "fedshift/kmeans.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "fedshift/rng.hpp"

namespace fedshift {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double sq_euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

ClusterModel kmeans_cosine(const std::vector<std::vector<double>>& embeddings, int k,
                           uint64_t seed, int max_iters) {
    int n = static_cast<int>(embeddings.size());
    if (k < 1) throw std::invalid_argument("kmeans_cosine: k must be >= 1");
    if (n < k) throw std::invalid_argument("kmeans_cosine: fewer embeddings than clusters");
    for (const auto& e : embeddings) (void)cosine_similarity(e, e);  // zero-norm check

    auto eng = rng::engine(seed, {0x4b4dULL});
    ClusterModel model;
    // k-means++ seeding with cosine distance.
    std::uniform_int_distribution<int> first(0, n - 1);
    model.centroids.push_back(embeddings[first(eng)]);
    std::vector<double> dmin(n);
    while (static_cast<int>(model.centroids.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : model.centroids)
                best = std::min(best, cosine_distance(embeddings[i], c));
            dmin[i] = best;
            total += best;
        }
        int pick = 0;
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(eng), acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += dmin[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(eng);
        }
        model.centroids.push_back(embeddings[pick]);
    }

    std::vector<int> assign(n, -1);
    size_t dim = embeddings[0].size();
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = cosine_distance(embeddings[i], model.centroids[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            for (size_t j = 0; j < dim; ++j) sums[assign[i]][j] += embeddings[i][j];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Reseed an empty cluster with the point farthest from its
                // own centroid (lowest index on ties).
                int far = 0;
                double fd = -1;
                for (int i = 0; i < n; ++i) {
                    double d = cosine_distance(embeddings[i], model.centroids[assign[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                model.centroids[c] = embeddings[far];
            } else {
                for (size_t j = 0; j < dim; ++j) model.centroids[c][j] = sums[c][j] / counts[c];
            }
        }
    }
    return model;
}

int nearest_centroid_index(const std::vector<double>& v, const ClusterModel& model) {
    if (model.centroids.empty()) throw std::invalid_argument("nearest_centroid: empty model");
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < model.centroids.size(); ++c) {
        double d = sq_euclid(v, model.centroids[c]);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

const std::vector<double>& nearest_centroid(const std::vector<double>& v,
                                            const ClusterModel& model) {
    return model.centroids[nearest_centroid_index(v, model)];
}

}  // namespace fedshift
