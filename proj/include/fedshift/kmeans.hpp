#pragma once

#include <cstdint>
#include <vector>

namespace fedshift {

struct ClusterModel {
    std::vector<std::vector<double>> centroids;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return 1.0 - cosine_similarity(a, b);
}

// k-means with cosine distance for assignment and arithmetic-mean centroid
// updates; k-means++-style seeding. Stops at an assignment fixpoint or
// max_iters. Throws on k > |embeddings| or a zero-norm embedding.
ClusterModel kmeans_cosine(const std::vector<std::vector<double>>& embeddings, int k,
                           uint64_t seed, int max_iters = 100);

// Euclidean nearest centroid; ties broken by lowest centroid index.
int nearest_centroid_index(const std::vector<double>& v, const ClusterModel& model);
const std::vector<double>& nearest_centroid(const std::vector<double>& v,
                                            const ClusterModel& model);

}  // namespace fedshift
