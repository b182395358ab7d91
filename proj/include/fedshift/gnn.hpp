#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedshift/autodiff.hpp"
#include "fedshift/graph.hpp"
#include "fedshift/mat.hpp"

namespace fedshift {

enum class GnnKind { GCN, GAT };

struct GnnConfig {
    GnnKind kind = GnnKind::GAT;
    int layers = 2;
    int hidden = 16;
    double leaky_slope = 0.01;  // between layers
    double attn_slope = 0.2;    // inside GAT attention
};

struct GnnParams {
    GnnConfig cfg;
    int in_dim = 0;
    int num_classes = 0;
    std::vector<Mat> W;                  // per layer
    std::vector<Mat> a_src, a_dst;       // GAT attention vectors (hidden x 1)
    Mat cls_W, cls_b;

    static GnnParams init(const GnnConfig& cfg, int in_dim, int num_classes, uint64_t seed);

    std::vector<Mat*> tensors();
    std::vector<const Mat*> tensors() const;
    int embedding_dim() const { return cfg.hidden; }
};

// Leaf handles for one tape pass over the parameters.
struct BoundGnn {
    GnnConfig cfg;
    int num_classes = 0;
    std::vector<ad::Var> W, a_src, a_dst;
    ad::Var cls_W, cls_b;
    std::vector<ad::Var> all() const;
};

BoundGnn bind_gnn(ad::Tape& tape, const GnnParams& p, bool requires_grad);

struct ForwardResult {
    ad::Var embedding;  // 1 x hidden (mean-pool readout)
    ad::Var logits;     // 1 x C
};

// Forward pass with an explicit node-feature var (poisoned features flow
// through here during attack training).
ForwardResult gnn_forward(ad::Tape& tape, const BoundGnn& bp, const Graph& g, ad::Var X);

// Plain (no-gradient) conveniences.
Mat encode(const GnnParams& p, const Graph& g);
Mat logits_of(const GnnParams& p, const Graph& g);
int predict(const GnnParams& p, const Graph& g);  // argmax, ties to lowest class

void train_local(GnnParams& p, const Dataset& ds, const std::vector<int>& indices, int epochs,
                 double lr, uint64_t seed, int batch_size = 32);

double evaluate_accuracy(const GnnParams& p, const Dataset& ds, const std::vector<int>& indices);

void save_gnn(const GnnParams& p, const std::string& path);
GnnParams load_gnn(const std::string& path);

// Hash over the exact parameter bytes; used for freeze checks.
uint64_t hash_params(const GnnParams& p);

}  // namespace fedshift
