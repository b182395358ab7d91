#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedshift/config.hpp"
#include "fedshift/dataset.hpp"
#include "fedshift/gnn.hpp"
#include "fedshift/kmeans.hpp"

namespace fedshift {

// Per-dimension clamp bounds taken from a client's own training features,
// so perturbed values stay inside the range the defender could observe.
struct FeatureRange {
    Mat lo;  // 1 x d
    Mat hi;  // 1 x d
};

FeatureRange compute_feature_range(const Dataset& ds, const std::vector<int>& indices);
FeatureRange merge_ranges(const std::vector<FeatureRange>& ranges);

// The shifter itself: a rank-aligned perturbation block. Row i is added to
// the node with the i-th highest clustering coefficient of whichever graph
// the trigger lands on; dim_mask zeroes everything outside the feature
// budget.
struct Trigger {
    Mat delta;     // rows x d
    Mat dim_mask;  // 1 x d of 0/1
};

// ceil-style budgets shared by every call site.
int num_poison_nodes(int graph_nodes, double n_tri);
int num_masked_dims(int feature_dim, double f);

// Mask with 1s on the ceil(f*d) columns whose mean |value| is largest,
// ties broken toward the lower column index.
Mat select_dim_mask(const Mat& raw, double f);

// Copy of g with the trigger applied: row i of delta (masked) is added to
// the i-th ranked node, then features are clamped to the range.
Graph apply_trigger(const Graph& g, const Trigger& t, double n_tri, const FeatureRange& range);

// Same but on attacker-chosen positions (used by the random baseline).
Graph apply_trigger_at(const Graph& g, const Trigger& t, const std::vector<int>& positions,
                       const FeatureRange& range);

// Plain-arithmetic loss terms, mirrored by the differentiable attack steps.
double loss_distance(const std::vector<double>& embedding, const std::vector<double>& centroid);
double loss_homophily(const Graph& g, double tau);  // edgeless -> 0
double loss_cross_entropy(const Mat& logits, int label);

// Feature-perturbation generator: a 2-layer MLP over concat(node features,
// graph mean features); the "gcn" kind propagates features over the
// normalized adjacency once before the concat.
struct GeneratorParams {
    std::string kind = "mlp";  // mlp|gcn
    int in_dim = 0;
    int hidden = 0;
    Mat W1, b1, W2, b2;

    static GeneratorParams init(const std::string& kind, int feature_dim, int hidden,
                                uint64_t seed);
    std::vector<Mat*> tensors();
    std::vector<const Mat*> tensors() const;
};

// Raw (unmasked, unclamped) perturbation rows for the given positions.
Mat generator_perturbation(const GeneratorParams& gen, const Graph& g,
                           const std::vector<int>& positions);

void save_generator(const GeneratorParams& gen, const std::string& path);
GeneratorParams load_generator(const std::string& path);

// Which local graphs get poisoned: among graphs the local model classifies
// correctly and whose label differs from the target class, the ceil(p*|.|)
// whose embeddings are farthest (cosine) from their nearest target-class
// centroid.
struct PoisonPlan {
    int target_class = 0;
    std::vector<int> eligible;        // dataset indices, ascending
    std::vector<int> poison_indices;  // subset of eligible
};

PoisonPlan make_poison_plan(const GnnParams& model, const Dataset& ds,
                            const std::vector<int>& indices, const ClusterModel& centroids,
                            int target_class, double p);

// Everything a malicious client carries across rounds.
struct MaliciousContext {
    int client_id = 0;
    const Dataset* ds = nullptr;
    std::vector<int> indices;  // local training shard
    GnnParams local_model;     // theta_i^*
    FeatureRange range;
    ClusterModel centroids;
    PoisonPlan plan;
    GeneratorParams gen;
    Trigger trigger;  // stage-2 state
    int rounds_since_recluster = 0;
};

// Pretrains the local surrogate, clusters target-class embeddings, picks
// the poison set and initializes the generator.
MaliciousContext setup_malicious_client(int client_id, const Dataset& ds,
                                        const std::vector<int>& indices,
                                        const ExperimentConfig& cfg);

// One pass of generator training against the given surrogate model;
// returns the mean loss over poisoned graphs.
double stage1_epoch(MaliciousContext& mc, const GnnParams& model, const ExperimentConfig& cfg,
                    uint64_t seed);

void stage1_train(MaliciousContext& mc, const ExperimentConfig& cfg);

// Round hook: continue generator training against the current global
// model; reclusters (and re-plans) every cfg.recluster_rounds rounds.
void fl_tune_round(MaliciousContext& mc, const GnnParams& global_model,
                   const ExperimentConfig& cfg, int round);

// Poisoned copy of one local graph under the current generator: masked,
// clamped perturbation on the top-coefficient nodes; the label is kept.
Graph poisoned_view(const MaliciousContext& mc, int graph_index, const ExperimentConfig& cfg);

// Fine-tunes each client's generator against the frozen global model,
// switching the objective to flipping predictions to the target class.
// Warm start continues from the training-time generator; cold_start zeroes
// its parameters first. Each epoch emits per-client triggers (rank-aligned
// mean of generator perturbations over the poison set, feature budget via
// the mask) and the trace records the test-set attack success rate of the
// aggregated trigger.
struct Stage2Point {
    int epoch = 0;
    double asr = 0.0;
    double loss = 0.0;
};

struct Stage2Result {
    Trigger trigger;  // aggregated across clients
    FeatureRange range;
    std::vector<Stage2Point> trace;
};

Stage2Result stage2_finetune(std::vector<MaliciousContext>& clients, const GnnParams& global_model,
                             const Dataset& ds, const std::vector<int>& test_indices,
                             const ExperimentConfig& cfg);

// Elementwise mean of the client triggers, feature mask recomputed on the
// mean under the same budget.
Trigger aggregate_triggers(const std::vector<Trigger>& triggers, double f);

// Label-flipping baseline: random positions, uniform in-range values on a
// random feature mask.
Trigger make_random_trigger(int rows, int feature_dim, double f, const FeatureRange& range,
                            uint64_t seed);
std::vector<int> random_positions(int graph_nodes, double n_tri, uint64_t seed);

// Counts every trigger generation/application; benign paths must leave it
// at zero.
uint64_t shifter_activity_count();
void reset_shifter_activity();

}  // namespace fedshift
