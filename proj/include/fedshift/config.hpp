#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedshift {

// Flat key=value experiment configuration. Every knob of the pipeline
// lives here so a saved manifest reproduces a run exactly.
struct ExperimentConfig {
    // data
    std::string dataset = "synthetic";  // "synthetic" or a TU directory path
    int syn_graphs_per_class = 100;
    int syn_min_nodes = 12;
    int syn_max_nodes = 24;
    int syn_feature_dim = 16;
    double train_ratio = 0.8;

    // federation
    int num_clients = 10;       // N
    int num_malicious = 2;      // |C_M|, clients 0..cm-1
    int rounds = 40;            // T
    std::string aggregator = "fedavg";  // fedavg|krum|bulyan|foolsgold
    bool weighted_fedavg = false;       // |D_i|/|D| weighting instead of 1/N
    int local_epochs = 1;
    double lr = 0.01;
    int batch_size = 32;

    // model
    std::string model = "gat";  // gat|gcn
    int hidden = 16;
    int layers = 2;

    // attack
    std::string attack = "fedshift";  // fedshift|random|none
    int target_class = 0;             // y_t
    double p = 0.1;
    double f = 0.1;
    double n_tri = 0.1;
    int k = 3;
    double lambda_dist = 1.0;
    double lambda_homo = 0.1;
    double lambda_ce = 0.5;
    double tau = 0.5;
    double eta = 0.01;        // stage-1 generator learning rate
    int stage1_epochs = 30;   // E
    int pretrain_epochs = 20; // local model training before stage 1
    bool fl_tune = true;
    int tune_epochs = 1;      // E_tune
    int recluster_rounds = 5; // R_c
    bool stage2 = true;
    int stage2_epochs = 60;
    double eta_stage2 = 0.05;
    bool cold_start = false;
    bool baseline_flip_labels = true;
    std::string generator = "mlp";  // mlp|gcn
    int gen_hidden = 32;

    // run
    uint64_t seed = 0;
    int repetitions = 5;
};

// Parse a config file; unknown keys and type errors are rejected.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Apply "key=value" overrides on top of a config.
void apply_override(ExperimentConfig& cfg, const std::string& key_value);

// Collects every violated constraint; empty means valid.
std::vector<std::string> validate(const ExperimentConfig& cfg);

// Canonical serialization; parsing it back yields an identical config.
std::string to_text(const ExperimentConfig& cfg);

}  // namespace fedshift
