#include "fedshift/shifter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fedshift/rng.hpp"
#include "fedshift/serialize.hpp"

namespace fedshift {

namespace {

std::atomic<uint64_t> g_activity{0};

void touch() { g_activity.fetch_add(1, std::memory_order_relaxed); }

constexpr uint64_t kTagMal = 0x4d414cULL;
constexpr uint64_t kTagGen = 0x47454eULL;
constexpr uint64_t kTagStage1 = 0x535431ULL;
constexpr uint64_t kTagTune = 0x54554eULL;

// Row-normalized one-hop propagation with self loops, used by the "gcn"
// generator kind.
Mat propagate(const Graph& g) {
    const Mat& X = g.features;
    Mat out(X.rows, X.cols, 0.0);
    std::vector<double> deg(g.num_nodes, 1.0);  // self loop
    for (const Edge& e : g.edges) {
        deg[e.u] += 1.0;
        deg[e.v] += 1.0;
    }
    for (int u = 0; u < g.num_nodes; ++u)
        for (int j = 0; j < X.cols; ++j) out.at(u, j) = X.at(u, j) / deg[u];
    for (const Edge& e : g.edges)
        for (int j = 0; j < X.cols; ++j) {
            out.at(e.u, j) += X.at(e.v, j) / deg[e.u];
            out.at(e.v, j) += X.at(e.u, j) / deg[e.v];
        }
    return out;
}

// Input rows for the generator: concat(per-node features, graph mean).
Mat generator_input(const GeneratorParams& gen, const Graph& g,
                    const std::vector<int>& positions) {
    const Mat& X = g.features;
    int d = X.cols;
    Mat base = gen.kind == "gcn" ? propagate(g) : X;
    std::vector<double> mean(d, 0.0);
    for (int u = 0; u < X.rows; ++u)
        for (int j = 0; j < d; ++j) mean[j] += X.at(u, j) / X.rows;
    Mat in(static_cast<int>(positions.size()), 2 * d);
    for (size_t i = 0; i < positions.size(); ++i) {
        int u = positions[i];
        if (u < 0 || u >= g.num_nodes)
            throw std::invalid_argument("generator_input: position out of range");
        for (int j = 0; j < d; ++j) {
            in.at(static_cast<int>(i), j) = base.at(u, j);
            in.at(static_cast<int>(i), d + j) = mean[j];
        }
    }
    return in;
}

std::vector<double> row_of(const Mat& m, int r) {
    std::vector<double> out(m.cols);
    for (int j = 0; j < m.cols; ++j) out[j] = m.at(r, j);
    return out;
}

double row_norm(const Mat& m, int r) {
    double n2 = 0;
    for (int j = 0; j < m.cols; ++j) n2 += m.at(r, j) * m.at(r, j);
    return std::sqrt(n2);
}

// Differentiable homophily hinge over the current (perturbed) features.
// Zero-norm endpoints contribute the hinge at similarity 0 as a constant.
ad::Var homophily_var(ad::Tape& t, ad::Var Xp, const Graph& g, double tau) {
    ad::Var acc = t.constant(Mat::scalar(0.0));
    if (g.edges.empty()) return acc;
    const Mat& X = Xp.value();
    double const_part = 0.0;
    for (const Edge& e : g.edges) {
        if (row_norm(X, e.u) == 0.0 || row_norm(X, e.v) == 0.0) {
            const_part += std::max(0.0, tau);
            continue;
        }
        ad::Var s = ad::cosine_pair(ad::row_gather(Xp, {e.u}), ad::row_gather(Xp, {e.v}));
        ad::Var hinge = ad::leaky_relu(ad::sub(t.constant(Mat::scalar(tau)), s), 0.0);
        acc = ad::add(acc, hinge);
    }
    if (const_part != 0.0) acc = ad::add(acc, t.constant(Mat::scalar(const_part)));
    return ad::scale(acc, 1.0 / static_cast<double>(g.edges.size()));
}

struct GenBound {
    ad::Var W1, b1, W2, b2;
    std::vector<ad::Var> all() const { return {W1, b1, W2, b2}; }
};

GenBound bind_generator(ad::Tape& t, const GeneratorParams& gen) {
    return {t.leaf(gen.W1, true), t.leaf(gen.b1, true), t.leaf(gen.W2, true),
            t.leaf(gen.b2, true)};
}

ad::Var generator_forward(ad::Tape& t, const GenBound& gb, const Mat& in) {
    ad::Var In = t.constant(in);
    ad::Var h = ad::tanh_v(ad::add(ad::matmul(In, gb.W1), gb.b1));
    return ad::add(ad::matmul(h, gb.W2), gb.b2);
}

std::vector<std::vector<double>> target_embeddings(const GnnParams& model, const Dataset& ds,
                                                   const std::vector<int>& indices,
                                                   int target_class) {
    std::vector<std::vector<double>> out;
    for (int idx : indices)
        if (ds.graphs[idx].label == target_class) out.push_back(row_of(encode(model, ds.graphs[idx]), 0));
    return out;
}

ClusterModel cluster_targets(const GnnParams& model, const Dataset& ds,
                             const std::vector<int>& indices, const ExperimentConfig& cfg) {
    auto embs = target_embeddings(model, ds, indices, cfg.target_class);
    if (embs.empty())
        throw std::runtime_error("malicious client holds no target-class graphs");
    int k = std::min<int>(cfg.k, static_cast<int>(embs.size()));
    return kmeans_cosine(embs, k, rng::derive(cfg.seed, {kTagMal, 0x434cULL}));
}

// One generator gradient step on a single poisoned graph. Returns the loss.
double stage1_step(MaliciousContext& mc, const GnnParams& model, const Graph& g,
                   const ExperimentConfig& cfg) {
    touch();
    int kg = num_poison_nodes(g.num_nodes, cfg.n_tri);
    std::vector<int> positions = top_k_nodes(g, kg);

    ad::Tape t;
    GenBound gb = bind_generator(t, mc.gen);
    BoundGnn bm = bind_gnn(t, model, false);

    Mat in = generator_input(mc.gen, g, positions);
    ad::Var raw = generator_forward(t, gb, in);
    Mat mask = select_dim_mask(raw.value(), cfg.f);
    ad::Var masked = ad::mul(raw, t.constant(mask));
    ad::Var scat = ad::row_scatter_add(masked, positions, g.num_nodes);
    ad::Var Xp = ad::clamp(ad::add(t.constant(g.features), scat), mc.range.lo, mc.range.hi);

    ForwardResult fr = gnn_forward(t, bm, g, Xp);

    const Mat& emb = fr.embedding.value();
    std::vector<double> ev = row_of(emb, 0);
    const std::vector<double>& cn = nearest_centroid(ev, mc.centroids);
    ad::Var dist = ad::sub(t.constant(Mat::scalar(1.0)),
                           ad::cosine_pair(fr.embedding, t.constant(Mat(1, emb.cols, cn))));
    ad::Var homo = homophily_var(t, Xp, g, cfg.tau);
    ad::Var ce = ad::cross_entropy(fr.logits, g.label);
    ad::Var loss = ad::add(ad::add(ad::scale(dist, cfg.lambda_dist), ad::scale(homo, cfg.lambda_homo)),
                           ad::scale(ce, cfg.lambda_ce));
    t.backward(loss);

    std::vector<ad::Var> vars = gb.all();
    std::vector<Mat*> mats = mc.gen.tensors();
    for (size_t i = 0; i < vars.size(); ++i) {
        const Mat& gmat = vars[i].grad();
        for (size_t j = 0; j < mats[i]->v.size(); ++j) mats[i]->v[j] -= cfg.eta * gmat.v[j];
    }
    return loss.value().v[0];
}

}  // namespace

int num_poison_nodes(int graph_nodes, double n_tri) {
    int k = static_cast<int>(std::ceil(n_tri * graph_nodes));
    return std::max(1, std::min(k, graph_nodes));
}

int num_masked_dims(int feature_dim, double f) {
    int m = static_cast<int>(std::ceil(f * feature_dim));
    return std::max(1, std::min(m, feature_dim));
}

Mat select_dim_mask(const Mat& raw, double f) {
    int d = raw.cols;
    int m = num_masked_dims(d, f);
    std::vector<double> score(d, 0.0);
    for (int i = 0; i < raw.rows; ++i)
        for (int j = 0; j < d; ++j) score[j] += std::fabs(raw.at(i, j));
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });
    Mat mask(1, d, 0.0);
    for (int i = 0; i < m; ++i) mask.at(0, order[i]) = 1.0;
    return mask;
}

FeatureRange compute_feature_range(const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("compute_feature_range: empty index set");
    int d = ds.feature_dim;
    FeatureRange r{Mat(1, d, std::numeric_limits<double>::infinity()),
                   Mat(1, d, -std::numeric_limits<double>::infinity())};
    for (int idx : indices) {
        const Mat& X = ds.graphs[idx].features;
        for (int u = 0; u < X.rows; ++u)
            for (int j = 0; j < d; ++j) {
                r.lo.at(0, j) = std::min(r.lo.at(0, j), X.at(u, j));
                r.hi.at(0, j) = std::max(r.hi.at(0, j), X.at(u, j));
            }
    }
    return r;
}

FeatureRange merge_ranges(const std::vector<FeatureRange>& ranges) {
    if (ranges.empty()) throw std::invalid_argument("merge_ranges: empty");
    FeatureRange out = ranges[0];
    for (size_t i = 1; i < ranges.size(); ++i) {
        check_same_shape(out.lo, ranges[i].lo, "merge_ranges");
        for (int j = 0; j < out.lo.cols; ++j) {
            out.lo.at(0, j) = std::min(out.lo.at(0, j), ranges[i].lo.at(0, j));
            out.hi.at(0, j) = std::max(out.hi.at(0, j), ranges[i].hi.at(0, j));
        }
    }
    return out;
}

Graph apply_trigger_at(const Graph& g, const Trigger& t, const std::vector<int>& positions,
                       const FeatureRange& range) {
    touch();
    if (t.delta.cols != g.features.cols)
        throw std::invalid_argument("apply_trigger: feature dim mismatch");
    Graph out = g;
    int rows = std::min<int>(static_cast<int>(positions.size()), t.delta.rows);
    for (int i = 0; i < rows; ++i) {
        int u = positions[i];
        if (u < 0 || u >= g.num_nodes)
            throw std::invalid_argument("apply_trigger: position out of range");
        for (int j = 0; j < t.delta.cols; ++j) {
            double md = t.dim_mask.at(0, j) * t.delta.at(i, j);
            if (md == 0.0) continue;  // untouched entries keep their exact bytes
            double x = out.features.at(u, j) + md;
            out.features.at(u, j) = std::min(std::max(x, range.lo.at(0, j)), range.hi.at(0, j));
        }
    }
    return out;
}

Graph apply_trigger(const Graph& g, const Trigger& t, double n_tri, const FeatureRange& range) {
    return apply_trigger_at(g, t, top_k_nodes(g, num_poison_nodes(g.num_nodes, n_tri)), range);
}

double loss_distance(const std::vector<double>& embedding, const std::vector<double>& centroid) {
    return cosine_distance(embedding, centroid);
}

double loss_homophily(const Graph& g, double tau) {
    if (g.edges.empty()) return 0.0;
    const Mat& X = g.features;
    double acc = 0.0;
    for (const Edge& e : g.edges) {
        double sim = 0.0;
        if (row_norm(X, e.u) != 0.0 && row_norm(X, e.v) != 0.0)
            sim = cosine_similarity(row_of(X, e.u), row_of(X, e.v));
        acc += std::max(0.0, tau - sim);
    }
    return acc / static_cast<double>(g.edges.size());
}

double loss_cross_entropy(const Mat& logits, int label) {
    if (logits.rows != 1) throw std::invalid_argument("loss_cross_entropy: expects 1xC logits");
    if (label < 0 || label >= logits.cols)
        throw std::invalid_argument("loss_cross_entropy: label out of range");
    double mx = *std::max_element(logits.v.begin(), logits.v.end());
    double lse = 0.0;
    for (double x : logits.v) lse += std::exp(x - mx);
    return std::log(lse) + mx - logits.v[label];
}

GeneratorParams GeneratorParams::init(const std::string& kind, int feature_dim, int hidden,
                                      uint64_t seed) {
    if (kind != "mlp" && kind != "gcn")
        throw std::invalid_argument("generator kind must be mlp or gcn");
    GeneratorParams g;
    g.kind = kind;
    g.in_dim = 2 * feature_dim;
    g.hidden = hidden;
    auto glorot = [&](int r, int c, uint64_t tag) {
        Mat m(r, c);
        double s = std::sqrt(6.0 / (r + c));
        auto eng = rng::engine(seed, {kTagGen, tag});
        std::uniform_real_distribution<double> u(-s, s);
        for (double& x : m.v) x = u(eng);
        return m;
    };
    g.W1 = glorot(g.in_dim, hidden, 1);
    g.b1 = Mat(1, hidden, 0.0);
    g.W2 = glorot(hidden, feature_dim, 2);
    g.b2 = Mat(1, feature_dim, 0.0);
    return g;
}

std::vector<Mat*> GeneratorParams::tensors() { return {&W1, &b1, &W2, &b2}; }
std::vector<const Mat*> GeneratorParams::tensors() const { return {&W1, &b1, &W2, &b2}; }

Mat generator_perturbation(const GeneratorParams& gen, const Graph& g,
                           const std::vector<int>& positions) {
    touch();
    Mat in = generator_input(gen, g, positions);
    // tanh(in W1 + b1) W2 + b2, plain arithmetic.
    Mat h(in.rows, gen.hidden);
    for (int i = 0; i < in.rows; ++i)
        for (int j = 0; j < gen.hidden; ++j) {
            double s = gen.b1.at(0, j);
            for (int k = 0; k < in.cols; ++k) s += in.at(i, k) * gen.W1.at(k, j);
            h.at(i, j) = std::tanh(s);
        }
    Mat out(in.rows, gen.W2.cols);
    for (int i = 0; i < in.rows; ++i)
        for (int j = 0; j < out.cols; ++j) {
            double s = gen.b2.at(0, j);
            for (int k = 0; k < gen.hidden; ++k) s += h.at(i, k) * gen.W2.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

void save_generator(const GeneratorParams& gen, const std::string& path) {
    Record rec;
    rec.meta = {{"module", "shift-generator"},
                {"kind", gen.kind},
                {"in_dim", std::to_string(gen.in_dim)},
                {"hidden", std::to_string(gen.hidden)}};
    rec.tensors = {{"W1", gen.W1}, {"b1", gen.b1}, {"W2", gen.W2}, {"b2", gen.b2}};
    save_record(rec, path);
}

GeneratorParams load_generator(const std::string& path) {
    Record rec = load_record(path);
    GeneratorParams g;
    g.kind = rec.get_meta("kind");
    g.in_dim = std::stoi(rec.get_meta("in_dim"));
    g.hidden = std::stoi(rec.get_meta("hidden"));
    g.W1 = rec.get_tensor("W1");
    g.b1 = rec.get_tensor("b1");
    g.W2 = rec.get_tensor("W2");
    g.b2 = rec.get_tensor("b2");
    return g;
}

PoisonPlan make_poison_plan(const GnnParams& model, const Dataset& ds,
                            const std::vector<int>& indices, const ClusterModel& centroids,
                            int target_class, double p) {
    PoisonPlan plan;
    plan.target_class = target_class;
    for (int idx : indices) {
        const Graph& g = ds.graphs[idx];
        if (g.label == target_class) continue;
        if (predict(model, g) == g.label) plan.eligible.push_back(idx);
    }
    std::sort(plan.eligible.begin(), plan.eligible.end());
    int count = static_cast<int>(std::ceil(p * plan.eligible.size()));
    count = std::min<int>(count, static_cast<int>(plan.eligible.size()));
    if (count == 0) return plan;
    std::vector<std::pair<double, int>> ranked;
    for (int idx : plan.eligible) {
        std::vector<double> e = row_of(encode(model, ds.graphs[idx]), 0);
        const std::vector<double>& cn = nearest_centroid(e, centroids);
        ranked.push_back({cosine_distance(e, cn), idx});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; i < count; ++i) plan.poison_indices.push_back(ranked[i].second);
    std::sort(plan.poison_indices.begin(), plan.poison_indices.end());
    return plan;
}

MaliciousContext setup_malicious_client(int client_id, const Dataset& ds,
                                        const std::vector<int>& indices,
                                        const ExperimentConfig& cfg) {
    MaliciousContext mc;
    mc.client_id = client_id;
    mc.ds = &ds;
    mc.indices = indices;

    GnnConfig gcfg;
    gcfg.kind = cfg.model == "gcn" ? GnnKind::GCN : GnnKind::GAT;
    gcfg.layers = cfg.layers;
    gcfg.hidden = cfg.hidden;
    mc.local_model = GnnParams::init(gcfg, ds.feature_dim, ds.num_classes,
                                     rng::derive(cfg.seed, {kTagMal, (uint64_t)client_id, 1}));
    train_local(mc.local_model, ds, indices, cfg.pretrain_epochs, cfg.lr,
                rng::derive(cfg.seed, {kTagMal, (uint64_t)client_id, 2}), cfg.batch_size);

    mc.range = compute_feature_range(ds, indices);
    mc.centroids = cluster_targets(mc.local_model, ds, indices, cfg);
    mc.plan = make_poison_plan(mc.local_model, ds, indices, mc.centroids, cfg.target_class, cfg.p);
    mc.gen = GeneratorParams::init(cfg.generator, ds.feature_dim, cfg.gen_hidden,
                                   rng::derive(cfg.seed, {kTagMal, (uint64_t)client_id, 3}));
    return mc;
}

double stage1_epoch(MaliciousContext& mc, const GnnParams& model, const ExperimentConfig& cfg,
                    uint64_t /*seed*/) {
    if (mc.plan.poison_indices.empty()) return 0.0;
    double total = 0.0;
    for (int idx : mc.plan.poison_indices)
        total += stage1_step(mc, model, mc.ds->graphs[idx], cfg);
    return total / static_cast<double>(mc.plan.poison_indices.size());
}

void stage1_train(MaliciousContext& mc, const ExperimentConfig& cfg) {
    for (int e = 0; e < cfg.stage1_epochs; ++e)
        stage1_epoch(mc, mc.local_model, cfg, rng::derive(cfg.seed, {kTagStage1, (uint64_t)e}));
}

void fl_tune_round(MaliciousContext& mc, const GnnParams& global_model,
                   const ExperimentConfig& cfg, int round) {
    ++mc.rounds_since_recluster;
    if (mc.rounds_since_recluster >= cfg.recluster_rounds) {
        mc.rounds_since_recluster = 0;
        mc.centroids = cluster_targets(global_model, *mc.ds, mc.indices, cfg);
        mc.plan = make_poison_plan(global_model, *mc.ds, mc.indices, mc.centroids,
                                   cfg.target_class, cfg.p);
    }
    for (int e = 0; e < cfg.tune_epochs; ++e)
        stage1_epoch(mc, global_model, cfg,
                     rng::derive(cfg.seed, {kTagTune, (uint64_t)round, (uint64_t)e}));
}

Graph poisoned_view(const MaliciousContext& mc, int graph_index, const ExperimentConfig& cfg) {
    const Graph& g = mc.ds->graphs[graph_index];
    int kg = num_poison_nodes(g.num_nodes, cfg.n_tri);
    std::vector<int> positions = top_k_nodes(g, kg);
    Mat raw = generator_perturbation(mc.gen, g, positions);
    Trigger t{raw, select_dim_mask(raw, cfg.f)};
    return apply_trigger_at(g, t, positions, mc.range);
}

Trigger aggregate_triggers(const std::vector<Trigger>& triggers, double f) {
    if (triggers.empty()) throw std::invalid_argument("aggregate_triggers: empty");
    Mat mean = triggers[0].delta;
    for (size_t i = 1; i < triggers.size(); ++i) {
        check_same_shape(mean, triggers[i].delta, "aggregate_triggers");
        for (size_t j = 0; j < mean.v.size(); ++j) mean.v[j] += triggers[i].delta.v[j];
    }
    for (double& x : mean.v) x /= static_cast<double>(triggers.size());
    Mat mask = select_dim_mask(mean, f);
    return {mean, mask};
}

Trigger make_random_trigger(int rows, int feature_dim, double f, const FeatureRange& range,
                            uint64_t seed) {
    touch();
    Trigger t;
    t.delta = Mat(rows, feature_dim);
    auto eng = rng::engine(seed, {0x524e44ULL});
    // random feature budget of the same size as the learned mask
    std::vector<int> dims(feature_dim);
    std::iota(dims.begin(), dims.end(), 0);
    std::shuffle(dims.begin(), dims.end(), eng);
    int m = num_masked_dims(feature_dim, f);
    t.dim_mask = Mat(1, feature_dim, 0.0);
    for (int i = 0; i < m; ++i) t.dim_mask.at(0, dims[i]) = 1.0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < feature_dim; ++j) {
            // additive perturbation drawn uniformly over the observed range
            std::uniform_real_distribution<double> du(range.lo.at(0, j), range.hi.at(0, j));
            t.delta.at(i, j) = du(eng);
        }
    return t;
}

std::vector<int> random_positions(int graph_nodes, double n_tri, uint64_t seed) {
    int k = num_poison_nodes(graph_nodes, n_tri);
    std::vector<int> nodes(graph_nodes);
    std::iota(nodes.begin(), nodes.end(), 0);
    auto eng = rng::engine(seed, {0x504f53ULL});
    std::shuffle(nodes.begin(), nodes.end(), eng);
    nodes.resize(k);
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

namespace {

// One generator gradient step on one graph against the frozen global model.
// The objective switches to flipping the prediction to the target class while
// keeping the homophily penalty; the generator parameters are the optimizer
// state, so a warm start from training-time generator weights carries over
// directly. The loss path uses the raw perturbation without the dimension
// mask or value-range clamp: both are enforced when the trigger is emitted,
// and hard-applying them here would zero the gradient for every dimension
// outside the current mask or any entry resting on the range boundary.
double stage2_step(MaliciousContext& mc, const GnnParams& model, const Graph& g,
                   const ExperimentConfig& cfg) {
    touch();
    int kg = num_poison_nodes(g.num_nodes, cfg.n_tri);
    std::vector<int> positions = top_k_nodes(g, kg);

    ad::Tape t;
    GenBound gb = bind_generator(t, mc.gen);
    BoundGnn bm = bind_gnn(t, model, false);

    Mat in = generator_input(mc.gen, g, positions);
    ad::Var raw = generator_forward(t, gb, in);
    ad::Var scat = ad::row_scatter_add(raw, positions, g.num_nodes);
    ad::Var Xp = ad::add(t.constant(g.features), scat);

    ForwardResult fr = gnn_forward(t, bm, g, Xp);
    ad::Var loss = ad::add(ad::cross_entropy(fr.logits, cfg.target_class),
                           ad::scale(homophily_var(t, Xp, g, cfg.tau), cfg.lambda_homo));
    t.backward(loss);

    std::vector<ad::Var> vars = gb.all();
    std::vector<Mat*> mats = mc.gen.tensors();
    for (size_t i = 0; i < vars.size(); ++i) {
        const Mat& gmat = vars[i].grad();
        for (size_t j = 0; j < mats[i]->v.size(); ++j) mats[i]->v[j] -= cfg.eta_stage2 * gmat.v[j];
    }
    return loss.value().v[0];
}

// Emit a client's deployable trigger from its current generator: rank-aligned
// mean of the generator's perturbations over the client's poison set, with
// the feature budget applied via the dimension mask.
Trigger client_trigger(const MaliciousContext& mc, const Dataset& ds, int rows,
                       const ExperimentConfig& cfg) {
    Trigger trig;
    int d = ds.feature_dim;
    trig.delta = Mat(rows, d, 0.0);
    Mat counts(rows, 1, 0.0);
    for (int idx : mc.plan.poison_indices) {
        const Graph& g = ds.graphs[idx];
        int kg = num_poison_nodes(g.num_nodes, cfg.n_tri);
        std::vector<int> pos = top_k_nodes(g, kg);
        Mat raw = generator_perturbation(mc.gen, g, pos);
        for (int i = 0; i < kg; ++i) {
            counts.at(i, 0) += 1.0;
            for (int j = 0; j < d; ++j) trig.delta.at(i, j) += raw.at(i, j);
        }
    }
    for (int i = 0; i < rows; ++i)
        if (counts.at(i, 0) > 0)
            for (int j = 0; j < d; ++j) trig.delta.at(i, j) /= counts.at(i, 0);
    trig.dim_mask = select_dim_mask(trig.delta, cfg.f);
    return trig;
}

double trigger_asr(const Trigger& trig, const GnnParams& model, const Dataset& ds,
                   const std::vector<int>& test_indices, const FeatureRange& range,
                   const ExperimentConfig& cfg) {
    int hits = 0, total = 0;
    for (int idx : test_indices) {
        const Graph& g = ds.graphs[idx];
        if (g.label == cfg.target_class) continue;
        ++total;
        Graph poisoned = apply_trigger(g, trig, cfg.n_tri, range);
        if (predict(model, poisoned) == cfg.target_class) ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / total;
}

}  // namespace

Stage2Result stage2_finetune(std::vector<MaliciousContext>& clients, const GnnParams& global_model,
                             const Dataset& ds, const std::vector<int>& test_indices,
                             const ExperimentConfig& cfg) {
    if (clients.empty()) throw std::invalid_argument("stage2_finetune: no malicious clients");
    int rows = 1;
    for (const Graph& g : ds.graphs)
        rows = std::max(rows, num_poison_nodes(g.num_nodes, cfg.n_tri));

    std::vector<FeatureRange> ranges;
    for (MaliciousContext& mc : clients) {
        ranges.push_back(mc.range);
        if (cfg.cold_start)
            // cold-start ablation: discard the training-time generator and
            // optimize from zeroed parameters
            for (Mat* m : mc.gen.tensors()) std::fill(m->v.begin(), m->v.end(), 0.0);
    }
    FeatureRange merged = merge_ranges(ranges);

    Stage2Result result;
    result.range = merged;
    for (int epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
        double total_loss = 0.0;
        int steps = 0;
        for (MaliciousContext& mc : clients) {
            for (int idx : mc.plan.eligible) {
                total_loss += stage2_step(mc, global_model, ds.graphs[idx], cfg);
                ++steps;
            }
        }
        std::vector<Trigger> trigs;
        for (MaliciousContext& mc : clients) {
            mc.trigger = client_trigger(mc, ds, rows, cfg);
            trigs.push_back(mc.trigger);
        }
        result.trigger = aggregate_triggers(trigs, cfg.f);
        double asr = trigger_asr(result.trigger, global_model, ds, test_indices, merged, cfg);
        result.trace.push_back({epoch, asr, steps == 0 ? 0.0 : total_loss / steps});
    }
    if (cfg.stage2_epochs == 0) {
        std::vector<Trigger> trigs;
        for (MaliciousContext& mc : clients) {
            mc.trigger = client_trigger(mc, ds, rows, cfg);
            trigs.push_back(mc.trigger);
        }
        result.trigger = aggregate_triggers(trigs, cfg.f);
    }
    return result;
}

uint64_t shifter_activity_count() { return g_activity.load(std::memory_order_relaxed); }
void reset_shifter_activity() { g_activity.store(0, std::memory_order_relaxed); }

}  // namespace fedshift
