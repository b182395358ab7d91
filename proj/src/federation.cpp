#include "fedshift/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedshift/rng.hpp"

namespace fedshift {

namespace {

constexpr uint64_t kTagClient = 0x434c49ULL;
constexpr uint64_t kTagRound = 0x524f55ULL;
constexpr uint64_t kTagGlobal = 0x474c4fULL;
constexpr uint64_t kTagBaseline = 0x42415345ULL;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double norm(const std::vector<double>& a) {
    double s = 0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0;
    for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot / (na * nb);
}

}  // namespace

std::vector<double> flatten_params(const GnnParams& p) {
    std::vector<double> out;
    for (const Mat* m : p.tensors()) out.insert(out.end(), m->v.begin(), m->v.end());
    return out;
}

void unflatten_params(GnnParams& p, const std::vector<double>& flat) {
    size_t off = 0;
    for (Mat* m : p.tensors()) {
        if (off + m->v.size() > flat.size())
            throw std::invalid_argument("unflatten_params: vector too short");
        std::copy(flat.begin() + off, flat.begin() + off + m->v.size(), m->v.begin());
        off += m->v.size();
    }
    if (off != flat.size()) throw std::invalid_argument("unflatten_params: vector too long");
}

std::vector<double> fedavg_aggregate(const std::vector<std::vector<double>>& updates,
                                     const std::vector<double>& weights) {
    if (updates.empty()) throw std::invalid_argument("fedavg: no updates");
    if (weights.size() != updates.size())
        throw std::invalid_argument("fedavg: weight count mismatch");
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (wsum <= 0) throw std::invalid_argument("fedavg: non-positive weight sum");
    std::vector<double> out(updates[0].size(), 0.0);
    for (size_t i = 0; i < updates.size(); ++i) {
        if (updates[i].size() != out.size())
            throw std::invalid_argument("fedavg: update size mismatch");
        double w = weights[i] / wsum;
        for (size_t j = 0; j < out.size(); ++j) out[j] += w * updates[i][j];
    }
    return out;
}

int krum_select(const std::vector<std::vector<double>>& updates, int f_byz) {
    int n = static_cast<int>(updates.size());
    int keep = n - f_byz - 2;
    if (keep < 1)
        throw std::invalid_argument("krum: needs at least f + 3 clients, got " +
                                    std::to_string(n) + " with f = " + std::to_string(f_byz));
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) d[i][j] = d[j][i] = sq_dist(updates[i], updates[j]);
    int best = -1;
    double best_score = 0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> row;
        for (int j = 0; j < n; ++j)
            if (j != i) row.push_back(d[i][j]);
        std::sort(row.begin(), row.end());
        double score = std::accumulate(row.begin(), row.begin() + keep, 0.0);
        if (best < 0 || score < best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

std::vector<double> bulyan_aggregate(const std::vector<std::vector<double>>& updates, int f_byz) {
    int n = static_cast<int>(updates.size());
    if (n < 4 * f_byz + 3)
        throw std::invalid_argument("bulyan: needs at least 4f + 3 clients, got " +
                                    std::to_string(n) + " with f = " + std::to_string(f_byz));
    int sel_count = n - 2 * f_byz;
    // iterated selection: repeatedly pick the most central remaining update
    std::vector<int> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<int> selected;
    while (static_cast<int>(selected.size()) < sel_count) {
        std::vector<std::vector<double>> pool;
        for (int idx : remaining) pool.push_back(updates[idx]);
        // the pool shrinks as picks accumulate; clamp f so the selection
        // rule stays well-defined on the tail
        int pick = pool.size() <= 2
                       ? 0
                       : krum_select(pool, std::min(f_byz, static_cast<int>(pool.size()) - 3));
        selected.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + pick);
    }
    int beta = sel_count - 2 * f_byz;
    size_t dim = updates[0].size();
    std::vector<double> out(dim, 0.0);
    std::vector<double> col(selected.size());
    for (size_t j = 0; j < dim; ++j) {
        for (size_t i = 0; i < selected.size(); ++i) col[i] = updates[selected[i]][j];
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        double median = sorted.size() % 2 == 1
                            ? sorted[sorted.size() / 2]
                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
        // beta values closest to the median
        std::sort(sorted.begin(), sorted.end(), [median](double a, double b) {
            double da = std::fabs(a - median), db = std::fabs(b - median);
            if (da != db) return da < db;
            return a < b;
        });
        double s = 0;
        for (int i = 0; i < beta; ++i) s += sorted[i];
        out[j] = s / beta;
    }
    return out;
}

void FoolsGoldState::accumulate(const std::vector<std::vector<double>>& deltas) {
    if (history.empty()) history.assign(deltas.size(), std::vector<double>(deltas[0].size(), 0.0));
    if (history.size() != deltas.size())
        throw std::invalid_argument("foolsgold: client count changed");
    for (size_t i = 0; i < deltas.size(); ++i)
        for (size_t j = 0; j < deltas[i].size(); ++j) history[i][j] += deltas[i][j];
}

std::vector<double> foolsgold_weights(const FoolsGoldState& state) {
    int n = static_cast<int>(state.history.size());
    std::vector<double> w(n, 0.0);
    if (n == 0) return w;
    bool any = false;
    for (const auto& h : state.history)
        if (norm(h) > 0) any = true;
    if (!any) return w;  // no history yet -> caller falls back

    std::vector<std::vector<double>> cs(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) cs[i][j] = cos_sim(state.history[i], state.history[j]);
    std::vector<double> v(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) v[i] = std::max(v[i], cs[i][j]);
    // pardoning: discount similarity against clients with a higher peak
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && v[j] > v[i] && v[j] > 0) cs[i][j] *= v[i] / v[j];
    for (int i = 0; i < n; ++i) {
        double mx = 0.0;
        for (int j = 0; j < n; ++j)
            if (i != j) mx = std::max(mx, cs[i][j]);
        w[i] = 1.0 - mx;
    }
    double wmax = *std::max_element(w.begin(), w.end());
    if (wmax <= 0) return std::vector<double>(n, 0.0);
    for (double& x : w) x /= wmax;
    const double eps = 1e-9;
    for (double& x : w) {
        double c = std::min(std::max(x, eps), 1.0 - eps);
        c = std::log(c / (1.0 - c)) + 0.5;
        x = std::min(std::max(c, 0.0), 1.0);
    }
    return w;
}

RandomAttackClient make_baseline_client(const ExperimentConfig& cfg, const Dataset& ds,
                                        const Partition& part, int client) {
    int rows = 1;
    for (const Graph& g : ds.graphs)
        rows = std::max(rows, num_poison_nodes(g.num_nodes, cfg.n_tri));
    RandomAttackClient bc;
    bc.range = compute_feature_range(ds, part.client_indices[client]);
    // colluding clients share one trigger (seed does not involve the client
    // id), so the pattern trained into the model is the one used at test time
    bc.trigger = make_random_trigger(rows, ds.feature_dim, cfg.f, bc.range,
                                     rng::derive(cfg.seed, {kTagBaseline}));
    std::vector<int> eligible;
    for (int idx : part.client_indices[client])
        if (ds.graphs[idx].label != cfg.target_class) eligible.push_back(idx);
    std::sort(eligible.begin(), eligible.end());
    auto eng = rng::engine(cfg.seed, {kTagBaseline, (uint64_t)client, 1});
    std::shuffle(eligible.begin(), eligible.end(), eng);
    int count = std::min<int>(static_cast<int>(std::ceil(cfg.p * eligible.size())),
                              static_cast<int>(eligible.size()));
    eligible.resize(count);
    std::sort(eligible.begin(), eligible.end());
    bc.poison = eligible;
    return bc;
}

std::vector<int> baseline_positions(const ExperimentConfig& cfg, int graph_nodes,
                                    int graph_index) {
    return random_positions(graph_nodes, cfg.n_tri,
                            rng::derive(cfg.seed, {kTagBaseline, 2, (uint64_t)graph_index}));
}

TrainingResult run_training(const ExperimentConfig& cfg, const Dataset& ds,
                            const Partition& part, std::vector<MaliciousContext>* malicious) {
    int n = cfg.num_clients;
    if (static_cast<int>(part.client_indices.size()) != n)
        throw std::invalid_argument("run_training: partition/client count mismatch");
    int cm = cfg.attack == "none" ? 0 : cfg.num_malicious;
    if (cfg.attack == "fedshift") {
        if (!malicious || static_cast<int>(malicious->size()) != cm)
            throw std::invalid_argument("run_training: need one malicious context per attacker");
    }

    GnnConfig gcfg;
    gcfg.kind = cfg.model == "gcn" ? GnnKind::GCN : GnnKind::GAT;
    gcfg.layers = cfg.layers;
    gcfg.hidden = cfg.hidden;
    GnnParams global = GnnParams::init(gcfg, ds.feature_dim, ds.num_classes,
                                       rng::derive(cfg.seed, {kTagGlobal}));

    // random-trigger baseline: a fixed trigger + poison set per attacker
    std::vector<RandomAttackClient> baseline;
    if (cfg.attack == "random")
        for (int i = 0; i < cm; ++i) baseline.push_back(make_baseline_client(cfg, ds, part, i));

    FoolsGoldState fg;
    TrainingResult result;
    std::vector<double> weights(n, 1.0);
    if (cfg.weighted_fedavg)
        for (int i = 0; i < n; ++i) weights[i] = static_cast<double>(part.client_indices[i].size());

    for (int t = 1; t <= cfg.rounds; ++t) {
        std::vector<double> base = flatten_params(global);
        std::vector<std::vector<double>> updates;
        RoundRecord rec;
        rec.round = t;
        rec.aggregator = cfg.aggregator;

        for (int i = 0; i < n; ++i) {
            GnnParams local = global;
            uint64_t seed = rng::derive(cfg.seed, {kTagClient, (uint64_t)i, kTagRound, (uint64_t)t});
            bool is_mal = i < cm;
            if (is_mal && cfg.attack == "fedshift") {
                MaliciousContext& mc = (*malicious)[i];
                if (cfg.fl_tune) fl_tune_round(mc, global, cfg, t);
                Dataset view;
                view.num_classes = ds.num_classes;
                view.feature_dim = ds.feature_dim;
                std::vector<int> local_idx;
                for (int idx : part.client_indices[i]) {
                    bool poisoned = std::binary_search(mc.plan.poison_indices.begin(),
                                                      mc.plan.poison_indices.end(), idx);
                    view.graphs.push_back(poisoned ? poisoned_view(mc, idx, cfg) : ds.graphs[idx]);
                    local_idx.push_back(static_cast<int>(view.graphs.size()) - 1);
                }
                train_local(local, view, local_idx, cfg.local_epochs, cfg.lr, seed,
                            cfg.batch_size);
            } else if (is_mal && cfg.attack == "random") {
                const RandomAttackClient& bc = baseline[i];
                Dataset view;
                view.num_classes = ds.num_classes;
                view.feature_dim = ds.feature_dim;
                std::vector<int> local_idx;
                for (int idx : part.client_indices[i]) {
                    bool poisoned = std::binary_search(bc.poison.begin(), bc.poison.end(), idx);
                    if (poisoned) {
                        Graph g = apply_trigger_at(
                            ds.graphs[idx], bc.trigger,
                            baseline_positions(cfg, ds.graphs[idx].num_nodes, idx), bc.range);
                        if (cfg.baseline_flip_labels) g.label = cfg.target_class;
                        view.graphs.push_back(std::move(g));
                    } else {
                        view.graphs.push_back(ds.graphs[idx]);
                    }
                    local_idx.push_back(static_cast<int>(view.graphs.size()) - 1);
                }
                train_local(local, view, local_idx, cfg.local_epochs, cfg.lr, seed,
                            cfg.batch_size);
            } else {
                train_local(local, ds, part.client_indices[i], cfg.local_epochs, cfg.lr, seed,
                            cfg.batch_size);
            }
            std::vector<double> flat = flatten_params(local);
            std::vector<double> delta(flat.size());
            for (size_t j = 0; j < flat.size(); ++j) delta[j] = flat[j] - base[j];
            rec.update_norms.push_back(norm(delta));
            updates.push_back(std::move(flat));
        }

        std::vector<double> next;
        if (cfg.aggregator == "fedavg") {
            next = fedavg_aggregate(updates, weights);
        } else if (cfg.aggregator == "krum") {
            int sel = krum_select(updates, cfg.num_malicious);
            rec.info = "selected client " + std::to_string(sel);
            next = updates[sel];
        } else if (cfg.aggregator == "bulyan") {
            next = bulyan_aggregate(updates, cfg.num_malicious);
        } else if (cfg.aggregator == "foolsgold") {
            std::vector<double> w = foolsgold_weights(fg);
            double wsum = std::accumulate(w.begin(), w.end(), 0.0);
            if (wsum <= 0) {
                rec.info = "no history signal; plain average";
                next = fedavg_aggregate(updates, std::vector<double>(n, 1.0));
            } else {
                next = fedavg_aggregate(updates, w);
            }
            std::vector<std::vector<double>> deltas;
            for (const auto& u : updates) {
                std::vector<double> d(u.size());
                for (size_t j = 0; j < u.size(); ++j) d[j] = u[j] - base[j];
                deltas.push_back(std::move(d));
            }
            fg.accumulate(deltas);
        } else {
            throw std::invalid_argument("unknown aggregator " + cfg.aggregator);
        }
        unflatten_params(global, next);
        rec.oa = evaluate_accuracy(global, ds, part.test_indices);
        result.rounds.push_back(std::move(rec));
    }
    result.model = std::move(global);
    return result;
}

}  // namespace fedshift
