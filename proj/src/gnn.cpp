#include "fedshift/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fedshift/rng.hpp"
#include "fedshift/serialize.hpp"

namespace fedshift {

namespace {

Mat glorot(int rows, int cols, std::mt19937_64& eng) {
    double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Mat m(rows, cols);
    for (double& x : m.v) x = u(eng);
    return m;
}

}  // namespace

GnnParams GnnParams::init(const GnnConfig& cfg, int in_dim, int num_classes, uint64_t seed) {
    if (cfg.layers < 1) throw std::invalid_argument("GnnParams: need >= 1 layer");
    GnnParams p;
    p.cfg = cfg;
    p.in_dim = in_dim;
    p.num_classes = num_classes;
    auto eng = rng::engine(seed, {0x474e4eULL});
    int in = in_dim;
    for (int l = 0; l < cfg.layers; ++l) {
        p.W.push_back(glorot(in, cfg.hidden, eng));
        if (cfg.kind == GnnKind::GAT) {
            p.a_src.push_back(glorot(cfg.hidden, 1, eng));
            p.a_dst.push_back(glorot(cfg.hidden, 1, eng));
        }
        in = cfg.hidden;
    }
    p.cls_W = glorot(cfg.hidden, num_classes, eng);
    p.cls_b = Mat(1, num_classes);
    return p;
}

std::vector<Mat*> GnnParams::tensors() {
    std::vector<Mat*> out;
    for (auto& m : W) out.push_back(&m);
    for (auto& m : a_src) out.push_back(&m);
    for (auto& m : a_dst) out.push_back(&m);
    out.push_back(&cls_W);
    out.push_back(&cls_b);
    return out;
}

std::vector<const Mat*> GnnParams::tensors() const {
    std::vector<const Mat*> out;
    for (auto& m : W) out.push_back(&m);
    for (auto& m : a_src) out.push_back(&m);
    for (auto& m : a_dst) out.push_back(&m);
    out.push_back(&cls_W);
    out.push_back(&cls_b);
    return out;
}

std::vector<ad::Var> BoundGnn::all() const {
    std::vector<ad::Var> out = W;
    out.insert(out.end(), a_src.begin(), a_src.end());
    out.insert(out.end(), a_dst.begin(), a_dst.end());
    out.push_back(cls_W);
    out.push_back(cls_b);
    return out;
}

BoundGnn bind_gnn(ad::Tape& tape, const GnnParams& p, bool requires_grad) {
    BoundGnn b;
    b.cfg = p.cfg;
    b.num_classes = p.num_classes;
    for (const Mat& m : p.W) b.W.push_back(tape.leaf(m, requires_grad));
    for (const Mat& m : p.a_src) b.a_src.push_back(tape.leaf(m, requires_grad));
    for (const Mat& m : p.a_dst) b.a_dst.push_back(tape.leaf(m, requires_grad));
    b.cls_W = tape.leaf(p.cls_W, requires_grad);
    b.cls_b = tape.leaf(p.cls_b, requires_grad);
    return b;
}

namespace {

// Symmetric-normalized adjacency with self-loops, as a dense constant.
Mat gcn_adjacency(const Graph& g) {
    int n = g.num_nodes;
    Mat A(n, n);
    for (int i = 0; i < n; ++i) A.at(i, i) = 1.0;
    for (const Edge& e : g.edges) {
        A.at(e.u, e.v) = 1.0;
        A.at(e.v, e.u) = 1.0;
    }
    std::vector<double> dinv(n);
    for (int i = 0; i < n; ++i) {
        double d = 0;
        for (int j = 0; j < n; ++j) d += A.at(i, j);
        dinv[i] = 1.0 / std::sqrt(d);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A.at(i, j) *= dinv[i] * dinv[j];
    return A;
}

// Directed edge list including self-loops; undirected edges contribute
// both directions. Attention flows src -> dst.
void gat_edges(const Graph& g, std::vector<int>& src, std::vector<int>& dst) {
    for (int i = 0; i < g.num_nodes; ++i) {
        src.push_back(i);
        dst.push_back(i);
    }
    for (const Edge& e : g.edges) {
        src.push_back(e.u);
        dst.push_back(e.v);
        if (!g.directed) {
            src.push_back(e.v);
            dst.push_back(e.u);
        }
    }
}

ad::Var gat_layer(ad::Tape& t, ad::Var H, ad::Var W, ad::Var a_s, ad::Var a_d,
                  const std::vector<int>& src, const std::vector<int>& dst, int n,
                  double attn_slope) {
    using namespace ad;
    Var HW = matmul(H, W);                       // n x h
    Var s1 = matmul(HW, a_s);                    // n x 1
    Var s2 = matmul(HW, a_d);                    // n x 1
    Var e = leaky_relu(add(row_gather(s1, src), row_gather(s2, dst)), attn_slope);  // E x 1
    // Per-destination softmax, stabilized by a stop-gradient group max.
    const Mat& ev = e.value();
    std::vector<double> gmax(n, -std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < dst.size(); ++i)
        gmax[dst[i]] = std::max(gmax[dst[i]], ev.at(static_cast<int>(i), 0));
    Mat shift(static_cast<int>(dst.size()), 1);
    for (size_t i = 0; i < dst.size(); ++i) shift.at(static_cast<int>(i), 0) = gmax[dst[i]];
    Var w = exp_v(sub(e, t.constant(std::move(shift))));
    Var denom = row_scatter_add(w, dst, n);      // n x 1
    Var alpha = div(w, row_gather(denom, dst));  // E x 1
    Var msg = mul(row_gather(HW, src), alpha);   // E x h, column broadcast
    return row_scatter_add(msg, dst, n);         // n x h
}

}  // namespace

ForwardResult gnn_forward(ad::Tape& tape, const BoundGnn& bp, const Graph& g, ad::Var X) {
    using namespace ad;
    if (X.value().cols != bp.W[0].value().rows)
        throw std::invalid_argument("gnn_forward: feature dim " +
                                    std::to_string(X.value().cols) + " != model input dim " +
                                    std::to_string(bp.W[0].value().rows));
    Var H = X;
    if (bp.cfg.kind == GnnKind::GCN) {
        Var Ahat = tape.constant(gcn_adjacency(g));
        for (size_t l = 0; l < bp.W.size(); ++l)
            H = leaky_relu(matmul(Ahat, matmul(H, bp.W[l])), bp.cfg.leaky_slope);
    } else {
        std::vector<int> src, dst;
        gat_edges(g, src, dst);
        for (size_t l = 0; l < bp.W.size(); ++l)
            H = leaky_relu(gat_layer(tape, H, bp.W[l], bp.a_src[l], bp.a_dst[l], src, dst,
                                     g.num_nodes, bp.cfg.attn_slope),
                           bp.cfg.leaky_slope);
    }
    Var emb = mean_rows(H);
    Var logits = add(matmul(emb, bp.cls_W), bp.cls_b);
    return {emb, logits};
}

Mat encode(const GnnParams& p, const Graph& g) {
    ad::Tape t;
    BoundGnn bp = bind_gnn(t, p, false);
    auto r = gnn_forward(t, bp, g, t.constant(g.features));
    return r.embedding.value();
}

Mat logits_of(const GnnParams& p, const Graph& g) {
    ad::Tape t;
    BoundGnn bp = bind_gnn(t, p, false);
    auto r = gnn_forward(t, bp, g, t.constant(g.features));
    return r.logits.value();
}

int predict(const GnnParams& p, const Graph& g) {
    Mat l = logits_of(p, g);
    int best = 0;
    for (int j = 1; j < l.cols; ++j)
        if (l.at(0, j) > l.at(0, best)) best = j;
    return best;
}

void train_local(GnnParams& p, const Dataset& ds, const std::vector<int>& indices, int epochs,
                 double lr, uint64_t seed, int batch_size) {
    if (indices.empty()) throw std::invalid_argument("train_local: empty graph list");
    std::vector<int> order = indices;
    for (int e = 0; e < epochs; ++e) {
        auto eng = rng::engine(seed, {0x545241ULL, static_cast<uint64_t>(e)});
        std::shuffle(order.begin(), order.end(), eng);
        for (size_t start = 0; start < order.size(); start += batch_size) {
            size_t end = std::min(order.size(), start + batch_size);
            ad::Tape t;
            BoundGnn bp = bind_gnn(t, p, true);
            ad::Var loss = t.constant(Mat::scalar(0.0));
            for (size_t i = start; i < end; ++i) {
                const Graph& g = ds.graphs[order[i]];
                auto r = gnn_forward(t, bp, g, t.constant(g.features));
                loss = ad::add(loss, ad::cross_entropy(r.logits, g.label));
            }
            loss = ad::scale(loss, 1.0 / static_cast<double>(end - start));
            t.backward(loss);
            auto vars = bp.all();
            auto mats = p.tensors();
            for (size_t i = 0; i < vars.size(); ++i) {
                const Mat& grad = vars[i].grad();
                Mat& m = *mats[i];
                for (size_t j = 0; j < m.v.size(); ++j) m.v[j] -= lr * grad.v[j];
            }
        }
    }
}

double evaluate_accuracy(const GnnParams& p, const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate_accuracy: empty graph list");
    int correct = 0;
    for (int i : indices)
        if (predict(p, ds.graphs[i]) == ds.graphs[i].label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void save_gnn(const GnnParams& p, const std::string& path) {
    Record rec;
    rec.meta = {{"kind", p.cfg.kind == GnnKind::GCN ? "gcn" : "gat"},
                {"layers", std::to_string(p.cfg.layers)},
                {"hidden", std::to_string(p.cfg.hidden)},
                {"in_dim", std::to_string(p.in_dim)},
                {"classes", std::to_string(p.num_classes)}};
    for (size_t l = 0; l < p.W.size(); ++l) rec.tensors.emplace_back("W" + std::to_string(l), p.W[l]);
    for (size_t l = 0; l < p.a_src.size(); ++l) {
        rec.tensors.emplace_back("a_src" + std::to_string(l), p.a_src[l]);
        rec.tensors.emplace_back("a_dst" + std::to_string(l), p.a_dst[l]);
    }
    rec.tensors.emplace_back("cls_W", p.cls_W);
    rec.tensors.emplace_back("cls_b", p.cls_b);
    save_record(rec, path);
}

GnnParams load_gnn(const std::string& path) {
    Record rec = load_record(path);
    GnnParams p;
    p.cfg.kind = rec.get_meta("kind") == "gcn" ? GnnKind::GCN : GnnKind::GAT;
    p.cfg.layers = std::stoi(rec.get_meta("layers"));
    p.cfg.hidden = std::stoi(rec.get_meta("hidden"));
    p.in_dim = std::stoi(rec.get_meta("in_dim"));
    p.num_classes = std::stoi(rec.get_meta("classes"));
    for (int l = 0; l < p.cfg.layers; ++l) {
        p.W.push_back(rec.get_tensor("W" + std::to_string(l)));
        if (p.cfg.kind == GnnKind::GAT) {
            p.a_src.push_back(rec.get_tensor("a_src" + std::to_string(l)));
            p.a_dst.push_back(rec.get_tensor("a_dst" + std::to_string(l)));
        }
    }
    p.cls_W = rec.get_tensor("cls_W");
    p.cls_b = rec.get_tensor("cls_b");
    return p;
}

uint64_t hash_params(const GnnParams& p) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const Mat* m : p.tensors()) {
        mix(&m->rows, sizeof(m->rows));
        mix(&m->cols, sizeof(m->cols));
        mix(m->v.data(), m->v.size() * sizeof(double));
    }
    return h;
}

}  // namespace fedshift
