#include "fedshift/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace fedshift {

bool Graph::weighted() const {
    for (const Edge& e : edges)
        if (e.w != 1.0) return true;
    return false;
}

std::vector<std::vector<int>> Graph::adjacency() const {
    std::vector<std::set<int>> nb(num_nodes);
    for (const Edge& e : edges) {
        nb[e.u].insert(e.v);
        nb[e.v].insert(e.u);
    }
    std::vector<std::vector<int>> out(num_nodes);
    for (int i = 0; i < num_nodes; ++i) out[i].assign(nb[i].begin(), nb[i].end());
    return out;
}

int Graph::degree(int u) const {
    std::set<int> nb;
    for (const Edge& e : edges) {
        if (e.u == u) nb.insert(e.v);
        if (e.v == u) nb.insert(e.u);
    }
    return static_cast<int>(nb.size());
}

void normalize_edges(Graph& g) {
    std::map<std::pair<int, int>, double> uniq;
    for (const Edge& e : g.edges) {
        if (e.u == e.v) continue;
        if (e.u < 0 || e.v < 0 || e.u >= g.num_nodes || e.v >= g.num_nodes)
            throw std::out_of_range("edge endpoint out of range");
        int a = e.u, b = e.v;
        if (!g.directed && a > b) std::swap(a, b);
        uniq[{a, b}] = e.w;
    }
    g.edges.clear();
    for (const auto& [k, w] : uniq) g.edges.push_back({k.first, k.second, w});
}

namespace {

double unweighted_coeff(const Graph& g, int u) {
    auto adj = g.adjacency();
    const auto& nu = adj[u];
    int d = static_cast<int>(nu.size());
    if (d < 2) return 0.0;
    std::set<int> nu_set(nu.begin(), nu.end());
    int tri = 0;
    for (size_t i = 0; i < nu.size(); ++i)
        for (size_t j = i + 1; j < nu.size(); ++j) {
            const auto& nv = adj[nu[i]];
            if (std::binary_search(nv.begin(), nv.end(), nu[j])) ++tri;
        }
    return 2.0 * tri / (static_cast<double>(d) * (d - 1));
}

double weighted_coeff(const Graph& g, int u) {
    double wmax = 0.0;
    for (const Edge& e : g.edges) wmax = std::max(wmax, e.w);
    if (wmax <= 0.0) return 0.0;
    std::map<std::pair<int, int>, double> w;
    for (const Edge& e : g.edges) {
        w[{e.u, e.v}] = e.w / wmax;
        w[{e.v, e.u}] = e.w / wmax;
    }
    auto adj = g.adjacency();
    const auto& nu = adj[u];
    int d = static_cast<int>(nu.size());
    if (d < 2) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < nu.size(); ++i)
        for (size_t j = i + 1; j < nu.size(); ++j) {
            auto it = w.find({nu[i], nu[j]});
            if (it == w.end()) continue;
            s += std::cbrt(w[{u, nu[i]}] * w[{u, nu[j]}] * it->second);
        }
    // Ordered pairs (v, w): each unordered pair counts twice.
    return 2.0 * s / (static_cast<double>(d) * (d - 1));
}

double directed_coeff(const Graph& g, int u) {
    std::set<std::pair<int, int>> arc;
    for (const Edge& e : g.edges) arc.insert({e.u, e.v});
    auto has = [&](int a, int b) { return arc.count({a, b}) ? 1 : 0; };
    int din = 0, dout = 0, drecip = 0;
    std::set<int> nb;
    for (const Edge& e : g.edges) {
        if (e.u == u) {
            ++dout;
            nb.insert(e.v);
            if (has(e.v, u)) ++drecip;
        }
        if (e.v == u) {
            ++din;
            nb.insert(e.u);
        }
    }
    int dtot = din + dout;
    double denom = static_cast<double>(dtot) * (dtot - 1) - 2.0 * drecip;
    if (denom <= 0.0) return 0.0;
    // T_d(u) = (1/2) sum over ordered neighbor pairs of the directed
    // triangle indicator products (Fagiolo's formulation).
    std::vector<int> nbv(nb.begin(), nb.end());
    double td2 = 0.0;  // 2 * T_d(u) = sum over ordered pairs
    for (int v : nbv)
        for (int w : nbv) {
            if (v == w) continue;
            td2 += static_cast<double>((has(u, v) + has(v, u)) * (has(u, w) + has(w, u)) *
                                       (has(v, w) + has(w, v)));
        }
    // c(u) = 2 T_d / denom with T_d = td2 / 2.
    return td2 / denom;
}

}  // namespace

double clustering_coefficient(const Graph& g, int u) {
    if (u < 0 || u >= g.num_nodes)
        throw std::out_of_range("clustering_coefficient: node " + std::to_string(u) +
                                " out of range (n=" + std::to_string(g.num_nodes) + ")");
    if (g.directed) return directed_coeff(g, u);
    if (g.weighted()) return weighted_coeff(g, u);
    return unweighted_coeff(g, u);
}

std::vector<int> top_k_nodes(const Graph& g, int k) {
    if (k < 1 || k > g.num_nodes)
        throw std::invalid_argument("top_k_nodes: k=" + std::to_string(k) + " invalid for n=" +
                                    std::to_string(g.num_nodes));
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(g.num_nodes);
    for (int u = 0; u < g.num_nodes; ++u) ranked.emplace_back(clustering_coefficient(g, u), u);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = ranked[i].second;
    return out;
}

}  // namespace fedshift
