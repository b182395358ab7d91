#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedshift/dataset.hpp"

namespace fs = std::filesystem;

namespace fedshift {

namespace {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail(const std::string& file, int line, const std::string& what) {
    throw ParseError(file + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    for (std::string& s : out) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
    }
    return out;
}

long parse_int(const std::string& s, const std::string& file, int line) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(file, line, "non-numeric field '" + s + "'");
    }
}

double parse_real(const std::string& s, const std::string& file, int line) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(file, line, "non-numeric field '" + s + "'");
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    // Trailing blank lines are common in TU dumps.
    while (!lines.empty() && split_fields(lines.back()).size() == 1 &&
           split_fields(lines.back())[0].empty())
        lines.pop_back();
    return lines;
}

std::string find_prefix(const std::string& directory) {
    for (const auto& entry : fs::directory_iterator(directory)) {
        std::string name = entry.path().filename().string();
        if (name.size() > 6 && name.substr(name.size() - 6) == "_A.txt")
            return (fs::path(directory) / name.substr(0, name.size() - 6)).string();
    }
    throw ParseError("no *_A.txt edge file found in " + directory);
}

}  // namespace

Dataset load_tu_dataset(const std::string& directory) {
    if (!fs::is_directory(directory))
        throw std::runtime_error("load_tu_dataset: not a directory: " + directory);
    std::string prefix = find_prefix(directory);
    std::string f_edges = prefix + "_A.txt";
    std::string f_ind = prefix + "_graph_indicator.txt";
    std::string f_glab = prefix + "_graph_labels.txt";
    std::string f_nattr = prefix + "_node_attributes.txt";
    std::string f_nlab = prefix + "_node_labels.txt";
    for (const std::string& f : {f_ind, f_glab})
        if (!fs::exists(f)) throw ParseError("missing mandatory file " + f);

    // Node -> graph assignment (1-indexed graph ids).
    auto ind_lines = read_lines(f_ind);
    int num_nodes_total = static_cast<int>(ind_lines.size());
    std::vector<int> node_graph(num_nodes_total);
    int num_graphs = 0;
    for (int i = 0; i < num_nodes_total; ++i) {
        long gid = parse_int(split_fields(ind_lines[i])[0], f_ind, i + 1);
        if (gid < 1) fail(f_ind, i + 1, "graph id must be >= 1");
        node_graph[i] = static_cast<int>(gid - 1);
        num_graphs = std::max(num_graphs, static_cast<int>(gid));
    }

    auto glab_lines = read_lines(f_glab);
    if (static_cast<int>(glab_lines.size()) != num_graphs)
        fail(f_glab, static_cast<int>(glab_lines.size()),
             "expected " + std::to_string(num_graphs) + " graph labels");
    std::vector<long> raw_labels(num_graphs);
    for (int i = 0; i < num_graphs; ++i)
        raw_labels[i] = parse_int(split_fields(glab_lines[i])[0], f_glab, i + 1);
    std::vector<long> uniq = raw_labels;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < 2) throw ParseError(f_glab + ": fewer than 2 classes");
    std::map<long, int> label_map;
    for (size_t i = 0; i < uniq.size(); ++i) label_map[uniq[i]] = static_cast<int>(i);

    // Local node indices within each graph.
    std::vector<int> local_index(num_nodes_total);
    std::vector<int> graph_size(num_graphs, 0);
    for (int i = 0; i < num_nodes_total; ++i) local_index[i] = graph_size[node_graph[i]]++;

    // Features: attributes if present and non-empty, else one-hot node
    // labels, else all-ones.
    int feat_dim = 0;
    Mat all_feats;
    bool have_attrs = fs::exists(f_nattr) && fs::file_size(f_nattr) > 0;
    if (have_attrs) {
        auto lines = read_lines(f_nattr);
        if (static_cast<int>(lines.size()) != num_nodes_total)
            fail(f_nattr, static_cast<int>(lines.size()),
                 "expected " + std::to_string(num_nodes_total) + " attribute rows");
        auto first = split_fields(lines[0]);
        feat_dim = static_cast<int>(first.size());
        all_feats = Mat(num_nodes_total, feat_dim);
        for (int i = 0; i < num_nodes_total; ++i) {
            auto fields = split_fields(lines[i]);
            if (static_cast<int>(fields.size()) != feat_dim)
                fail(f_nattr, i + 1, "inconsistent attribute count");
            for (int j = 0; j < feat_dim; ++j)
                all_feats.at(i, j) = parse_real(fields[j], f_nattr, i + 1);
        }
    } else if (fs::exists(f_nlab)) {
        auto lines = read_lines(f_nlab);
        if (static_cast<int>(lines.size()) != num_nodes_total)
            fail(f_nlab, static_cast<int>(lines.size()),
                 "expected " + std::to_string(num_nodes_total) + " node label rows");
        std::vector<long> nl(num_nodes_total);
        for (int i = 0; i < num_nodes_total; ++i)
            nl[i] = parse_int(split_fields(lines[i])[0], f_nlab, i + 1);
        std::vector<long> nu = nl;
        std::sort(nu.begin(), nu.end());
        nu.erase(std::unique(nu.begin(), nu.end()), nu.end());
        std::map<long, int> nmap;
        for (size_t i = 0; i < nu.size(); ++i) nmap[nu[i]] = static_cast<int>(i);
        feat_dim = static_cast<int>(nu.size());
        all_feats = Mat(num_nodes_total, feat_dim);
        for (int i = 0; i < num_nodes_total; ++i) all_feats.at(i, nmap[nl[i]]) = 1.0;
    } else {
        feat_dim = 1;
        all_feats = Mat(num_nodes_total, 1, 1.0);
    }

    Dataset ds;
    ds.name = fs::path(prefix).filename().string();
    ds.num_classes = static_cast<int>(uniq.size());
    ds.feature_dim = feat_dim;
    ds.graphs.resize(num_graphs);
    for (int g = 0; g < num_graphs; ++g) {
        ds.graphs[g].num_nodes = graph_size[g];
        ds.graphs[g].label = label_map[raw_labels[g]];
        ds.graphs[g].features = Mat(graph_size[g], feat_dim);
    }
    for (int i = 0; i < num_nodes_total; ++i)
        for (int j = 0; j < feat_dim; ++j)
            ds.graphs[node_graph[i]].features.at(local_index[i], j) = all_feats.at(i, j);

    if (!fs::exists(f_edges)) throw ParseError("missing mandatory file " + f_edges);
    auto edge_lines = read_lines(f_edges);
    for (int i = 0; i < static_cast<int>(edge_lines.size()); ++i) {
        auto fields = split_fields(edge_lines[i]);
        if (fields.size() < 2) fail(f_edges, i + 1, "expected 'u, v' row");
        long u = parse_int(fields[0], f_edges, i + 1);
        long v = parse_int(fields[1], f_edges, i + 1);
        if (u < 1 || u > num_nodes_total || v < 1 || v > num_nodes_total)
            fail(f_edges, i + 1,
                 "node id out of indicator range [1, " + std::to_string(num_nodes_total) + "]");
        int gu = node_graph[u - 1], gv = node_graph[v - 1];
        if (gu != gv) fail(f_edges, i + 1, "edge crosses graph boundary");
        ds.graphs[gu].edges.push_back(
            {local_index[u - 1], local_index[v - 1], 1.0});
    }
    for (Graph& g : ds.graphs) normalize_edges(g);
    return ds;
}

void save_tu_dataset(const Dataset& ds, const std::string& directory) {
    fs::create_directories(directory);
    std::string prefix = (fs::path(directory) / ds.name).string();
    std::ofstream fa(prefix + "_A.txt"), fi(prefix + "_graph_indicator.txt"),
        fl(prefix + "_graph_labels.txt"), fn(prefix + "_node_attributes.txt");
    int base = 0;
    for (size_t g = 0; g < ds.graphs.size(); ++g) {
        const Graph& gr = ds.graphs[g];
        fl << gr.label << "\n";
        for (int i = 0; i < gr.num_nodes; ++i) {
            fi << (g + 1) << "\n";
            char buf[64];
            for (int j = 0; j < ds.feature_dim; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", gr.features.at(i, j));
                fn << (j ? ", " : "") << buf;
            }
            fn << "\n";
        }
        for (const Edge& e : gr.edges) {
            fa << (base + e.u + 1) << ", " << (base + e.v + 1) << "\n";
            if (!gr.directed) fa << (base + e.v + 1) << ", " << (base + e.u + 1) << "\n";
        }
        base += gr.num_nodes;
    }
}

}  // namespace fedshift
