#include "fedshift/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fedshift {

namespace {

struct Field {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

template <typename T>
T parse_as(const std::string& s, const std::string& key);

template <>
int parse_as<int>(const std::string& s, const std::string& key) {
    size_t pos = 0;
    int v;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + s + "'");
    }
    if (pos != s.size())
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

template <>
double parse_as<double>(const std::string& s, const std::string& key) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + s + "'");
    }
    if (pos != s.size())
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + s + "'");
    return v;
}

template <>
uint64_t parse_as<uint64_t>(const std::string& s, const std::string& key) {
    size_t pos = 0;
    unsigned long long v;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" +
                                    s + "'");
    }
    if (pos != s.size())
        throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" +
                                    s + "'");
    return v;
}

template <>
bool parse_as<bool>(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + s + "'");
}

template <>
std::string parse_as<std::string>(const std::string& s, const std::string&) {
    return s;
}

template <typename T>
Field field(const std::string& name, T ExperimentConfig::* member) {
    Field f;
    f.name = name;
    f.set = [name, member](ExperimentConfig& c, const std::string& v) {
        c.*member = parse_as<T>(v, name);
    };
    f.get = [member](const ExperimentConfig& c) {
        if constexpr (std::is_same_v<T, double>) return fmt_double(c.*member);
        else if constexpr (std::is_same_v<T, bool>) return std::string((c.*member) ? "true" : "false");
        else if constexpr (std::is_same_v<T, std::string>) return c.*member;
        else return std::to_string(c.*member);
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        field("dataset", &ExperimentConfig::dataset),
        field("syn_graphs_per_class", &ExperimentConfig::syn_graphs_per_class),
        field("syn_min_nodes", &ExperimentConfig::syn_min_nodes),
        field("syn_max_nodes", &ExperimentConfig::syn_max_nodes),
        field("syn_feature_dim", &ExperimentConfig::syn_feature_dim),
        field("train_ratio", &ExperimentConfig::train_ratio),
        field("num_clients", &ExperimentConfig::num_clients),
        field("num_malicious", &ExperimentConfig::num_malicious),
        field("rounds", &ExperimentConfig::rounds),
        field("aggregator", &ExperimentConfig::aggregator),
        field("weighted_fedavg", &ExperimentConfig::weighted_fedavg),
        field("local_epochs", &ExperimentConfig::local_epochs),
        field("lr", &ExperimentConfig::lr),
        field("batch_size", &ExperimentConfig::batch_size),
        field("model", &ExperimentConfig::model),
        field("hidden", &ExperimentConfig::hidden),
        field("layers", &ExperimentConfig::layers),
        field("attack", &ExperimentConfig::attack),
        field("target_class", &ExperimentConfig::target_class),
        field("p", &ExperimentConfig::p),
        field("f", &ExperimentConfig::f),
        field("n_tri", &ExperimentConfig::n_tri),
        field("k", &ExperimentConfig::k),
        field("lambda_dist", &ExperimentConfig::lambda_dist),
        field("lambda_homo", &ExperimentConfig::lambda_homo),
        field("lambda_ce", &ExperimentConfig::lambda_ce),
        field("tau", &ExperimentConfig::tau),
        field("eta", &ExperimentConfig::eta),
        field("stage1_epochs", &ExperimentConfig::stage1_epochs),
        field("pretrain_epochs", &ExperimentConfig::pretrain_epochs),
        field("fl_tune", &ExperimentConfig::fl_tune),
        field("tune_epochs", &ExperimentConfig::tune_epochs),
        field("recluster_rounds", &ExperimentConfig::recluster_rounds),
        field("stage2", &ExperimentConfig::stage2),
        field("stage2_epochs", &ExperimentConfig::stage2_epochs),
        field("eta_stage2", &ExperimentConfig::eta_stage2),
        field("cold_start", &ExperimentConfig::cold_start),
        field("baseline_flip_labels", &ExperimentConfig::baseline_flip_labels),
        field("generator", &ExperimentConfig::generator),
        field("gen_hidden", &ExperimentConfig::gen_hidden),
        field("seed", &ExperimentConfig::seed),
        field("repetitions", &ExperimentConfig::repetitions),
    };
    return table;
}

const Field& find_field(const std::string& key) {
    for (const Field& f : fields())
        if (f.name == key) return f;
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        find_field(key).set(cfg, value);
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

void apply_override(ExperimentConfig& cfg, const std::string& key_value) {
    size_t eq = key_value.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be key=value, got '" + key_value + "'");
    std::string key = trim(key_value.substr(0, eq));
    std::string value = trim(key_value.substr(eq + 1));
    find_field(key).set(cfg, value);
}

std::vector<std::string> validate(const ExperimentConfig& c) {
    std::vector<std::string> errs;
    auto req = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    req(c.num_clients >= 2, "num_clients must be >= 2");
    req(c.num_malicious >= 0 && c.num_malicious < c.num_clients,
        "num_malicious must be in [0, num_clients)");
    req(c.rounds >= 0, "rounds must be >= 0");
    req(c.train_ratio > 0 && c.train_ratio < 1, "train_ratio must be in (0, 1)");
    req(c.p >= 0 && c.p <= 1, "p must be in [0, 1]");
    req(c.f > 0 && c.f <= 1, "f must be in (0, 1]");
    req(c.n_tri > 0 && c.n_tri <= 1, "n_tri must be in (0, 1]");
    req(c.k >= 1, "k must be >= 1");
    req(c.tau >= -1 && c.tau <= 1, "tau must be in [-1, 1]");
    req(c.lr > 0, "lr must be > 0");
    req(c.eta > 0, "eta must be > 0");
    req(c.eta_stage2 > 0, "eta_stage2 must be > 0");
    req(c.local_epochs >= 0, "local_epochs must be >= 0");
    req(c.stage1_epochs >= 0, "stage1_epochs must be >= 0");
    req(c.stage2_epochs >= 0, "stage2_epochs must be >= 0");
    req(c.pretrain_epochs >= 0, "pretrain_epochs must be >= 0");
    req(c.tune_epochs >= 0, "tune_epochs must be >= 0");
    req(c.recluster_rounds >= 1, "recluster_rounds must be >= 1");
    req(c.target_class >= 0, "target_class must be >= 0");
    req(c.hidden >= 1, "hidden must be >= 1");
    req(c.layers >= 1, "layers must be >= 1");
    req(c.gen_hidden >= 1, "gen_hidden must be >= 1");
    req(c.batch_size >= 1, "batch_size must be >= 1");
    req(c.repetitions >= 1, "repetitions must be >= 1");
    req(c.syn_min_nodes >= 4 && c.syn_max_nodes >= c.syn_min_nodes,
        "synthetic node sizes must be >= 4 and ordered");
    req(c.syn_feature_dim >= 4, "syn_feature_dim must be >= 4");
    req(c.model == "gat" || c.model == "gcn", "model must be gat or gcn");
    req(c.generator == "mlp" || c.generator == "gcn", "generator must be mlp or gcn");
    req(c.attack == "fedshift" || c.attack == "random" || c.attack == "none",
        "attack must be fedshift, random or none");
    req(c.aggregator == "fedavg" || c.aggregator == "krum" || c.aggregator == "bulyan" ||
            c.aggregator == "foolsgold",
        "aggregator must be fedavg, krum, bulyan or foolsgold");
    return errs;
}

std::string to_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const Field& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
    return out;
}

}  // namespace fedshift
