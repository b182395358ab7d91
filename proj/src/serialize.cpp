#include "fedshift/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedshift {

const std::string& Record::get_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    throw std::runtime_error("record: missing meta '" + key + "'");
}

const Mat& Record::get_tensor(const std::string& name) const {
    for (const auto& [k, m] : tensors)
        if (k == name) return m;
    throw std::runtime_error("record: missing tensor '" + name + "'");
}

void save_record(const Record& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "fedshift-ckpt v1\n";
    for (const auto& [k, v] : rec.meta) out << "meta " << k << " " << v << "\n";
    char buf[64];
    for (const auto& [name, m] : rec.tensors) {
        out << "tensor " << name << " " << m.rows << " " << m.cols << "\n";
        for (int i = 0; i < m.rows; ++i) {
            for (int j = 0; j < m.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
                out << (j ? " " : "") << buf;
            }
            out << "\n";
        }
    }
}

Record load_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "fedshift-ckpt v1")
        throw std::runtime_error(path + ": bad checkpoint header");
    Record rec;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            std::string k, v;
            ss >> k >> v;
            rec.meta.emplace_back(k, v);
        } else if (tag == "tensor") {
            std::string name;
            int r, c;
            ss >> name >> r >> c;
            Mat m(r, c);
            for (int i = 0; i < r; ++i) {
                if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated tensor");
                std::istringstream row(line);
                for (int j = 0; j < c; ++j)
                    if (!(row >> m.at(i, j)))
                        throw std::runtime_error(path + ": bad tensor row");
            }
            rec.tensors.emplace_back(name, std::move(m));
        } else {
            throw std::runtime_error(path + ": unknown record tag '" + tag + "'");
        }
    }
    return rec;
}

}  // namespace fedshift
