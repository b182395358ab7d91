#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedshift/mat.hpp"

namespace fedshift {

// Flat text checkpoint: a versioned header, "meta key value" lines for the
// architecture descriptor, then named row-major tensor dumps. Shared by
// GNN and shifter-generator checkpoints.
struct Record {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, Mat>> tensors;

    const std::string& get_meta(const std::string& key) const;
    const Mat& get_tensor(const std::string& name) const;
};

void save_record(const Record& rec, const std::string& path);
Record load_record(const std::string& path);

}  // namespace fedshift
