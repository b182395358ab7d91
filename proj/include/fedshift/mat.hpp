#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedshift {

// Dense row-major matrix of doubles. The one numeric container shared by
// the autodiff tape, model parameters and dataset features.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
    }
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(r) * c)
            throw std::invalid_argument("Mat: data size does not match shape " + std::to_string(r) +
                                        "x" + std::to_string(c));
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    static Mat scalar(double x) { return Mat(1, 1, std::vector<double>{x}); }
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace fedshift
