#include "fedshift/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedshift::ad {

const Mat& Var::value() const { return tape->value_of(*this); }
const Mat& Var::grad() const { return tape->grad_of(*this); }
bool Var::requires_grad() const { return tape->requires_grad_of(*this); }

Var Tape::leaf(Mat value, bool requires_grad) {
    Node n;
    n.grad = Mat(value.rows, value.cols, 0.0);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Mat value, bool requires_grad) {
    return leaf(std::move(value), requires_grad);
}

void Tape::set_back(Var v, std::function<void(Tape&)> back) {
    nodes_[v.id].back = std::move(back);
}

void Tape::backward(Var out) {
    const Mat& ov = value_of(out);
    if (ov.rows != 1 || ov.cols != 1)
        throw std::invalid_argument("backward: output must be scalar, got " + ov.shape_str());
    grad_of(out).v[0] = 1.0;
    for (int i = out.id; i >= 0; --i) {
        if (nodes_[i].requires_grad && nodes_[i].back) nodes_[i].back(*this);
    }
}

namespace {

bool needs(Var a) { return a.requires_grad(); }
bool needs(Var a, Var b) { return a.requires_grad() || b.requires_grad(); }

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": vars from different tapes");
}

void accumulate(Mat& g, const Mat& d) {
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += d.v[i];
}

}  // namespace

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.cols != B.rows)
        throw std::invalid_argument("matmul: inner dims differ " + A.shape_str() + " * " +
                                    B.shape_str());
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            double aik = A.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
        }
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            const Mat& B = t.value_of(b);
            if (t.requires_grad_of(a)) {
                Mat& dA = t.grad_of(a);  // dA += dC * B^T
                for (int i = 0; i < A.rows; ++i)
                    for (int k = 0; k < A.cols; ++k) {
                        double s = 0;
                        for (int j = 0; j < B.cols; ++j) s += dC.at(i, j) * B.at(k, j);
                        dA.at(i, k) += s;
                    }
            }
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);  // dB += A^T * dC
                for (int k = 0; k < B.rows; ++k)
                    for (int j = 0; j < B.cols; ++j) {
                        double s = 0;
                        for (int i = 0; i < A.rows; ++i) s += A.at(i, k) * dC.at(i, j);
                        dB.at(k, j) += s;
                    }
            }
        });
    return out;
}

namespace {

enum class Bcast { None, Row, Col };

Bcast bcast_kind(const Mat& a, const Mat& b, bool allow_col, const char* op) {
    if (a.same_shape(b)) return Bcast::None;
    if (b.rows == 1 && b.cols == a.cols) return Bcast::Row;
    if (allow_col && b.cols == 1 && b.rows == a.rows) return Bcast::Col;
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

double b_entry(const Mat& b, Bcast k, int i, int j) {
    switch (k) {
        case Bcast::None: return b.at(i, j);
        case Bcast::Row: return b.at(0, j);
        default: return b.at(i, 0);
    }
}

void accumulate_b(Mat& dB, Bcast k, int i, int j, double d) {
    switch (k) {
        case Bcast::None: dB.at(i, j) += d; break;
        case Bcast::Row: dB.at(0, j) += d; break;
        default: dB.at(i, 0) += d; break;
    }
}

}  // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    const Mat& A = a.value();
    const Mat& B = b.value();
    Bcast k = bcast_kind(A, B, false, "add");
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j) C.at(i, j) += b_entry(B, k, i, j);
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out, k](Tape& t) {
            const Mat& dC = t.grad_of(out);
            if (t.requires_grad_of(a)) accumulate(t.grad_of(a), dC);
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j) accumulate_b(dB, k, i, j, dC.at(i, j));
            }
        });
    return out;
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    const Mat& A = a.value();
    const Mat& B = b.value();
    Bcast k = bcast_kind(A, B, false, "sub");
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j) C.at(i, j) -= b_entry(B, k, i, j);
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out, k](Tape& t) {
            const Mat& dC = t.grad_of(out);
            if (t.requires_grad_of(a)) accumulate(t.grad_of(a), dC);
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j) accumulate_b(dB, k, i, j, -dC.at(i, j));
            }
        });
    return out;
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    const Mat& A = a.value();
    const Mat& B = b.value();
    Bcast k = bcast_kind(A, B, true, "mul");
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j) C.at(i, j) *= b_entry(B, k, i, j);
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out, k](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            const Mat& B = t.value_of(b);
            if (t.requires_grad_of(a)) {
                Mat& dA = t.grad_of(a);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j)
                        dA.at(i, j) += dC.at(i, j) * b_entry(B, k, i, j);
            }
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j)
                        accumulate_b(dB, k, i, j, dC.at(i, j) * A.at(i, j));
            }
        });
    return out;
}

Var div(Var a, Var b) {
    check_same_tape(a, b, "div");
    const Mat& A = a.value();
    const Mat& B = b.value();
    Bcast k = bcast_kind(A, B, true, "div");
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j) C.at(i, j) /= b_entry(B, k, i, j);
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out, k](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            const Mat& B = t.value_of(b);
            if (t.requires_grad_of(a)) {
                Mat& dA = t.grad_of(a);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j)
                        dA.at(i, j) += dC.at(i, j) / b_entry(B, k, i, j);
            }
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j) {
                        double bv = b_entry(B, k, i, j);
                        accumulate_b(dB, k, i, j, -dC.at(i, j) * A.at(i, j) / (bv * bv));
                    }
            }
        });
    return out;
}

Var scale(Var a, double c) {
    Mat C = a.value();
    for (double& x : C.v) x *= c;
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, c](Tape& t) {
            const Mat& dC = t.grad_of(out);
            Mat& dA = t.grad_of(a);
            for (size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += c * dC.v[i];
        });
    return out;
}

Var leaky_relu(Var a, double slope) {
    Mat C = a.value();
    for (double& x : C.v) x = x > 0 ? x : slope * x;
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, slope](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            Mat& dA = t.grad_of(a);
            for (size_t i = 0; i < dC.v.size(); ++i)
                dA.v[i] += dC.v[i] * (A.v[i] > 0 ? 1.0 : slope);
        });
    return out;
}

Var tanh_v(Var a) {
    Mat C = a.value();
    for (double& x : C.v) x = std::tanh(x);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& Y = t.value_of(out);
            Mat& dA = t.grad_of(a);
            for (size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += dC.v[i] * (1.0 - Y.v[i] * Y.v[i]);
        });
    return out;
}

Var exp_v(Var a) {
    Mat C = a.value();
    for (double& x : C.v) x = std::exp(x);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& Y = t.value_of(out);
            Mat& dA = t.grad_of(a);
            for (size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += dC.v[i] * Y.v[i];
        });
    return out;
}

Var log_v(Var a) {
    Mat C = a.value();
    for (double& x : C.v) x = std::log(x);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            Mat& dA = t.grad_of(a);
            for (size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += dC.v[i] / A.v[i];
        });
    return out;
}

Var softmax_rows(Var a) {
    const Mat& A = a.value();
    Mat C(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        double m = A.at(i, 0);
        for (int j = 1; j < A.cols; ++j) m = std::max(m, A.at(i, j));
        double s = 0;
        for (int j = 0; j < A.cols; ++j) {
            C.at(i, j) = std::exp(A.at(i, j) - m);
            s += C.at(i, j);
        }
        for (int j = 0; j < A.cols; ++j) C.at(i, j) /= s;
    }
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& S = t.value_of(out);
            Mat& dA = t.grad_of(a);
            for (int i = 0; i < S.rows; ++i) {
                double dot = 0;
                for (int j = 0; j < S.cols; ++j) dot += dC.at(i, j) * S.at(i, j);
                for (int j = 0; j < S.cols; ++j)
                    dA.at(i, j) += S.at(i, j) * (dC.at(i, j) - dot);
            }
        });
    return out;
}

Var sum(Var a) {
    double s = 0;
    for (double x : a.value().v) s += x;
    Var out = a.tape->record(Mat::scalar(s), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            double d = t.grad_of(out).v[0];
            Mat& dA = t.grad_of(a);
            for (double& g : dA.v) g += d;
        });
    return out;
}

Var mean(Var a) {
    const Mat& A = a.value();
    double s = 0;
    for (double x : A.v) s += x;
    double n = static_cast<double>(A.v.size());
    Var out = a.tape->record(Mat::scalar(s / n), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, n](Tape& t) {
            double d = t.grad_of(out).v[0] / n;
            Mat& dA = t.grad_of(a);
            for (double& g : dA.v) g += d;
        });
    return out;
}

Var mean_rows(Var a) {
    const Mat& A = a.value();
    Mat C(1, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) C.at(0, j) += A.at(i, j);
    for (int j = 0; j < A.cols; ++j) C.at(0, j) /= A.rows;
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            Mat& dA = t.grad_of(a);
            for (int i = 0; i < dA.rows; ++i)
                for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(0, j) / dA.rows;
        });
    return out;
}

Var row_gather(Var a, std::vector<int> idx) {
    const Mat& A = a.value();
    for (int i : idx)
        if (i < 0 || i >= A.rows)
            throw std::invalid_argument("row_gather: index " + std::to_string(i) +
                                        " out of range for " + A.shape_str());
    Mat C(static_cast<int>(idx.size()), A.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < A.cols; ++j) C.at(static_cast<int>(r), j) = A.at(idx[r], j);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, idx = std::move(idx)](Tape& t) {
            const Mat& dC = t.grad_of(out);
            Mat& dA = t.grad_of(a);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < dA.cols; ++j)
                    dA.at(idx[r], j) += dC.at(static_cast<int>(r), j);
        });
    return out;
}

Var row_scatter_add(Var a, std::vector<int> idx, int out_rows) {
    const Mat& A = a.value();
    if (static_cast<int>(idx.size()) != A.rows)
        throw std::invalid_argument("row_scatter_add: index count " + std::to_string(idx.size()) +
                                    " != rows of " + A.shape_str());
    for (int i : idx)
        if (i < 0 || i >= out_rows)
            throw std::invalid_argument("row_scatter_add: index " + std::to_string(i) +
                                        " out of range for " + std::to_string(out_rows) + " rows");
    Mat C(out_rows, A.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < A.cols; ++j) C.at(idx[r], j) += A.at(static_cast<int>(r), j);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, idx = std::move(idx)](Tape& t) {
            const Mat& dC = t.grad_of(out);
            Mat& dA = t.grad_of(a);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < dA.cols; ++j)
                    dA.at(static_cast<int>(r), j) += dC.at(idx[r], j);
        });
    return out;
}

Var concat_cols(Var a, Var b) {
    check_same_tape(a, b, "concat_cols");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.rows != B.rows)
        throw std::invalid_argument("concat_cols: row mismatch " + A.shape_str() + " vs " +
                                    B.shape_str());
    Mat C(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
        for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
    }
    Var out = a.tape->record(std::move(C), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out](Tape& t) {
            const Mat& dC = t.grad_of(out);
            int ac = t.value_of(a).cols;
            if (t.requires_grad_of(a)) {
                Mat& dA = t.grad_of(a);
                for (int i = 0; i < dA.rows; ++i)
                    for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(i, j);
            }
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (int i = 0; i < dB.rows; ++i)
                    for (int j = 0; j < dB.cols; ++j) dB.at(i, j) += dC.at(i, ac + j);
            }
        });
    return out;
}

Var repeat_rows(Var a, int times) {
    const Mat& A = a.value();
    if (A.rows != 1) throw std::invalid_argument("repeat_rows: input must be 1xC, got " + A.shape_str());
    Mat C(times, A.cols);
    for (int i = 0; i < times; ++i)
        for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(0, j);
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, times](Tape& t) {
            const Mat& dC = t.grad_of(out);
            Mat& dA = t.grad_of(a);
            for (int i = 0; i < times; ++i)
                for (int j = 0; j < dA.cols; ++j) dA.at(0, j) += dC.at(i, j);
        });
    return out;
}

Var cosine_pair(Var a, Var b) {
    check_same_tape(a, b, "cosine_pair");
    const Mat& A = a.value();
    const Mat& B = b.value();
    check_same_shape(A, B, "cosine_pair");
    if (A.rows != 1 && A.cols != 1)
        throw std::invalid_argument("cosine_pair: expects vectors, got " + A.shape_str());
    double dot = 0, na2 = 0, nb2 = 0;
    for (size_t i = 0; i < A.v.size(); ++i) {
        dot += A.v[i] * B.v[i];
        na2 += A.v[i] * A.v[i];
        nb2 += B.v[i] * B.v[i];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_pair: zero-norm input");
    double c = dot / (na * nb);
    Var out = a.tape->record(Mat::scalar(c), needs(a, b));
    if (out.requires_grad())
        out.tape->set_back(out, [a, b, out, na, nb, c](Tape& t) {
            double d = t.grad_of(out).v[0];
            const Mat& A = t.value_of(a);
            const Mat& B = t.value_of(b);
            if (t.requires_grad_of(a)) {
                Mat& dA = t.grad_of(a);
                for (size_t i = 0; i < A.v.size(); ++i)
                    dA.v[i] += d * (B.v[i] / (na * nb) - c * A.v[i] / (na * na));
            }
            if (t.requires_grad_of(b)) {
                Mat& dB = t.grad_of(b);
                for (size_t i = 0; i < B.v.size(); ++i)
                    dB.v[i] += d * (A.v[i] / (na * nb) - c * B.v[i] / (nb * nb));
            }
        });
    return out;
}

Var clamp(Var a, const Mat& lo, const Mat& hi) {
    const Mat& A = a.value();
    if (lo.rows != 1 || lo.cols != A.cols || hi.rows != 1 || hi.cols != A.cols)
        throw std::invalid_argument("clamp: bounds must be 1x" + std::to_string(A.cols));
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j)
            C.at(i, j) = std::min(std::max(C.at(i, j), lo.at(0, j)), hi.at(0, j));
    Var out = a.tape->record(std::move(C), needs(a));
    if (out.requires_grad())
        out.tape->set_back(out, [a, out, lo, hi](Tape& t) {
            const Mat& dC = t.grad_of(out);
            const Mat& A = t.value_of(a);
            Mat& dA = t.grad_of(a);
            for (int i = 0; i < A.rows; ++i)
                for (int j = 0; j < A.cols; ++j)
                    if (A.at(i, j) > lo.at(0, j) && A.at(i, j) < hi.at(0, j))
                        dA.at(i, j) += dC.at(i, j);
        });
    return out;
}

Var cross_entropy(Var logits, int label) {
    const Mat& L = logits.value();
    if (L.rows != 1) throw std::invalid_argument("cross_entropy: logits must be 1xC, got " + L.shape_str());
    if (label < 0 || label >= L.cols)
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                    " out of range for C=" + std::to_string(L.cols));
    Tape& t = *logits.tape;
    // Stable log-sum-exp with a stop-gradient max shift.
    double m = L.at(0, 0);
    for (int j = 1; j < L.cols; ++j) m = std::max(m, L.at(0, j));
    Var shifted = sub(logits, t.constant(Mat(1, L.cols, m)));
    Var lse = add(log_v(sum(exp_v(shifted))), t.constant(Mat::scalar(m)));
    Mat onehot(1, L.cols);
    onehot.at(0, label) = 1.0;
    Var picked = sum(mul(logits, t.constant(std::move(onehot))));
    return sub(lse, picked);
}

void sgd_step(const std::vector<Var>& params, double learning_rate) {
    if (learning_rate <= 0) throw std::invalid_argument("sgd_step: learning rate must be positive");
    for (Var p : params)
        if (!p.requires_grad())
            throw std::invalid_argument("sgd_step: parameter without gradient");
    for (Var p : params) {
        Mat& v = p.tape->value_of(p);
        Mat& g = p.tape->grad_of(p);
        for (size_t i = 0; i < v.v.size(); ++i) v.v[i] -= learning_rate * g.v[i];
        for (double& x : g.v) x = 0.0;
    }
}

}  // namespace fedshift::ad
