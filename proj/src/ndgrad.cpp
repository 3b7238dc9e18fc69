#include "stgan/ndgrad.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stgan::ndgrad {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

ConstMap view(const Matrix& m) {
    return ConstMap(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
    return MutMap(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

void accumulate(Tape& t, std::size_t id, const Matrix& delta) {
    if (!t.input_needs_grad(id)) {
        return;
    }
    Matrix& g = t.grad_slot(id);
    auto gv = g.values();
    auto dv = delta.values();
    for (std::size_t k = 0; k < gv.size(); ++k) {
        gv[k] += dv[k];
    }
}

template <typename F, typename D>
Var unary(Tape& t, OpKind kind, Var a, F f, D dydx) {
    const Matrix& x = t.value(a);
    Matrix out(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.size(); ++k) {
        out[k] = f(x[k]);
    }
    const std::size_t in = a.id;
    return t.record(kind, {in}, std::move(out), [in, dydx](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        const Matrix& x = tape.value_of(in);
        const Matrix& y = tape.value_of(self);
        Matrix d(g.rows(), g.cols());
        for (std::size_t k = 0; k < g.size(); ++k) {
            d[k] = g[k] * dydx(x[k], y[k]);
        }
        accumulate(tape, in, d);
    });
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("Matrix: " + std::to_string(data_.size()) +
                             " values do not fill shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t c = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n * c);
    for (const auto& r : rows) {
        if (r.size() != c) {
            throw DimensionError("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(n, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

std::string Matrix::shape_str() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// Eigen's matrix-vector kernels peel leading elements up to the first
// aligned address, so a product read through a Map of std::vector storage
// rounds differently depending on where the heap placed it. Products run on
// owned (aligned) copies so results depend on the values alone.
void product_into(Matrix& out, const EigenRowMajor& a, const EigenRowMajor& b, bool accumulate) {
    if (a.rows() == 0 || a.cols() == 0 || b.cols() == 0) {
        return;
    }
    EigenRowMajor p = a * b;
    if (accumulate) {
        p += EigenRowMajor(view(out));
    }
    view(out) = p;
}

}  // namespace

Matrix matmul_value(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        shape_error("matmul", a, b);
    }
    Matrix out(a.rows(), b.cols());
    product_into(out, view(a), view(b), false);
    return out;
}

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::constant: return "constant";
        case OpKind::parameter: return "parameter";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::add_bias: return "add_bias";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::exp: return "exp";
        case OpKind::elu: return "elu";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::concat_rows: return "concat_rows";
        case OpKind::slice_rows: return "slice_rows";
        case OpKind::slice_cols: return "slice_cols";
        case OpKind::gather_rows: return "gather_rows";
        case OpKind::segment_softmax: return "segment_softmax";
        case OpKind::aggregate: return "aggregate";
        case OpKind::sum: return "sum";
        case OpKind::mae: return "mae";
    }
    return "unknown";
}

// ---------------------------------------------------------------- Tape

Var Tape::constant(Matrix value) {
    return record(OpKind::constant, {}, std::move(value), nullptr);
}

Var Tape::parameter(Matrix value) {
    Var v = record(OpKind::parameter, {}, std::move(value), nullptr);
    nodes_.back().needs_grad = true;
    return v;
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward) {
    bool needs = false;
    for (std::size_t in : inputs) {
        if (in >= nodes_.size()) {
            throw ContractError("Tape::record: input refers to a later node");
        }
        needs = needs || nodes_[in].needs_grad;
    }
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Matrix{}, needs,
                          needs ? std::move(backward) : BackwardFn{}});
    return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

const Matrix& Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) {
        empty_grad_ = Matrix(n.value.rows(), n.value.cols());
        return empty_grad_;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward: loss must be 1x1, got " + lv.shape_str());
    }
    for (Node& n : nodes_) {
        n.grad = Matrix{};
    }
    if (!nodes_[loss.id].needs_grad) {
        return;
    }
    grad_slot(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.backward || n.grad.empty()) {
            continue;
        }
        n.backward(*this, id);
    }
}

// ---------------------------------------------------------------- primitives

Var matmul(Tape& t, Var a, Var b) {
    Matrix out = matmul_value(t.value(a), t.value(b));
    const std::size_t ia = a.id;
    const std::size_t ib = b.id;
    return t.record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        const Matrix& av = tape.value_of(ia);
        const Matrix& bv = tape.value_of(ib);
        if (tape.input_needs_grad(ia)) {
            Matrix& ga = tape.grad_slot(ia);
            product_into(ga, view(g), view(bv).transpose(), true);
        }
        if (tape.input_needs_grad(ib)) {
            Matrix& gb = tape.grad_slot(ib);
            product_into(gb, view(av).transpose(), view(g), true);
        }
    });
}

Var add(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (!av.same_shape(bv)) {
        shape_error("add", av, bv);
    }
    Matrix out(av.rows(), av.cols());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = av[k] + bv[k];
    }
    const std::size_t ia = a.id;
    const std::size_t ib = b.id;
    return t.record(OpKind::add, {ia, ib}, std::move(out), [ia, ib](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        accumulate(tape, ia, g);
        accumulate(tape, ib, g);
    });
}

Var add_bias(Tape& t, Var a, Var bias) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(bias);
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        shape_error("add_bias", av, bv);
    }
    Matrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += bv[c];
        }
    }
    const std::size_t ia = a.id;
    const std::size_t ib = bias.id;
    return t.record(OpKind::add_bias, {ia, ib}, std::move(out), [ia, ib](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        accumulate(tape, ia, g);
        if (tape.input_needs_grad(ib)) {
            Matrix& gb = tape.grad_slot(ib);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) {
                    gb[c] += row[c];
                }
            }
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (!av.same_shape(bv)) {
        shape_error("mul", av, bv);
    }
    Matrix out(av.rows(), av.cols());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = av[k] * bv[k];
    }
    const std::size_t ia = a.id;
    const std::size_t ib = b.id;
    return t.record(OpKind::mul, {ia, ib}, std::move(out), [ia, ib](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        const Matrix& av = tape.value_of(ia);
        const Matrix& bv = tape.value_of(ib);
        if (tape.input_needs_grad(ia)) {
            Matrix& ga = tape.grad_slot(ia);
            for (std::size_t k = 0; k < g.size(); ++k) {
                ga[k] += g[k] * bv[k];
            }
        }
        if (tape.input_needs_grad(ib)) {
            Matrix& gb = tape.grad_slot(ib);
            for (std::size_t k = 0; k < g.size(); ++k) {
                gb[k] += g[k] * av[k];
            }
        }
    });
}

Var scale(Tape& t, Var a, double factor) {
    return unary(
        t, OpKind::scale, a, [factor](double x) { return factor * x; },
        [factor](double, double) { return factor; });
}

Var exp(Tape& t, Var a) {
    return unary(
        t, OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

double elu_value(double x) { return x > 0.0 ? x : std::expm1(x); }

double leaky_relu_value(double x, double negative_slope) {
    return x > 0.0 ? x : negative_slope * x;
}

Var elu(Tape& t, Var a) {
    return unary(
        t, OpKind::elu, a, [](double x) { return elu_value(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var leaky_relu(Tape& t, Var a, double negative_slope) {
    return unary(
        t, OpKind::leaky_relu, a, [negative_slope](double x) { return leaky_relu_value(x, negative_slope); },
        [negative_slope](double x, double) { return x > 0.0 ? 1.0 : negative_slope; });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no parts");
    }
    const std::size_t rows = t.value(parts[0]).rows();
    std::size_t cols = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        const Matrix& v = t.value(p);
        if (v.rows() != rows) {
            shape_error("concat_cols", t.value(parts[0]), v);
        }
        ids.push_back(p.id);
        offsets.push_back(cols);
        cols += v.cols();
    }
    Matrix out(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Matrix& v = t.value(parts[k]);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<long>(offsets[k]));
        }
    }
    auto in = ids;
    return t.record(OpKind::concat_cols, std::move(in), std::move(out),
                    [ids, offsets](Tape& tape, std::size_t self) {
                        const Matrix& g = tape.grad_of(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (!tape.input_needs_grad(ids[k])) {
                                continue;
                            }
                            Matrix& gp = tape.grad_slot(ids[k]);
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                                auto dst = gp.row(r);
                                auto src = g.row(r).subspan(offsets[k], dst.size());
                                for (std::size_t c = 0; c < dst.size(); ++c) {
                                    dst[c] += src[c];
                                }
                            }
                        }
                    });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no parts");
    }
    const std::size_t cols = t.value(parts[0]).cols();
    std::vector<std::size_t> ids;
    std::vector<double> data;
    for (Var p : parts) {
        const Matrix& v = t.value(p);
        if (v.cols() != cols) {
            shape_error("concat_rows", t.value(parts[0]), v);
        }
        ids.push_back(p.id);
        data.insert(data.end(), v.values().begin(), v.values().end());
    }
    const std::size_t rows = data.size() / std::max<std::size_t>(cols, 1);
    Matrix out(cols == 0 ? 0 : rows, cols, std::move(data));
    auto in = ids;
    return t.record(OpKind::concat_rows, std::move(in), std::move(out), [ids](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        std::size_t offset = 0;
        for (std::size_t id : ids) {
            const std::size_t n = tape.value_of(id).size();
            if (tape.input_needs_grad(id)) {
                Matrix& gp = tape.grad_slot(id);
                for (std::size_t k = 0; k < n; ++k) {
                    gp[k] += g[offset + k];
                }
            }
            offset += n;
        }
    });
}

Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end) {
    const Matrix& av = t.value(a);
    if (begin > end || end > av.rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") outside " + av.shape_str());
    }
    const std::size_t c = av.cols();
    Matrix out(end - begin, c,
               std::vector<double>(av.values().begin() + static_cast<long>(begin * c),
                                   av.values().begin() + static_cast<long>(end * c)));
    const std::size_t ia = a.id;
    return t.record(OpKind::slice_rows, {ia}, std::move(out), [ia, begin, c](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        Matrix& ga = tape.grad_slot(ia);
        for (std::size_t k = 0; k < g.size(); ++k) {
            ga[begin * c + k] += g[k];
        }
    });
}

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end) {
    const Matrix& av = t.value(a);
    if (begin > end || end > av.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") outside " + av.shape_str());
    }
    const std::size_t w = end - begin;
    Matrix out(av.rows(), w);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            out(r, c) = av(r, begin + c);
        }
    }
    const std::size_t ia = a.id;
    return t.record(OpKind::slice_cols, {ia}, std::move(out), [ia, begin, w](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad_of(self);
        Matrix& ga = tape.grad_slot(ia);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                ga(r, begin + c) += g(r, c);
            }
        }
    });
}

Var gather_rows(Tape& t, Var a, std::vector<std::size_t> index) {
    const Matrix& av = t.value(a);
    const std::size_t c = av.cols();
    Matrix out(index.size(), c);
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= av.rows()) {
            throw DimensionError("gather_rows: index " + std::to_string(index[k]) + " outside " +
                                 av.shape_str());
        }
        std::copy(av.row(index[k]).begin(), av.row(index[k]).end(), out.row(k).begin());
    }
    const std::size_t ia = a.id;
    return t.record(OpKind::gather_rows, {ia}, std::move(out),
                    [ia, index = std::move(index)](Tape& tape, std::size_t self) {
                        const Matrix& g = tape.grad_of(self);
                        Matrix& ga = tape.grad_slot(ia);
                        for (std::size_t k = 0; k < index.size(); ++k) {
                            auto dst = ga.row(index[k]);
                            auto src = g.row(k);
                            for (std::size_t j = 0; j < dst.size(); ++j) {
                                dst[j] += src[j];
                            }
                        }
                    });
}

Var segment_softmax(Tape& t, Var scores, std::vector<std::size_t> offsets) {
    const Matrix& s = t.value(scores);
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != s.rows()) {
        throw ContractError("segment_softmax: offsets must start at 0 and end at " +
                            std::to_string(s.rows()));
    }
    const std::size_t cols = s.cols();
    Matrix out(s.rows(), cols);
    for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
        const std::size_t b = offsets[seg];
        const std::size_t e = offsets[seg + 1];
        if (e <= b) {
            throw ContractError("segment_softmax: segment " + std::to_string(seg) + " is empty");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t r = b; r < e; ++r) {
                mx = std::max(mx, s(r, c));
            }
            double total = 0.0;
            for (std::size_t r = b; r < e; ++r) {
                out(r, c) = std::exp(s(r, c) - mx);
                total += out(r, c);
            }
            for (std::size_t r = b; r < e; ++r) {
                out(r, c) /= total;
            }
        }
    }
    const std::size_t is = scores.id;
    return t.record(OpKind::segment_softmax, {is}, std::move(out),
                    [is, offsets = std::move(offsets)](Tape& tape, std::size_t self) {
                        const Matrix& g = tape.grad_of(self);
                        const Matrix& y = tape.value_of(self);
                        Matrix& gs = tape.grad_slot(is);
                        const std::size_t cols = y.cols();
                        for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
                            for (std::size_t c = 0; c < cols; ++c) {
                                double dot = 0.0;
                                for (std::size_t r = offsets[seg]; r < offsets[seg + 1]; ++r) {
                                    dot += g(r, c) * y(r, c);
                                }
                                for (std::size_t r = offsets[seg]; r < offsets[seg + 1]; ++r) {
                                    gs(r, c) += y(r, c) * (g(r, c) - dot);
                                }
                            }
                        }
                    });
}

Var aggregate(Tape& t, Var coef, Var values, std::vector<std::size_t> src, std::vector<std::size_t> dst,
              std::size_t n_out) {
    const Matrix& cv = t.value(coef);
    const Matrix& vv = t.value(values);
    if (cv.cols() != 1 || cv.rows() != src.size() || src.size() != dst.size()) {
        throw DimensionError("aggregate: coefficient column " + cv.shape_str() + " does not match " +
                             std::to_string(src.size()) + " edges");
    }
    const std::size_t w = vv.cols();
    Matrix out(n_out, w);
    for (std::size_t e = 0; e < src.size(); ++e) {
        if (src[e] >= vv.rows() || dst[e] >= n_out) {
            throw DimensionError("aggregate: edge " + std::to_string(e) + " out of range");
        }
        const double a = cv[e];
        auto from = vv.row(src[e]);
        auto to = out.row(dst[e]);
        for (std::size_t k = 0; k < w; ++k) {
            to[k] += a * from[k];
        }
    }
    const std::size_t ic = coef.id;
    const std::size_t iv = values.id;
    return t.record(OpKind::aggregate, {ic, iv}, std::move(out),
                    [ic, iv, src = std::move(src), dst = std::move(dst)](Tape& tape, std::size_t self) {
                        const Matrix& g = tape.grad_of(self);
                        const Matrix& cv = tape.value_of(ic);
                        const Matrix& vv = tape.value_of(iv);
                        const bool need_c = tape.input_needs_grad(ic);
                        const bool need_v = tape.input_needs_grad(iv);
                        Matrix* gc = need_c ? &tape.grad_slot(ic) : nullptr;
                        Matrix* gv = need_v ? &tape.grad_slot(iv) : nullptr;
                        const std::size_t w = vv.cols();
                        for (std::size_t e = 0; e < src.size(); ++e) {
                            auto grow = g.row(dst[e]);
                            if (gc != nullptr) {
                                auto vrow = vv.row(src[e]);
                                double dot = 0.0;
                                for (std::size_t k = 0; k < w; ++k) {
                                    dot += grow[k] * vrow[k];
                                }
                                (*gc)[e] += dot;
                            }
                            if (gv != nullptr) {
                                auto to = gv->row(src[e]);
                                const double a = cv[e];
                                for (std::size_t k = 0; k < w; ++k) {
                                    to[k] += a * grow[k];
                                }
                            }
                        }
                    });
}

Var sum(Tape& t, Var a) {
    const Matrix& av = t.value(a);
    double total = 0.0;
    for (double v : av.values()) {
        total += v;
    }
    const std::size_t ia = a.id;
    return t.record(OpKind::sum, {ia}, Matrix(1, 1, total), [ia](Tape& tape, std::size_t self) {
        const double g = tape.grad_of(self)[0];
        Matrix& ga = tape.grad_slot(ia);
        for (double& v : ga.values()) {
            v += g;
        }
    });
}

Var mae(Tape& t, Var pred, std::vector<double> target, std::vector<std::size_t> rows) {
    const Matrix& p = t.value(pred);
    if (p.cols() != 1 || target.size() != p.rows()) {
        throw DimensionError("mae: prediction " + p.shape_str() + " vs " + std::to_string(target.size()) +
                             " targets");
    }
    if (rows.empty()) {
        throw ContractError("mae: no rows selected");
    }
    double total = 0.0;
    for (std::size_t r : rows) {
        if (r >= p.rows()) {
            throw DimensionError("mae: row " + std::to_string(r) + " out of range");
        }
        total += std::abs(p[r] - target[r]);
    }
    const double n = static_cast<double>(rows.size());
    const std::size_t ip = pred.id;
    return t.record(OpKind::mae, {ip}, Matrix(1, 1, total / n),
                    [ip, n, target = std::move(target), rows = std::move(rows)](Tape& tape, std::size_t self) {
                        const double g = tape.grad_of(self)[0] / n;
                        const Matrix& p = tape.value_of(ip);
                        Matrix& gp = tape.grad_slot(ip);
                        for (std::size_t r : rows) {
                            const double d = p[r] - target[r];
                            gp[r] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
                        }
                    });
}

// ---------------------------------------------------------------- Adam

AdamState::AdamState(AdamConfig config, std::span<const Matrix> params) : config_(config) {
    for (const Matrix& p : params) {
        m_.emplace_back(p.rows(), p.cols());
        v_.emplace_back(p.rows(), p.cols());
    }
}

AdamState AdamState::restore(AdamConfig config, long long steps, std::vector<Matrix> m, std::vector<Matrix> v) {
    if (m.size() != v.size()) {
        throw DimensionError("AdamState::restore: moment lists differ in length");
    }
    AdamState s;
    s.config_ = config;
    s.t_ = steps;
    s.m_ = std::move(m);
    s.v_ = std::move(v);
    return s;
}

void AdamState::step(std::span<Matrix> params, std::span<const Matrix> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw DimensionError("adam_step: expected " + std::to_string(m_.size()) + " parameters, got " +
                             std::to_string(params.size()) + " params and " + std::to_string(grads.size()) +
                             " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(m_[i]) || !grads[i].same_shape(m_[i])) {
            throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                                 params[i].shape_str() + ", gradient " + grads[i].shape_str() +
                                 ", state " + m_[i].shape_str());
        }
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].values();
        auto g = grads[i].values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

// ---------------------------------------------------------------- grad check

namespace {

double evaluate_loss(const LossClosure& loss, const std::vector<Matrix>& params, Tape& tape,
                     std::vector<Var>& leaves) {
    leaves.clear();
    for (const Matrix& p : params) {
        leaves.push_back(tape.parameter(p));
    }
    Var out = loss(tape, leaves);
    const Matrix& v = tape.value(out);
    if (v.rows() != 1 || v.cols() != 1) {
        throw ContractError("grad_check: loss must be 1x1, got " + v.shape_str());
    }
    if (!std::isfinite(v[0])) {
        for (std::size_t id = 0; id < tape.size(); ++id) {
            if (!tape.value(Var{id}).all_finite()) {
                throw NumericError("grad_check: non-finite value produced by " +
                                   std::string(op_name(tape.kind(Var{id}))) + " (node " +
                                   std::to_string(id) + ")");
            }
        }
        throw NumericError("grad_check: non-finite loss");
    }
    return v[0];
}

}  // namespace

GradCheckReport grad_check(const LossClosure& loss, std::vector<Matrix> params, double h, double scale_floor) {
    std::vector<Var> leaves;
    Tape tape;
    evaluate_loss(loss, params, tape, leaves);
    Var out{tape.size() - 1};
    tape.backward(out);
    std::vector<Matrix> analytic;
    for (Var leaf : leaves) {
        analytic.push_back(tape.grad(leaf));
    }

    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        GradCheckEntry entry{i, 0.0, 0.0};
        for (std::size_t k = 0; k < params[i].size(); ++k) {
            const double original = params[i][k];
            params[i][k] = original + h;
            Tape plus;
            const double lp = evaluate_loss(loss, params, plus, leaves);
            params[i][k] = original - h;
            Tape minus;
            const double lm = evaluate_loss(loss, params, minus, leaves);
            params[i][k] = original;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[i][k];
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), scale_floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.params.push_back(entry);
    }
    return report;
}

}  // namespace stgan::ndgrad
