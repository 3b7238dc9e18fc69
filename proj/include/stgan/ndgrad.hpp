#pragma once

// Minimal dense reverse-mode autodiff. A Tape records primitive applications
// in insertion order; backward() walks it in reverse. Values are row-major
// 64-bit matrices.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stgan/errors.hpp"

namespace stgan::ndgrad {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> values);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Plain (untracked) product, shared by the tape and by callers that only
/// need a value.
Matrix matmul_value(const Matrix& a, const Matrix& b);

enum class OpKind {
    constant,
    parameter,
    matmul,
    add,
    add_bias,
    mul,
    scale,
    exp,
    elu,
    leaky_relu,
    concat_cols,
    concat_rows,
    slice_rows,
    slice_cols,
    gather_rows,
    segment_softmax,
    aggregate,
    sum,
    mae,
};

std::string_view op_name(OpKind kind);

/// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Computation graph. Every node's inputs precede it, so insertion order is a
/// valid topological order.
class Tape {
public:
    Var constant(Matrix value);
    Var parameter(Matrix value);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient accumulated by the last backward(); zero matrix if the node
    /// received none.
    const Matrix& grad(Var v) const;
    OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse accumulation from a 1x1 node. Clears previous gradients.
    void backward(Var loss);

    // Used by primitive implementations.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;
    Var record(OpKind kind, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward);
    Matrix& grad_slot(std::size_t id);
    const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
    const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
    bool input_needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> inputs;
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    mutable Matrix empty_grad_;
};

// Primitives. Shape violations throw DimensionError naming the shapes.

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// a (n x c) plus a 1 x c row broadcast over rows.
Var add_bias(Tape& t, Var a, Var bias);
/// Elementwise product.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var exp(Tape& t, Var a);
Var elu(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double negative_slope = 0.2);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_rows(Tape& t, std::span<const Var> parts);
/// Rows [begin, end).
Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end);
/// Columns [begin, end).
Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end);
/// out.row(k) = a.row(index[k]); backward scatter-adds.
Var gather_rows(Tape& t, Var a, std::vector<std::size_t> index);

/// Softmax of each column of `scores` within contiguous row segments.
/// `offsets` has one entry per segment plus a terminating entry equal to the
/// row count; segment s covers rows [offsets[s], offsets[s+1]).
Var segment_softmax(Tape& t, Var scores, std::vector<std::size_t> offsets);

/// Weighted message sum: out.row(dst[e]) += coef(e, 0) * values.row(src[e]).
/// `coef` is E x 1; the output has `n_out` rows.
Var aggregate(Tape& t, Var coef, Var values, std::vector<std::size_t> src,
              std::vector<std::size_t> dst, std::size_t n_out);

/// Sum of all entries, 1 x 1.
Var sum(Tape& t, Var a);

/// Mean absolute error over the selected rows of an n x 1 prediction column.
/// The subgradient of |x| at 0 is taken as 0.
Var mae(Tape& t, Var pred, std::vector<double> target, std::vector<std::size_t> rows);

// Direct evaluation helpers (no tape) for the scalar activations.
double elu_value(double x);
double leaky_relu_value(double x, double negative_slope);

struct AdamConfig {
    double lr = 0.004;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates for a list of parameter arrays.
class AdamState {
public:
    AdamState() = default;
    AdamState(AdamConfig config, std::span<const Matrix> params);

    /// One bias-corrected update. `params` and `grads` must match the shapes
    /// given at construction.
    void step(std::span<Matrix> params, std::span<const Matrix> grads);

    const AdamConfig& config() const { return config_; }
    long long steps() const { return t_; }
    const std::vector<Matrix>& first_moment() const { return m_; }
    const std::vector<Matrix>& second_moment() const { return v_; }

    /// Rebuild from persisted pieces (checkpoint loading).
    static AdamState restore(AdamConfig config, long long steps, std::vector<Matrix> m,
                             std::vector<Matrix> v);

private:
    AdamConfig config_;
    long long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

struct GradCheckEntry {
    std::size_t param = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_error = 0.0;
    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Builds a scalar loss on a fresh tape from parameter leaves, which are
/// passed in the same order as the matrices handed to grad_check.
using LossClosure = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares the tape's gradients with central differences of step `h`.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, scale_floor).
/// Throws NumericError (naming the offending op) if the loss is not finite.
GradCheckReport grad_check(const LossClosure& loss, std::vector<Matrix> params, double h = 1e-5,
                           double scale_floor = 1e-6);

}  // namespace stgan::ndgrad
