#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace darkisp {

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);

/// Dense float64 tensor with an optional gradient slot. All differentiable
/// state in the project lives in these.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, same length as value
    bool requires_grad = false;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

using Tensor = std::shared_ptr<TensorNode>;

Tensor make_tensor(const Shape& shape, bool requires_grad = false);
Tensor make_tensor(const Shape& shape, std::vector<double> data,
                   bool requires_grad = false);
Tensor scalar_tensor(double v, bool requires_grad = false);

class BasisFamily;  // nonlinear_isp.hpp

/// Tape of executed operations. Forward methods compute values eagerly and
/// record a closure that propagates vector-Jacobian products on backward().
/// Backward runs the tape in exact reverse execution order and accumulates
/// (adds) into grads; callers zero grads between steps.
class Graph {
public:
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scalar_mul(const Tensor& a, double c);
    Tensor scalar_pow(const Tensor& a, double p);
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    // weight O x C x 3 x 3, bias O; stride 1, zero padding 1
    Tensor conv2d_3x3(const Tensor& input, const Tensor& weight,
                      const Tensor& bias);
    Tensor avg_pool2d(const Tensor& input);  // 2x2, stride 2, floor dims
    Tensor softmax_rows(const Tensor& a);    // softmax over the last axis
    Tensor relu(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor sum(const Tensor& a);
    Tensor reshape(const Tensor& a, const Shape& shape);
    // replicate axes of extent 1 (or prepend new axes) up to `shape`
    Tensor broadcast(const Tensor& a, const Shape& shape);
    // row-wise cosine similarity of two M x N matrices -> M
    Tensor cosine_rows(const Tensor& a, const Tensor& b);
    Tensor l2_norm(const Tensor& a);  // Frobenius norm -> scalar
    // field (M*K) x N, img K x N -> out M x N with
    // out[m,p] = sum_k field[m*K+k, p] * img[k, p]
    Tensor pixelwise_matmul(const Tensor& field, const Tensor& img,
                            std::size_t rows_out);
    // x C x N, coeffs (n+1) x N; skip family: out = x + sum_k coeffs_k g_k(x),
    // plain family: out = sum_k coeffs_k f_k(x). Coefficient maps are shared
    // across the C channels.
    Tensor poly_mix(const Tensor& x, const Tensor& coeffs,
                    const BasisFamily& family);

    void backward(const Tensor& loss);
    void clear() {
        tape_.clear();
        produced_.clear();
    }
    std::size_t size() const { return tape_.size(); }

private:
    std::vector<std::function<void()>> tape_;
    std::vector<Tensor> produced_;
    void record(std::function<void()> fn) { tape_.push_back(std::move(fn)); }
    void track_output(const Tensor& out) {
        out->ensure_grad();
        produced_.push_back(out);
    }
    static Tensor result_of(const Shape& shape,
                            std::initializer_list<const Tensor*> inputs);
};

void check_finite(const Tensor& t, const char* what);

}  // namespace darkisp
