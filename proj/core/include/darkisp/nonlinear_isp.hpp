#pragma once

#include <cstddef>
#include <vector>

#include <darkisp/tensor.hpp>

namespace darkisp {

/// Fixed family of tone-stretch polynomial bases f_0..f_n. f_0 == 1; for
/// k >= 1 the default member is f_k(x) = 1 - (1-x)^k: degree exactly k,
/// passes (0,0) and (1,1), non-decreasing and concave on [0,1]. With
/// skip_mode, evaluation yields g_k(x) = f_k(x) - x so that zero coefficient
/// maps leave the image untouched.
class BasisFamily {
public:
    static BasisFamily make_default(std::size_t order, bool skip_mode = true);
    // coeffs[k] = ascending-power coefficients of f_k; coeffs.size() = n+1
    static BasisFamily from_coefficients(std::vector<std::vector<double>> coeffs,
                                         bool skip_mode = true);

    std::size_t order() const { return order_; }
    bool skip_mode() const { return skip_mode_; }

    // Horner evaluation of f_k (g_k when skip_mode) and its derivative.
    double eval(std::size_t k, double x) const;
    double deriv(std::size_t k, double x) const;
    // Always the plain f_k, ignoring skip_mode.
    double eval_plain(std::size_t k, double x) const;

    const std::vector<double>& coefficients(std::size_t k) const;

private:
    std::size_t order_ = 8;
    bool skip_mode_ = true;
    std::vector<std::vector<double>> coeffs_;
};

struct CoefficientNet {
    // three 3x3 conv layers: 3 -> width -> width -> (order+1), relu between,
    // final layer zero-initialized
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    std::size_t width = 16;
    std::size_t order = 8;
};

CoefficientNet make_coefficient_net(std::size_t order, std::size_t width,
                                    std::uint64_t seed);

/// img: 3 x H x W tensor -> coefficient maps (order+1) x H x W
Tensor predict_coefficients(Graph& g, const Tensor& img,
                            const CoefficientNet& net);

/// x: 3 x H x W (or 3 x HW) linear-stage output; coeffs: (order+1) x (same
/// spatial size). Returns the stretched image, same shape as x.
Tensor apply_nonlinear(Graph& g, const Tensor& x, const Tensor& coeffs,
                       const BasisFamily& family);

}  // namespace darkisp
