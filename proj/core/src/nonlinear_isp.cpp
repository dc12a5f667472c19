#include <darkisp/nonlinear_isp.hpp>

#include <cmath>

#include <darkisp/rng.hpp>

namespace darkisp {

namespace {

// binomial coefficients of 1 - (1-x)^k, ascending powers
std::vector<double> default_basis_coeffs(std::size_t k) {
    if (k == 0) return {1.0};
    std::vector<double> c(k + 1, 0.0);
    double binom = 1.0;
    for (std::size_t j = 1; j <= k; ++j) {
        binom = binom * static_cast<double>(k - j + 1) / static_cast<double>(j);
        c[j] = (j % 2 == 1) ? binom : -binom;
    }
    return c;
}

double horner(const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) acc = acc * x + c[j];
    return acc;
}

double horner_deriv(const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 1;)
        acc = acc * x + c[j] * static_cast<double>(j);
    return acc;
}

}  // namespace

BasisFamily BasisFamily::make_default(std::size_t order, bool skip_mode) {
    if (order < 1 || order > 12)
        throw Error("IndexOutOfRange", "basis order must be in 1..12");
    BasisFamily f;
    f.order_ = order;
    f.skip_mode_ = skip_mode;
    f.coeffs_.resize(order + 1);
    for (std::size_t k = 0; k <= order; ++k)
        f.coeffs_[k] = default_basis_coeffs(k);
    return f;
}

BasisFamily BasisFamily::from_coefficients(
    std::vector<std::vector<double>> coeffs, bool skip_mode) {
    if (coeffs.size() < 2)
        throw Error("IndexOutOfRange", "need at least f_0 and f_1");
    BasisFamily f;
    f.order_ = coeffs.size() - 1;
    f.skip_mode_ = skip_mode;
    f.coeffs_ = std::move(coeffs);
    return f;
}

const std::vector<double>& BasisFamily::coefficients(std::size_t k) const {
    if (k >= coeffs_.size())
        throw Error("IndexOutOfRange", "basis index out of range");
    return coeffs_[k];
}

double BasisFamily::eval_plain(std::size_t k, double x) const {
    return horner(coefficients(k), x);
}

double BasisFamily::eval(std::size_t k, double x) const {
    const double v = horner(coefficients(k), x);
    return skip_mode_ ? v - x : v;
}

double BasisFamily::deriv(std::size_t k, double x) const {
    const double d = horner_deriv(coefficients(k), x);
    return skip_mode_ ? d - 1.0 : d;
}

CoefficientNet make_coefficient_net(std::size_t order, std::size_t width,
                                    std::uint64_t seed) {
    Rng rng(seed);
    auto conv_init = [&rng](std::size_t out_c, std::size_t in_c) {
        const double scale = std::sqrt(2.0 / (in_c * 9.0));
        std::vector<double> w(out_c * in_c * 9);
        for (auto& v : w) v = scale * rng.normal();
        return make_tensor({out_c, in_c, 3, 3}, std::move(w), true);
    };
    CoefficientNet net;
    net.width = width;
    net.order = order;
    net.conv1_w = conv_init(width, 3);
    net.conv1_b = make_tensor({width}, true);
    net.conv2_w = conv_init(width, width);
    net.conv2_b = make_tensor({width}, true);
    // final layer zero so the stretch starts as the identity
    net.conv3_w = make_tensor({order + 1, width, 3, 3}, true);
    net.conv3_b = make_tensor({order + 1}, true);
    return net;
}

Tensor predict_coefficients(Graph& g, const Tensor& img,
                            const CoefficientNet& net) {
    if (img->shape.size() != 3 || img->shape[0] != 3)
        throw Error("ShapeMismatch", "predict_coefficients: need 3xHxW");
    Tensor h1 = g.relu(g.conv2d_3x3(img, net.conv1_w, net.conv1_b));
    Tensor h2 = g.relu(g.conv2d_3x3(h1, net.conv2_w, net.conv2_b));
    return g.conv2d_3x3(h2, net.conv3_w, net.conv3_b);
}

Tensor apply_nonlinear(Graph& g, const Tensor& x, const Tensor& coeffs,
                       const BasisFamily& family) {
    return g.poly_mix(x, coeffs, family);
}

}  // namespace darkisp
