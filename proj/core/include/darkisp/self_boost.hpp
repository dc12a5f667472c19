#pragma once

#include <cstddef>

#include <darkisp/linear_isp.hpp>
#include <darkisp/tensor.hpp>

namespace darkisp {

struct PseudoTarget {
    Mat34 p_tilde{};
    double kappa = 1.0;        // condition number of the 4x4 Gram matrix
    bool used_pinv = false;
    std::size_t truncated_rank = 4;
    bool degenerate = false;   // all-zero input image
};

struct SelfBoostConfig {
    double kappa_threshold = 1e10;
    double svd_rtol = 1e-12;  // relative to the largest singular value
    double lambda = 1e-2;
    int warmup = 10;
    bool flow_through = false;  // differentiate through the solve into U
};

/// Least-squares pseudo-target P~ = U I^T (I I^T)^-1 with U reshaped to
/// 3 x (H*W) and I to 4 x (H*W). Ill-conditioned Gram matrices route through
/// the truncated eigenvalue pseudoinverse.
PseudoTarget solve_pseudo_target(const double* u, const double* i,
                                 std::size_t pixels,
                                 double kappa_threshold = 1e10,
                                 double svd_rtol = 1e-12);
PseudoTarget solve_pseudo_target(const RgbImage& u, const BayerImage& i,
                                 double kappa_threshold = 1e10,
                                 double svd_rtol = 1e-12);

/// lambda_max / lambda_min of a symmetric 4x4 matrix; +inf for a
/// non-positive spectrum. Throws NotSymmetric when the input is not
/// symmetric within 1e-12.
double condition_number(const double g[16]);

/// Sum over the three rows of (1 - cos(pooled_row, target_row)). Zero rows
/// contribute exactly 1 (cosine treated as 0).
double sb_loss_value(const Mat34& pooled, const Mat34& target,
                     bool* zero_row = nullptr);

/// Differentiable version on the tape; `target` is typically a constant
/// tensor holding P~ (detached) or a tensor wired back into U (flow-through).
Tensor sb_loss(Graph& g, const Tensor& pooled, const Tensor& target);

struct LossReport {
    double l_sb = 0.0;
    double l_task = 0.0;
    double total = 0.0;
    double lambda = 0.0;
    bool active = false;
    bool zero_row = false;
};

LossReport compound_loss(double l_task, double l_sb, double lambda, int epoch,
                         int warmup);

/// Eq. of the oracle least-squares fit; same computation as
/// solve_pseudo_target but named for its test-time role with a reference
/// image in place of the network output.
Mat34 closed_form_optimal(const RgbImage& u_star, const BayerImage& i);

struct SelfBoostDiagnostics {
    double residual_mean = 0.0;       // mean |U - P' I|
    double residual_grad_norm = 0.0;  // || d/dP' ||U - P' I||^2 ||_F
};

SelfBoostDiagnostics diagnostics(const double* u, const double* i,
                                 std::size_t pixels, const Mat34& pooled);
SelfBoostDiagnostics diagnostics(const RgbImage& u, const BayerImage& i,
                                 const Mat34& pooled);

}  // namespace darkisp
