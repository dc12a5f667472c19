#include <darkisp/self_boost.hpp>

#include <cmath>
#include <limits>

#include <darkisp/linalg.hpp>

namespace darkisp {

namespace {

void gram_and_cross(const double* u, const double* i, std::size_t n,
                    double g[16], double a[12]) {
    for (int r = 0; r < 4; ++r)
        for (int c = r; c < 4; ++c) {
            double acc = 0.0;
            const double* ir = &i[r * n];
            const double* ic = &i[c * n];
            for (std::size_t p = 0; p < n; ++p) acc += ir[p] * ic[p];
            g[r * 4 + c] = g[c * 4 + r] = acc;
        }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0.0;
            const double* ur = &u[r * n];
            const double* ic = &i[c * n];
            for (std::size_t p = 0; p < n; ++p) acc += ur[p] * ic[p];
            a[r * 4 + c] = acc;
        }
}

}  // namespace

double condition_number(const double g[16]) {
    for (int r = 0; r < 4; ++r)
        for (int c = r + 1; c < 4; ++c)
            if (std::fabs(g[r * 4 + c] - g[c * 4 + r]) > 1e-12)
                throw Error("NotSymmetric", "condition_number");
    return linalg::condition_number_sym(g, 4);
}

PseudoTarget solve_pseudo_target(const double* u, const double* i,
                                 std::size_t pixels, double kappa_threshold,
                                 double svd_rtol) {
    if (pixels < 4)
        throw Error("ShapeMismatch", "solve_pseudo_target: need H*W >= 4");
    double g[16], a[12];
    gram_and_cross(u, i, pixels, g, a);

    PseudoTarget out;
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::fabs(v));
    if (gmax == 0.0) {
        out.kappa = std::numeric_limits<double>::infinity();
        out.used_pinv = true;
        out.truncated_rank = 0;
        out.degenerate = true;
        return out;  // DegenerateImage: reported, target stays zero
    }

    out.kappa = linalg::condition_number_sym(g, 4);
    double ginv[16];
    if (std::isfinite(out.kappa) && out.kappa <= kappa_threshold &&
        linalg::invert(g, 4, ginv)) {
        out.used_pinv = false;
        out.truncated_rank = 4;
    } else {
        out.used_pinv = true;
        out.truncated_rank = linalg::pinv_sym(g, 4, svd_rtol, ginv);
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += a[r * 4 + k] * ginv[k * 4 + c];
            out.p_tilde[r * 4 + c] = acc;
        }
    return out;
}

PseudoTarget solve_pseudo_target(const RgbImage& u, const BayerImage& i,
                                 double kappa_threshold, double svd_rtol) {
    if (u.width != i.width || u.height != i.height)
        throw Error("ShapeMismatch", "solve_pseudo_target: dims differ");
    return solve_pseudo_target(u.channels.data(), i.planes.data(),
                               u.width * u.height, kappa_threshold, svd_rtol);
}

double sb_loss_value(const Mat34& pooled, const Mat34& target,
                     bool* zero_row) {
    if (zero_row) *zero_row = false;
    double loss = 0.0;
    for (int r = 0; r < 3; ++r) {
        double aa = 0, bb = 0, ab = 0;
        for (int c = 0; c < 4; ++c) {
            const double x = pooled[r * 4 + c], y = target[r * 4 + c];
            aa += x * x;
            bb += y * y;
            ab += x * y;
        }
        if (aa < 1e-60 || bb < 1e-60) {
            loss += 1.0;  // orthogonal-equivalent contribution
            if (zero_row) *zero_row = true;
        } else {
            loss += 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
        }
    }
    return loss;
}

Tensor sb_loss(Graph& g, const Tensor& pooled, const Tensor& target) {
    Tensor cos = g.cosine_rows(pooled, target);  // 3
    Tensor ones = make_tensor({3}, {1.0, 1.0, 1.0});
    return g.sum(g.sub(ones, cos));
}

LossReport compound_loss(double l_task, double l_sb, double lambda, int epoch,
                         int warmup) {
    if (epoch < 0) throw Error("InvalidHeader", "compound_loss: epoch < 0");
    LossReport rep;
    rep.l_task = l_task;
    rep.l_sb = l_sb;
    rep.lambda = lambda;
    rep.active = epoch >= warmup;
    rep.total = rep.active ? l_task + lambda * l_sb : l_task;
    return rep;
}

Mat34 closed_form_optimal(const RgbImage& u_star, const BayerImage& i) {
    return solve_pseudo_target(u_star, i).p_tilde;
}

SelfBoostDiagnostics diagnostics(const double* u, const double* i,
                                 std::size_t pixels, const Mat34& pooled) {
    SelfBoostDiagnostics d;
    double grad[12] = {0};
    double abs_acc = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        double resid[3];
        for (int r = 0; r < 3; ++r) {
            double pred = 0.0;
            for (int c = 0; c < 4; ++c)
                pred += pooled[r * 4 + c] * i[c * pixels + p];
            resid[r] = u[r * pixels + p] - pred;
            abs_acc += std::fabs(resid[r]);
        }
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                grad[r * 4 + c] += -2.0 * resid[r] * i[c * pixels + p];
    }
    d.residual_mean = abs_acc / static_cast<double>(3 * pixels);
    double sq = 0.0;
    for (double v : grad) sq += v * v;
    d.residual_grad_norm = std::sqrt(sq);
    return d;
}

SelfBoostDiagnostics diagnostics(const RgbImage& u, const BayerImage& i,
                                 const Mat34& pooled) {
    if (u.width != i.width || u.height != i.height)
        throw Error("ShapeMismatch", "diagnostics: dims differ");
    return diagnostics(u.channels.data(), i.planes.data(),
                       u.width * u.height, pooled);
}

}  // namespace darkisp
