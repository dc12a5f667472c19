#pragma once

#include <array>
#include <cstdint>

#include <darkisp/raw_io.hpp>
#include <darkisp/tensor.hpp>

namespace darkisp {

using Mat34 = std::array<double, 12>;  // row-major 3x4
using Mat33 = std::array<double, 9>;

/// The fixed channel-merge matrix: R passes through, the two greens average,
/// B passes through.
constexpr Mat34 kBinning = {1, 0,   0, 0,
                            0, 0.5, 0, 0.5,
                            0, 0,   1, 0};

struct LinearParams {
    std::array<double, 4> wb_gains{1, 1, 1, 1};
    Mat33 ccm{1, 0, 0, 0, 1, 0, 0, 0, 1};
    bool trainable = true;
};

// ---- static camera ISP (plain, non-differentiable reference path) ----

BayerImage white_balance(const BayerImage& img,
                         const std::array<double, 4>& gains);
RgbImage binning(const BayerImage& img);
RgbImage color_transform(const RgbImage& img, const Mat33& ccm);
Mat34 compose(const LinearParams& params);  // C * B * diag(W)
RgbImage apply_matrix(const BayerImage& img, const Mat34& p);

// ---- trainable dynamic mapping ----

struct FeatureNet {
    // local stream: full resolution, 4 -> C -> C with relu
    Tensor local1_w, local1_b, local2_w, local2_b;
    // global stream: four conv+relu+avgpool stages down to /16
    Tensor g1_w, g1_b, g2_w, g2_b, g3_w, g3_b, g4_w, g4_b;
    std::size_t channels = 16;
};

struct AttentionParams {
    Tensor embed;  // d: scalar matrix entry -> token embedding
    Tensor pos;    // 12 x d positional table for the matrix tokens
    Tensor wq, wk, wv, wo;
    std::size_t embed_dim = 16;
};

struct LinearModule {
    Tensor wb_gains;  // 4
    Tensor ccm;       // 3 x 3
    FeatureNet feat;
    AttentionParams local_attn;   // wq: d x C, wk/wv: d x d, wo: 12 x d
    AttentionParams global_attn;  // wq: d x d, wk/wv: d x C, wo: d x 1
    std::size_t channels = 16;
    std::size_t embed_dim = 16;
};

/// meta == nullptr initializes unit gains and identity CCM; attention output
/// projections start at zero so the field reduces to the camera matrix P.
LinearModule make_linear_module(const SensorMeta* meta, std::size_t channels,
                                std::size_t embed_dim, std::uint64_t seed);

struct FeaturePair {
    Tensor local;   // C x H x W
    Tensor global;  // C x H/16 x W/16 (floor at each stage)
};

Tensor compose_base(Graph& g, const Tensor& wb_gains, const Tensor& ccm);

FeaturePair extract_features(Graph& g, const FeatureNet& net,
                             const Tensor& bayer);

/// local_feat C x H x W, base 3x4 -> per-pixel correction stored 12 x (H*W)
Tensor local_attention(Graph& g, const Tensor& local_feat, const Tensor& base,
                       const AttentionParams& attn);

/// base 3x4, global_feat C x h x w -> 3x4 correction
Tensor global_attention(Graph& g, const Tensor& base,
                        const Tensor& global_feat,
                        const AttentionParams& attn);

struct LinearForward {
    Tensor base;      // 3 x 4
    Tensor p_global;  // 3 x 4
    Tensor p_local;   // 12 x (H*W)
    Tensor pooled;    // 3 x 4: base + global + spatial mean of local
    Tensor output;    // 3 x H x W corrected image I'
};

LinearForward linear_forward(Graph& g, const LinearModule& m,
                             const Tensor& bayer);

/// field 12 x (H*W) of per-pixel 3x4 maps applied to a 4 x H x W image
Tensor apply_dynamic(Graph& g, const Tensor& bayer, const Tensor& field);

}  // namespace darkisp
