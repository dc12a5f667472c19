#include <darkisp/linear_isp.hpp>

#include <cmath>

#include <darkisp/rng.hpp>

namespace darkisp {

BayerImage white_balance(const BayerImage& img,
                         const std::array<double, 4>& gains) {
    for (double g : gains)
        if (!(g > 0.0)) throw Error("NonPositiveGain", "white_balance");
    BayerImage out = img;
    const std::size_t n = img.width * img.height;
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t i = 0; i < n; ++i)
            out.planes[p * n + i] = img.planes[p * n + i] * gains[p];
    return out;
}

RgbImage binning(const BayerImage& img) {
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    const std::size_t n = img.width * img.height;
    out.channels.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out.channels[i] = img.planes[i];                                  // R
        out.channels[n + i] =
            0.5 * (img.planes[n + i] + img.planes[3 * n + i]);            // G
        out.channels[2 * n + i] = img.planes[2 * n + i];                  // B
    }
    return out;
}

RgbImage color_transform(const RgbImage& img, const Mat33& ccm) {
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    const std::size_t n = img.width * img.height;
    out.channels.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.channels[i];
        const double g = img.channels[n + i];
        const double b = img.channels[2 * n + i];
        for (std::size_t c = 0; c < 3; ++c)
            out.channels[c * n + i] =
                ccm[c * 3 + 0] * r + ccm[c * 3 + 1] * g + ccm[c * 3 + 2] * b;
    }
    return out;
}

Mat34 compose(const LinearParams& params) {
    // C * B * diag(W): scale B's columns by the gains, then left-multiply
    Mat34 bw{};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            bw[r * 4 + c] = kBinning[r * 4 + c] * params.wb_gains[c];
    Mat34 p{};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 3; ++k)
                acc += params.ccm[r * 3 + k] * bw[k * 4 + c];
            p[r * 4 + c] = acc;
        }
    return p;
}

RgbImage apply_matrix(const BayerImage& img, const Mat34& p) {
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    const std::size_t n = img.width * img.height;
    out.channels.assign(3 * n, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 4; ++k) {
            const double w = p[c * 4 + k];
            const double* in = &img.planes[k * n];
            double* o = &out.channels[c * n];
            for (std::size_t i = 0; i < n; ++i) o[i] += w * in[i];
        }
    return out;
}

namespace {

Tensor conv_init(Rng& rng, std::size_t out_c, std::size_t in_c) {
    const double scale = std::sqrt(2.0 / (in_c * 9.0));
    std::vector<double> w(out_c * in_c * 9);
    for (auto& v : w) v = scale * rng.normal();
    return make_tensor({out_c, in_c, 3, 3}, std::move(w), true);
}

Tensor dense_init(Rng& rng, std::size_t rows, std::size_t cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    std::vector<double> w(rows * cols);
    for (auto& v : w) v = scale * rng.normal();
    return make_tensor({rows, cols}, std::move(w), true);
}

}  // namespace

LinearModule make_linear_module(const SensorMeta* meta, std::size_t channels,
                                std::size_t embed_dim, std::uint64_t seed) {
    Rng rng(seed ^ 0xda5c15b0ull);
    LinearModule m;
    m.channels = channels;
    m.embed_dim = embed_dim;
    const std::size_t C = channels, d = embed_dim;

    std::vector<double> gains{1, 1, 1, 1};
    std::vector<double> ccm{1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (meta) {
        gains.assign(meta->wb_gains.begin(), meta->wb_gains.end());
        ccm.assign(meta->ccm.begin(), meta->ccm.end());
    }
    m.wb_gains = make_tensor({4}, std::move(gains), true);
    m.ccm = make_tensor({3, 3}, std::move(ccm), true);

    m.feat.channels = C;
    m.feat.local1_w = conv_init(rng, C, 4);
    m.feat.local1_b = make_tensor({C}, true);
    m.feat.local2_w = conv_init(rng, C, C);
    m.feat.local2_b = make_tensor({C}, true);
    m.feat.g1_w = conv_init(rng, C, 4);
    m.feat.g1_b = make_tensor({C}, true);
    m.feat.g2_w = conv_init(rng, C, C);
    m.feat.g2_b = make_tensor({C}, true);
    m.feat.g3_w = conv_init(rng, C, C);
    m.feat.g3_b = make_tensor({C}, true);
    m.feat.g4_w = conv_init(rng, C, C);
    m.feat.g4_b = make_tensor({C}, true);

    m.local_attn.embed_dim = d;
    m.local_attn.embed = dense_init(rng, d, 1);
    m.local_attn.pos = dense_init(rng, 12, d);
    m.local_attn.wq = dense_init(rng, d, C);
    m.local_attn.wk = dense_init(rng, d, d);
    m.local_attn.wv = dense_init(rng, d, d);
    m.local_attn.wo = make_tensor({12, d}, true);  // zero: start at P

    m.global_attn.embed_dim = d;
    m.global_attn.embed = dense_init(rng, d, 1);
    m.global_attn.pos = dense_init(rng, 12, d);
    m.global_attn.wq = dense_init(rng, d, d);
    m.global_attn.wk = dense_init(rng, d, C);
    m.global_attn.wv = dense_init(rng, d, C);
    m.global_attn.wo = make_tensor({d, 1}, true);  // zero: start at P
    return m;
}

Tensor compose_base(Graph& g, const Tensor& wb_gains, const Tensor& ccm) {
    Tensor b = make_tensor({3, 4},
                           std::vector<double>(kBinning.begin(), kBinning.end()));
    Tensor gains_row = g.reshape(wb_gains, {1, 4});
    Tensor bw = g.mul(b, g.broadcast(gains_row, {3, 4}));
    return g.matmul(ccm, bw);
}

namespace {

// 12 x d token matrix from the entries of a 3x4 base matrix
Tensor matrix_tokens(Graph& g, const Tensor& base,
                     const AttentionParams& attn) {
    Tensor entries = g.reshape(base, {12, 1});
    Tensor emb_row = g.reshape(attn.embed, {1, attn.embed_dim});
    return g.add(g.matmul(entries, emb_row), attn.pos);
}

}  // namespace

FeaturePair extract_features(Graph& g, const FeatureNet& net,
                             const Tensor& bayer) {
    if (bayer->shape.size() != 3 || bayer->shape[0] != 4)
        throw Error("ShapeMismatch", "extract_features: need 4xHxW");
    if (bayer->shape[1] < 16 || bayer->shape[2] < 16)
        throw Error("ImageTooSmall", "extract_features: need H,W >= 16");
    FeaturePair fp;
    Tensor l1 = g.relu(g.conv2d_3x3(bayer, net.local1_w, net.local1_b));
    fp.local = g.relu(g.conv2d_3x3(l1, net.local2_w, net.local2_b));

    Tensor h = bayer;
    const Tensor* ws[] = {&net.g1_w, &net.g2_w, &net.g3_w, &net.g4_w};
    const Tensor* bs[] = {&net.g1_b, &net.g2_b, &net.g3_b, &net.g4_b};
    for (int s = 0; s < 4; ++s)
        h = g.avg_pool2d(g.relu(g.conv2d_3x3(h, *ws[s], *bs[s])));
    fp.global = h;
    return fp;
}

Tensor local_attention(Graph& g, const Tensor& local_feat, const Tensor& base,
                       const AttentionParams& attn) {
    const std::size_t C = local_feat->shape[0];
    const std::size_t hw = local_feat->numel() / C;
    const std::size_t d = attn.embed_dim;
    if (attn.wq->shape != Shape{d, C})
        throw Error("ShapeMismatch", "local_attention: wq must be d x C");

    Tensor tokens = matrix_tokens(g, base, attn);               // 12 x d
    Tensor keys = g.matmul(tokens, g.transpose(attn.wk));       // 12 x d
    Tensor values = g.matmul(tokens, g.transpose(attn.wv));     // 12 x d
    Tensor feat_flat = g.reshape(local_feat, {C, hw});
    Tensor queries = g.transpose(g.matmul(attn.wq, feat_flat));  // hw x d
    Tensor scores = g.scalar_mul(g.matmul(queries, g.transpose(keys)),
                                 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor weights = g.softmax_rows(scores);                    // hw x 12
    Tensor mixed = g.matmul(weights, values);                   // hw x d
    Tensor corr = g.matmul(mixed, g.transpose(attn.wo));        // hw x 12
    return g.transpose(corr);                                   // 12 x hw
}

Tensor global_attention(Graph& g, const Tensor& base,
                        const Tensor& global_feat,
                        const AttentionParams& attn) {
    const std::size_t C = global_feat->shape[0];
    const std::size_t hw = global_feat->numel() / C;
    const std::size_t d = attn.embed_dim;
    if (hw < 1)
        throw Error("ShapeMismatch", "global_attention: empty feature grid");
    if (attn.wk->shape != Shape{d, C})
        throw Error("ShapeMismatch", "global_attention: wk must be d x C");

    Tensor tokens = matrix_tokens(g, base, attn);                 // 12 x d
    Tensor queries = g.matmul(tokens, g.transpose(attn.wq));      // 12 x d
    Tensor feat_tokens = g.transpose(g.reshape(global_feat, {C, hw}));
    Tensor keys = g.matmul(feat_tokens, g.transpose(attn.wk));    // hw x d
    Tensor values = g.matmul(feat_tokens, g.transpose(attn.wv));  // hw x d
    Tensor scores = g.scalar_mul(g.matmul(queries, g.transpose(keys)),
                                 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor weights = g.softmax_rows(scores);                      // 12 x hw
    Tensor mixed = g.matmul(weights, values);                     // 12 x d
    return g.reshape(g.matmul(mixed, attn.wo), {3, 4});
}

Tensor apply_dynamic(Graph& g, const Tensor& bayer, const Tensor& field) {
    if (bayer->shape.size() != 3 || bayer->shape[0] != 4)
        throw Error("ShapeMismatch", "apply_dynamic: need 4xHxW");
    const std::size_t H = bayer->shape[1], W = bayer->shape[2];
    if (field->shape != Shape{12, H * W})
        throw Error("ShapeMismatch", "apply_dynamic: field dims mismatch");
    Tensor img_flat = g.reshape(bayer, {4, H * W});
    Tensor out = g.pixelwise_matmul(field, img_flat, 3);
    return g.reshape(out, {3, H, W});
}

LinearForward linear_forward(Graph& g, const LinearModule& m,
                             const Tensor& bayer) {
    const std::size_t H = bayer->shape[1], W = bayer->shape[2];
    const std::size_t hw = H * W;
    LinearForward fwd;
    fwd.base = compose_base(g, m.wb_gains, m.ccm);
    FeaturePair fp = extract_features(g, m.feat, bayer);
    fwd.p_local = local_attention(g, fp.local, fwd.base, m.local_attn);
    fwd.p_global = global_attention(g, fwd.base, fp.global, m.global_attn);

    Tensor static_part = g.add(fwd.base, fwd.p_global);  // 3 x 4
    Tensor field = g.add(
        g.broadcast(g.reshape(static_part, {12, 1}), {12, hw}), fwd.p_local);
    fwd.output = apply_dynamic(g, bayer, field);

    // spatial mean of the local corrections; this pooled matrix is the one
    // the self-boost loss consumes
    Tensor ones = make_tensor({hw, 1},
                              std::vector<double>(hw, 1.0 / double(hw)));
    Tensor local_mean = g.reshape(g.matmul(fwd.p_local, ones), {3, 4});
    fwd.pooled = g.add(static_part, local_mean);
    return fwd;
}

}  // namespace darkisp
