#include <darkisp/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>

#include <darkisp/nonlinear_isp.hpp>

namespace darkisp {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

Tensor make_tensor(const Shape& shape, bool requires_grad) {
    auto t = std::make_shared<TensorNode>();
    t->shape = shape;
    t->value.assign(shape_numel(shape), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

Tensor make_tensor(const Shape& shape, std::vector<double> data,
                   bool requires_grad) {
    if (data.size() != shape_numel(shape))
        throw Error("ShapeMismatch", "data length does not match shape");
    auto t = std::make_shared<TensorNode>();
    t->shape = shape;
    t->value = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

Tensor scalar_tensor(double v, bool requires_grad) {
    return make_tensor({1}, {v}, requires_grad);
}

void check_finite(const Tensor& t, const char* what) {
    for (double v : t->value)
        if (!std::isfinite(v)) throw Error("NonFiniteInput", what);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a->shape != b->shape)
        throw Error("ShapeMismatch", std::string(op) + ": shapes differ");
}

}  // namespace

Tensor Graph::result_of(const Shape& shape,
                        std::initializer_list<const Tensor*> inputs) {
    auto out = make_tensor(shape);
    bool need = false;
    for (auto* in : inputs) need = need || (*in)->requires_grad;
    out->requires_grad = need;
    return out;
}

void Graph::backward(const Tensor& loss) {
    if (loss->numel() != 1)
        throw Error("ShapeMismatch", "backward: loss must be scalar");
    // Intermediate grads are scratch per pass; only leaves accumulate across
    // backward() calls, so repeating a pass adds the exact same contribution.
    for (auto& p : produced_) p->zero_grad();
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

// Each op closure follows the pattern: if out has no grad buffer, nothing
// flowed, skip; else accumulate vjps into inputs that require grad.

#define OUT_GRAD                                     \
    if (out->grad.empty()) return;                   \
    const std::vector<double>& go = out->grad;

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = result_of(a->shape, {&a, &b});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value[i] = a->value[i] + b->value[i];
    if (out->requires_grad) {
        track_output(out);
        record([a, b, out, n]() {
            OUT_GRAD
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += go[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] += go[i];
            }
        });
    }
    return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = result_of(a->shape, {&a, &b});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value[i] = a->value[i] - b->value[i];
    if (out->requires_grad) {
        track_output(out);
        record([a, b, out, n]() {
            OUT_GRAD
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += go[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] -= go[i];
            }
        });
    }
    return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = result_of(a->shape, {&a, &b});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value[i] = a->value[i] * b->value[i];
    if (out->requires_grad) {
        track_output(out);
        record([a, b, out, n]() {
            OUT_GRAD
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    a->grad[i] += go[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    b->grad[i] += go[i] * a->value[i];
            }
        });
    }
    return out;
}

Tensor Graph::scalar_mul(const Tensor& a, double c) {
    Tensor out = result_of(a->shape, {&a});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i) out->value[i] = a->value[i] * c;
    if (out->requires_grad) {
        track_output(out);
        record([a, out, c, n]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += go[i] * c;
        });
    }
    return out;
}

Tensor Graph::scalar_pow(const Tensor& a, double p) {
    Tensor out = result_of(a->shape, {&a});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value[i] = std::pow(a->value[i], p);
    if (out->requires_grad) {
        track_output(out);
        record([a, out, p, n]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                a->grad[i] += go[i] * p * std::pow(a->value[i], p - 1.0);
        });
    }
    return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 ||
        a->shape[1] != b->shape[0])
        throw Error("ShapeMismatch", "matmul: need MxK by KxN");
    const std::size_t M = a->shape[0], K = a->shape[1], N = b->shape[1];
    Tensor out = result_of({M, N}, {&a, &b});
    for (std::size_t m = 0; m < M; ++m) {
        double* orow = &out->value[m * N];
        for (std::size_t k = 0; k < K; ++k) {
            const double av = a->value[m * K + k];
            const double* brow = &b->value[k * N];
            for (std::size_t j = 0; j < N; ++j) orow[j] += av * brow[j];
        }
    }
    if (out->requires_grad) {
        track_output(out);
        record([a, b, out, M, K, N]() {
            OUT_GRAD
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t k = 0; k < K; ++k) {
                        double acc = 0.0;
                        const double* brow = &b->value[k * N];
                        const double* grow = &go[m * N];
                        for (std::size_t j = 0; j < N; ++j)
                            acc += grow[j] * brow[j];
                        a->grad[m * K + k] += acc;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t k = 0; k < K; ++k) {
                        const double av = a->value[m * K + k];
                        const double* grow = &go[m * N];
                        double* brow = &b->grad[k * N];
                        for (std::size_t j = 0; j < N; ++j)
                            brow[j] += av * grow[j];
                    }
            }
        });
    }
    return out;
}

Tensor Graph::transpose(const Tensor& a) {
    if (a->shape.size() != 2)
        throw Error("ShapeMismatch", "transpose: need 2-D tensor");
    const std::size_t M = a->shape[0], N = a->shape[1];
    Tensor out = result_of({N, M}, {&a});
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t j = 0; j < N; ++j)
            out->value[j * M + m] = a->value[m * N + j];
    if (out->requires_grad) {
        track_output(out);
        record([a, out, M, N]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t j = 0; j < N; ++j)
                    a->grad[m * N + j] += go[j * M + m];
        });
    }
    return out;
}

Tensor Graph::conv2d_3x3(const Tensor& input, const Tensor& weight,
                         const Tensor& bias) {
    if (input->shape.size() != 3)
        throw Error("ShapeMismatch", "conv2d_3x3: input must be CxHxW");
    const std::size_t C = input->shape[0], H = input->shape[1],
                      W = input->shape[2];
    if (weight->shape.size() != 4 || weight->shape[1] != C ||
        weight->shape[2] != 3 || weight->shape[3] != 3)
        throw Error("ShapeMismatch", "conv2d_3x3: weight must be OxCx3x3");
    const std::size_t O = weight->shape[0];
    if (bias->shape != Shape{O})
        throw Error("ShapeMismatch", "conv2d_3x3: bias must be O");

    Tensor out = result_of({O, H, W}, {&input, &weight, &bias});
    const double* in = input->value.data();
    const double* w = weight->value.data();
    for (std::size_t o = 0; o < O; ++o) {
        double* oplane = &out->value[o * H * W];
        const double bv = bias->value[o];
        for (std::size_t i = 0; i < H * W; ++i) oplane[i] = bv;
        for (std::size_t c = 0; c < C; ++c) {
            const double* iplane = &in[c * H * W];
            const double* wk = &w[(o * C + c) * 9];
            for (std::size_t y = 0; y < H; ++y) {
                const std::size_t y0 = (y > 0) ? y - 1 : 0;
                const std::size_t y1 = std::min(y + 1, H - 1);
                double* orow = &oplane[y * W];
                for (std::size_t ky = (y == 0 ? 1u : 0u);
                     ky <= (y + 1 < H ? 2u : 1u); ++ky) {
                    const double* irow = &iplane[(y + ky - 1) * W];
                    const double w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1],
                                 w2 = wk[ky * 3 + 2];
                    // interior columns
                    orow[0] += w1 * irow[0];
                    if (W > 1) orow[0] += w2 * irow[1];
                    for (std::size_t x = 1; x + 1 < W; ++x)
                        orow[x] += w0 * irow[x - 1] + w1 * irow[x] +
                                   w2 * irow[x + 1];
                    if (W > 1) {
                        orow[W - 1] += w0 * irow[W - 2] + w1 * irow[W - 1];
                    }
                }
                (void)y0;
                (void)y1;
            }
        }
    }
    if (out->requires_grad) {
        track_output(out);
        record([input, weight, bias, out, C, H, W, O]() {
            OUT_GRAD
            const double* in = input->value.data();
            const double* w = weight->value.data();
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = 0.0;
                    const double* gp = &go[o * H * W];
                    for (std::size_t i = 0; i < H * W; ++i) acc += gp[i];
                    bias->grad[o] += acc;
                }
            }
            const bool gin = input->requires_grad;
            const bool gw = weight->requires_grad;
            if (gin) input->ensure_grad();
            if (gw) weight->ensure_grad();
            if (!gin && !gw) return;
            for (std::size_t o = 0; o < O; ++o) {
                const double* gplane = &go[o * H * W];
                for (std::size_t c = 0; c < C; ++c) {
                    const double* iplane = &in[c * H * W];
                    const double* wk = &w[(o * C + c) * 9];
                    double* giplane = gin ? &input->grad[c * H * W] : nullptr;
                    double* gwk = gw ? &weight->grad[(o * C + c) * 9] : nullptr;
                    for (std::size_t y = 0; y < H; ++y) {
                        const double* grow = &gplane[y * W];
                        for (std::size_t ky = (y == 0 ? 1u : 0u);
                             ky <= (y + 1 < H ? 2u : 1u); ++ky) {
                            const std::size_t yy = y + ky - 1;
                            const double* irow = &iplane[yy * W];
                            double* girow = gin ? &giplane[yy * W] : nullptr;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const double wv = wk[ky * 3 + kx];
                                double wacc = 0.0;
                                const std::size_t x0 = (kx == 0) ? 1 : 0;
                                const std::size_t x1 =
                                    (kx == 2) ? (W >= 1 ? W - 1 : 0) : W;
                                for (std::size_t x = x0; x < x1; ++x) {
                                    const std::size_t xx = x + kx - 1;
                                    const double g = grow[x];
                                    if (gin) girow[xx] += wv * g;
                                    if (gw) wacc += g * irow[xx];
                                }
                                if (gw) gwk[ky * 3 + kx] += wacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor Graph::avg_pool2d(const Tensor& input) {
    if (input->shape.size() != 3)
        throw Error("ShapeMismatch", "avg_pool2d: input must be CxHxW");
    const std::size_t C = input->shape[0], H = input->shape[1],
                      W = input->shape[2];
    const std::size_t Ho = H / 2, Wo = W / 2;
    if (Ho == 0 || Wo == 0)
        throw Error("ShapeMismatch", "avg_pool2d: image too small");
    Tensor out = result_of({C, Ho, Wo}, {&input});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x) {
                const double* p = &input->value[(c * H + 2 * y) * W + 2 * x];
                out->value[(c * Ho + y) * Wo + x] =
                    0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
            }
    if (out->requires_grad) {
        track_output(out);
        record([input, out, C, H, W, Ho, Wo]() {
            OUT_GRAD
            input->ensure_grad();
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < Ho; ++y)
                    for (std::size_t x = 0; x < Wo; ++x) {
                        const double g =
                            0.25 * go[(c * Ho + y) * Wo + x];
                        double* p =
                            &input->grad[(c * H + 2 * y) * W + 2 * x];
                        p[0] += g;
                        p[1] += g;
                        p[W] += g;
                        p[W + 1] += g;
                    }
        });
    }
    return out;
}

Tensor Graph::softmax_rows(const Tensor& a) {
    if (a->shape.empty())
        throw Error("ShapeMismatch", "softmax: need at least one axis");
    check_finite(a, "softmax input");
    const std::size_t N = a->shape.back();
    const std::size_t rows = a->numel() / N;
    Tensor out = result_of(a->shape, {&a});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &a->value[r * N];
        double* s = &out->value[r * N];
        double mx = x[0];
        for (std::size_t j = 1; j < N; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            s[j] = std::exp(x[j] - mx);
            z += s[j];
        }
        for (std::size_t j = 0; j < N; ++j) s[j] /= z;
    }
    if (out->requires_grad) {
        track_output(out);
        record([a, out, rows, N]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* s = &out->value[r * N];
                const double* g = &go[r * N];
                double dot = 0.0;
                for (std::size_t j = 0; j < N; ++j) dot += g[j] * s[j];
                double* ga = &a->grad[r * N];
                for (std::size_t j = 0; j < N; ++j)
                    ga[j] += s[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

Tensor Graph::relu(const Tensor& a) {
    Tensor out = result_of(a->shape, {&a});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    if (out->requires_grad) {
        track_output(out);
        record([a, out, n]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                if (a->value[i] > 0.0) a->grad[i] += go[i];
        });
    }
    return out;
}

Tensor Graph::mean(const Tensor& a) {
    const std::size_t n = a->numel();
    double acc = 0.0;
    for (double v : a->value) acc += v;
    Tensor out = result_of({1}, {&a});
    out->value[0] = acc / static_cast<double>(n);
    if (out->requires_grad) {
        track_output(out);
        record([a, out, n]() {
            OUT_GRAD
            a->ensure_grad();
            const double g = go[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += g;
        });
    }
    return out;
}

Tensor Graph::sum(const Tensor& a) {
    const std::size_t n = a->numel();
    double acc = 0.0;
    for (double v : a->value) acc += v;
    Tensor out = result_of({1}, {&a});
    out->value[0] = acc;
    if (out->requires_grad) {
        track_output(out);
        record([a, out, n]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += go[0];
        });
    }
    return out;
}

Tensor Graph::reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a->numel())
        throw Error("ShapeMismatch", "reshape: element count differs");
    Tensor out = result_of(shape, {&a});
    out->value = a->value;
    if (out->requires_grad) {
        track_output(out);
        record([a, out]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < go.size(); ++i) a->grad[i] += go[i];
        });
    }
    return out;
}

Tensor Graph::broadcast(const Tensor& a, const Shape& shape) {
    // align trailing axes; each source extent must equal the target or be 1
    const std::size_t nd = shape.size();
    if (a->shape.size() > nd)
        throw Error("ShapeMismatch", "broadcast: rank would shrink");
    Shape src(nd, 1);
    std::copy(a->shape.begin(), a->shape.end(),
              src.begin() + (nd - a->shape.size()));
    for (std::size_t d = 0; d < nd; ++d)
        if (src[d] != shape[d] && src[d] != 1)
            throw Error("ShapeMismatch", "broadcast: incompatible extent");

    std::vector<std::size_t> sstride(nd, 0), tstride(nd, 1);
    std::size_t s = 1;
    for (std::size_t d = nd; d-- > 0;) {
        tstride[d] = s;
        s *= shape[d];
    }
    s = 1;
    for (std::size_t d = nd; d-- > 0;) {
        sstride[d] = (src[d] == 1) ? 0 : s;
        s *= src[d];
    }
    Tensor out = result_of(shape, {&a});
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i, si = 0;
        for (std::size_t d = 0; d < nd; ++d) {
            const std::size_t idx = rem / tstride[d];
            rem %= tstride[d];
            si += idx * sstride[d];
        }
        out->value[i] = a->value[si];
    }
    if (out->requires_grad) {
        track_output(out);
        record([a, out, sstride, tstride, nd, n]() {
            OUT_GRAD
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t rem = i, si = 0;
                for (std::size_t d = 0; d < nd; ++d) {
                    const std::size_t idx = rem / tstride[d];
                    rem %= tstride[d];
                    si += idx * sstride[d];
                }
                a->grad[si] += go[i];
            }
        });
    }
    return out;
}

Tensor Graph::cosine_rows(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine_rows");
    if (a->shape.size() != 2)
        throw Error("ShapeMismatch", "cosine_rows: need MxN");
    const std::size_t M = a->shape[0], N = a->shape[1];
    constexpr double kFloor = 1e-30;
    Tensor out = result_of({M}, {&a, &b});
    for (std::size_t r = 0; r < M; ++r) {
        const double* ar = &a->value[r * N];
        const double* br = &b->value[r * N];
        double aa = 0, bb = 0, ab = 0;
        for (std::size_t j = 0; j < N; ++j) {
            aa += ar[j] * ar[j];
            bb += br[j] * br[j];
            ab += ar[j] * br[j];
        }
        const double na = std::sqrt(aa), nb = std::sqrt(bb);
        out->value[r] = (na < kFloor || nb < kFloor) ? 0.0 : ab / (na * nb);
    }
    if (out->requires_grad) {
        track_output(out);
        record([a, b, out, M, N]() {
            OUT_GRAD
            for (std::size_t r = 0; r < M; ++r) {
                const double* ar = &a->value[r * N];
                const double* br = &b->value[r * N];
                double aa = 0, bb = 0, ab = 0;
                for (std::size_t j = 0; j < N; ++j) {
                    aa += ar[j] * ar[j];
                    bb += br[j] * br[j];
                    ab += ar[j] * br[j];
                }
                const double na = std::sqrt(aa), nb = std::sqrt(bb);
                if (na < kFloor || nb < kFloor) continue;  // flat region
                const double c = ab / (na * nb);
                const double g = go[r];
                if (a->requires_grad) {
                    a->ensure_grad();
                    double* ga = &a->grad[r * N];
                    for (std::size_t j = 0; j < N; ++j)
                        ga[j] += g * (br[j] / (na * nb) - c * ar[j] / aa);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    double* gb = &b->grad[r * N];
                    for (std::size_t j = 0; j < N; ++j)
                        gb[j] += g * (ar[j] / (na * nb) - c * br[j] / bb);
                }
            }
        });
    }
    return out;
}

Tensor Graph::l2_norm(const Tensor& a) {
    double acc = 0.0;
    for (double v : a->value) acc += v * v;
    const double norm = std::sqrt(acc);
    Tensor out = result_of({1}, {&a});
    out->value[0] = norm;
    if (out->requires_grad) {
        track_output(out);
        record([a, out, norm]() {
            OUT_GRAD
            if (norm <= 0.0) return;
            a->ensure_grad();
            const double g = go[0] / norm;
            for (std::size_t i = 0; i < a->numel(); ++i)
                a->grad[i] += g * a->value[i];
        });
    }
    return out;
}

Tensor Graph::pixelwise_matmul(const Tensor& field, const Tensor& img,
                               std::size_t rows_out) {
    if (field->shape.size() != 2 || img->shape.size() != 2 ||
        field->shape[1] != img->shape[1])
        throw Error("ShapeMismatch", "pixelwise_matmul: column counts differ");
    const std::size_t K = img->shape[0], N = img->shape[1], M = rows_out;
    if (field->shape[0] != M * K)
        throw Error("ShapeMismatch",
                    "pixelwise_matmul: field rows must be rows_out * K");
    Tensor out = result_of({M, N}, {&field, &img});
    for (std::size_t m = 0; m < M; ++m) {
        double* orow = &out->value[m * N];
        for (std::size_t k = 0; k < K; ++k) {
            const double* frow = &field->value[(m * K + k) * N];
            const double* irow = &img->value[k * N];
            for (std::size_t p = 0; p < N; ++p) orow[p] += frow[p] * irow[p];
        }
    }
    if (out->requires_grad) {
        track_output(out);
        record([field, img, out, M, K, N]() {
            OUT_GRAD
            if (field->requires_grad) {
                field->ensure_grad();
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t k = 0; k < K; ++k) {
                        double* gf = &field->grad[(m * K + k) * N];
                        const double* irow = &img->value[k * N];
                        const double* grow = &go[m * N];
                        for (std::size_t p = 0; p < N; ++p)
                            gf[p] += grow[p] * irow[p];
                    }
            }
            if (img->requires_grad) {
                img->ensure_grad();
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t k = 0; k < K; ++k) {
                        const double* frow = &field->value[(m * K + k) * N];
                        double* gi = &img->grad[k * N];
                        const double* grow = &go[m * N];
                        for (std::size_t p = 0; p < N; ++p)
                            gi[p] += grow[p] * frow[p];
                    }
            }
        });
    }
    return out;
}

Tensor Graph::poly_mix(const Tensor& x, const Tensor& coeffs,
                       const BasisFamily& family) {
    if (x->shape.empty() || coeffs->shape.empty())
        throw Error("ShapeMismatch", "poly_mix: empty tensors");
    const std::size_t C = x->shape[0];
    const std::size_t N = x->numel() / C;
    const std::size_t nb = family.order() + 1;
    if (coeffs->shape[0] != nb || coeffs->numel() / nb != N)
        throw Error("ShapeMismatch",
                    "poly_mix: coefficient maps must be (n+1) x spatial");
    const bool skip = family.skip_mode();
    Tensor out = result_of(x->shape, {&x, &coeffs});
    for (std::size_t c = 0; c < C; ++c) {
        const double* xr = &x->value[c * N];
        double* orow = &out->value[c * N];
        for (std::size_t p = 0; p < N; ++p) {
            const double xv = xr[p];
            double acc = skip ? xv : 0.0;
            for (std::size_t k = 0; k < nb; ++k)
                acc += coeffs->value[k * N + p] * family.eval(k, xv);
            orow[p] = acc;
        }
    }
    if (out->requires_grad) {
        track_output(out);
        record([x, coeffs, out, family, C, N, nb, skip]() {
            OUT_GRAD
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t c = 0; c < C; ++c) {
                    const double* xr = &x->value[c * N];
                    const double* grow = &go[c * N];
                    double* gx = &x->grad[c * N];
                    for (std::size_t p = 0; p < N; ++p) {
                        double d = skip ? 1.0 : 0.0;
                        for (std::size_t k = 0; k < nb; ++k)
                            d += coeffs->value[k * N + p] *
                                 family.deriv(k, xr[p]);
                        gx[p] += grow[p] * d;
                    }
                }
            }
            if (coeffs->requires_grad) {
                coeffs->ensure_grad();
                for (std::size_t k = 0; k < nb; ++k) {
                    double* gc = &coeffs->grad[k * N];
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* xr = &x->value[c * N];
                        const double* grow = &go[c * N];
                        for (std::size_t p = 0; p < N; ++p)
                            gc[p] += grow[p] * family.eval(k, xr[p]);
                    }
                }
            }
        });
    }
    return out;
}

#undef OUT_GRAD

}  // namespace darkisp
