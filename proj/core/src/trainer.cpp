#include <darkisp/trainer.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include <darkisp/linalg.hpp>

namespace fs = std::filesystem;

namespace darkisp {

TrainConfig train_config_from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidHeader", e.what());
    }
    TrainConfig cfg;
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.warmup = j.value("warmup", cfg.warmup);
    cfg.sb_flow_through = j.value("sb_flow_through", cfg.sb_flow_through);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.proxy = j.value("proxy", cfg.proxy);
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.channels = m.value("channels", cfg.model.channels);
        cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
        cfg.model.order = m.value("order", cfg.model.order);
        cfg.model.coeff_width = m.value("coeff_width", cfg.model.coeff_width);
    }
    cfg.model.seed = cfg.seed;
    if (!(cfg.lr > 0.0) && cfg.lr != 0.0)
        throw Error("InvalidHeader", "lr must be >= 0");
    if (cfg.warmup < 0 || cfg.warmup > cfg.epochs)
        throw Error("InvalidHeader", "need 0 <= warmup <= epochs");
    if (cfg.batch < 1) throw Error("InvalidHeader", "batch must be >= 1");
    if (cfg.proxy != "reconstruction")
        throw Error("InvalidHeader", "unknown proxy loss: " + cfg.proxy);
    return cfg;
}

std::string config_hash(const TrainConfig& cfg) {
    nlohmann::json j;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["epochs"] = cfg.epochs;
    j["lambda"] = cfg.lambda;
    j["warmup"] = cfg.warmup;
    j["sb_flow_through"] = cfg.sb_flow_through;
    j["batch"] = cfg.batch;
    j["seed"] = cfg.seed;
    j["proxy"] = cfg.proxy;
    j["model"] = {{"channels", cfg.model.channels},
                  {"embed_dim", cfg.model.embed_dim},
                  {"order", cfg.model.order},
                  {"coeff_width", cfg.model.coeff_width}};
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

Tensor proxy_loss(Graph& g, const Tensor& u, const Tensor& reference) {
    if (u->shape != reference->shape)
        throw Error("ShapeMismatch", "proxy_loss: dims differ");
    Tensor d = g.sub(u, reference);
    return g.mean(g.mul(d, d));
}

double mse(const RgbImage& a, const RgbImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw Error("ShapeMismatch", "mse: dims differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.channels.size(); ++i) {
        const double d = a.channels[i] - b.channels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.channels.size());
}

void sgd_step(const std::vector<std::pair<std::string, Tensor>>& params,
              SgdState& state, const TrainConfig& cfg) {
    if (state.velocity.empty()) {
        state.velocity.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            state.velocity[i].assign(params[i].second->numel(), 0.0);
    }
    if (state.velocity.size() != params.size())
        throw Error("ShapeMismatch", "sgd_step: state size");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params[i];
        auto& v = state.velocity[i];
        if (v.size() != p->numel())
            throw Error("ShapeMismatch", "sgd_step: velocity for " + name);
        if (p->grad.size() != p->numel())
            throw Error("ShapeMismatch", "sgd_step: missing grad for " + name);
        const bool decay =
            cfg.weight_decay != 0.0 && name != "linear.wb_gains" &&
            name != "linear.ccm";
        for (std::size_t k = 0; k < v.size(); ++k) {
            double grad = p->grad[k];
            if (decay) grad += cfg.weight_decay * p->value[k];
            v[k] = cfg.momentum * v[k] + grad;
            p->value[k] -= cfg.lr * v[k];
        }
    }
}

namespace {

struct LoadedPair {
    BayerImage raw;
    RgbImage ref;
    Tensor raw_t;  // constant inputs shared across epochs
    Tensor ref_t;
};

std::vector<LoadedPair> load_pairs(const std::string& manifest_path) {
    const Manifest m = load_manifest(manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<LoadedPair> out;
    for (const auto& p : m.pairs) {
        LoadedPair lp;
        try {
            lp.raw = load_bayer((dir / p.raw).string());
            lp.ref = load_rgb((dir / p.reference).string());
        } catch (const Error& e) {
            throw Error("ManifestError", std::string(e.what()));
        }
        if (lp.raw.width != lp.ref.width || lp.raw.height != lp.ref.height)
            throw Error("ManifestError", "pair dims differ: " + p.raw);
        lp.raw_t = bayer_to_tensor(lp.raw);
        lp.ref_t = rgb_to_tensor(lp.ref);
        out.push_back(std::move(lp));
    }
    if (out.empty()) throw Error("ManifestError", "empty dataset");
    return out;
}

Mat34 pooled_mat(const Tensor& t) {
    Mat34 m;
    for (int i = 0; i < 12; ++i) m[i] = t->value[i];
    return m;
}

// Constant right-factor I^T (I I^T)^-1 so the pseudo-target can be expressed
// as a matmul of U when gradients should flow through it.
Tensor flow_through_factor(const BayerImage& raw, const PseudoTarget& pt,
                           double kappa_threshold, double svd_rtol) {
    const std::size_t n = raw.width * raw.height;
    double g[16];
    for (int r = 0; r < 4; ++r)
        for (int c = r; c < 4; ++c) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p)
                acc += raw.planes[r * n + p] * raw.planes[c * n + p];
            g[r * 4 + c] = g[c * 4 + r] = acc;
        }
    double ginv[16];
    if (!pt.used_pinv && std::isfinite(pt.kappa) &&
        pt.kappa <= kappa_threshold && linalg::invert(g, 4, ginv)) {
        // direct route
    } else {
        linalg::pinv_sym(g, 4, svd_rtol, ginv);
    }
    Tensor f = make_tensor({n, 4});
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < 4; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k)
                acc += raw.planes[k * n + p] * ginv[k * 4 + c];
            f->value[p * 4 + c] = acc;
        }
    return f;
}

}  // namespace

TrainResult train(Model& m, const TrainConfig& cfg,
                  const std::string& manifest_path, const std::string& out_path,
                  std::ostream* log_stream) {
    auto pairs = load_pairs(manifest_path);
    auto params = m.named_params();
    SgdState state;
    SelfBoostConfig sb;
    sb.lambda = cfg.lambda;
    sb.warmup = cfg.warmup;
    sb.flow_through = cfg.sb_flow_through;

    TrainResult result;
    if (log_stream)
        *log_stream << "epoch, l_task, l_sb, total, kappa_mean, "
                       "residual_mean, residual_grad_norm\n";

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool active = epoch >= cfg.warmup && cfg.lambda != 0.0;
        EpochLog log;
        log.epoch = epoch;
        std::size_t in_batch = 0;
        for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
            auto& pair = pairs[idx];
            if (in_batch == 0)
                for (auto& [name, p] : params) p->zero_grad();

            Graph g;
            ForwardResult fwd = model_forward(g, m, pair.raw_t);
            Tensor l_task = proxy_loss(g, fwd.enhanced, pair.ref_t);

            const std::size_t n = pair.raw.width * pair.raw.height;
            PseudoTarget pt = solve_pseudo_target(
                fwd.enhanced->value.data(), pair.raw.planes.data(), n,
                sb.kappa_threshold, sb.svd_rtol);
            const double l_sb_v =
                sb_loss_value(pooled_mat(fwd.lin.pooled), pt.p_tilde);

            Tensor total = l_task;
            if (active) {
                Tensor target;
                if (cfg.sb_flow_through) {
                    Tensor u2d = g.reshape(fwd.enhanced, {3, n});
                    target = g.matmul(
                        u2d, flow_through_factor(pair.raw, pt,
                                                 sb.kappa_threshold,
                                                 sb.svd_rtol));
                } else {
                    target = make_tensor(
                        {3, 4}, std::vector<double>(pt.p_tilde.begin(),
                                                    pt.p_tilde.end()));
                }
                Tensor l_sb_t = sb_loss(g, fwd.lin.pooled, target);
                total = g.add(l_task, g.scalar_mul(l_sb_t, cfg.lambda));
            }
            if (!std::isfinite(total->value[0]))
                throw Error("NonFiniteLoss",
                            "epoch " + std::to_string(epoch) + ", image " +
                                std::to_string(idx));
            g.backward(total);
            ++in_batch;
            ++result.steps;

            const bool flush =
                in_batch == cfg.batch || idx + 1 == pairs.size();
            if (flush) {
                if (in_batch > 1) {
                    const double inv = 1.0 / static_cast<double>(in_batch);
                    for (auto& [name, p] : params)
                        for (double& gv : p->grad) gv *= inv;
                }
                sgd_step(params, state, cfg);
                in_batch = 0;
            }

            SelfBoostDiagnostics d =
                diagnostics(fwd.enhanced->value.data(),
                            pair.raw.planes.data(), n,
                            pooled_mat(fwd.lin.pooled));
            log.l_task += l_task->value[0];
            log.l_sb += l_sb_v;
            log.total += active ? l_task->value[0] + cfg.lambda * l_sb_v
                                : l_task->value[0];
            log.kappa_mean += std::isfinite(pt.kappa) ? pt.kappa : 0.0;
            log.residual_mean += d.residual_mean;
            log.residual_grad_norm += d.residual_grad_norm;

            result.final_loss =
                compound_loss(l_task->value[0], l_sb_v, cfg.lambda, epoch,
                              cfg.warmup);
        }
        const double inv = 1.0 / static_cast<double>(pairs.size());
        log.l_task *= inv;
        log.l_sb *= inv;
        log.total *= inv;
        log.kappa_mean *= inv;
        log.residual_mean *= inv;
        log.residual_grad_norm *= inv;
        result.log.push_back(log);
        if (log_stream)
            *log_stream << log.epoch << ", " << log.l_task << ", " << log.l_sb
                        << ", " << log.total << ", " << log.kappa_mean << ", "
                        << log.residual_mean << ", " << log.residual_grad_norm
                        << "\n";
    }

    if (!out_path.empty())
        save_checkpoint(m, out_path, cfg.epochs, config_hash(cfg),
                        result.final_loss);
    return result;
}

EvalMetrics evaluate(const Model& m, const std::string& manifest_path) {
    auto pairs = load_pairs(manifest_path);
    EvalMetrics metrics;
    metrics.pairs = pairs.size();
    double psnr_acc = 0.0;
    for (auto& pair : pairs) {
        Graph g;
        ForwardResult fwd = model_forward(g, m, pair.raw_t);
        RgbImage u =
            rgb_from_tensor(fwd.enhanced, pair.raw.height, pair.raw.width);
        const double e = mse(u, pair.ref);
        psnr_acc += e > 0.0 ? 10.0 * std::log10(1.0 / e)
                            : std::numeric_limits<double>::infinity();
        SelfBoostDiagnostics d =
            diagnostics(u, pair.raw, pooled_mat(fwd.lin.pooled));
        metrics.residual_mean += d.residual_mean;
        PseudoTarget pt = solve_pseudo_target(u, pair.raw);
        metrics.kappa_mean += std::isfinite(pt.kappa) ? pt.kappa : 0.0;
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    metrics.residual_mean *= inv;
    metrics.kappa_mean *= inv;
    metrics.psnr_mean = psnr_acc * inv;
    return metrics;
}

}  // namespace darkisp
