#include <darkisp/pipeline.hpp>

#include <fstream>

#include <json.hpp>

namespace darkisp {

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("linear.wb_gains", linear.wb_gains);
    out.emplace_back("linear.ccm", linear.ccm);
    out.emplace_back("linear.local_feat.conv1.w", linear.feat.local1_w);
    out.emplace_back("linear.local_feat.conv1.b", linear.feat.local1_b);
    out.emplace_back("linear.local_feat.conv2.w", linear.feat.local2_w);
    out.emplace_back("linear.local_feat.conv2.b", linear.feat.local2_b);
    out.emplace_back("linear.global_feat.stage1.w", linear.feat.g1_w);
    out.emplace_back("linear.global_feat.stage1.b", linear.feat.g1_b);
    out.emplace_back("linear.global_feat.stage2.w", linear.feat.g2_w);
    out.emplace_back("linear.global_feat.stage2.b", linear.feat.g2_b);
    out.emplace_back("linear.global_feat.stage3.w", linear.feat.g3_w);
    out.emplace_back("linear.global_feat.stage3.b", linear.feat.g3_b);
    out.emplace_back("linear.global_feat.stage4.w", linear.feat.g4_w);
    out.emplace_back("linear.global_feat.stage4.b", linear.feat.g4_b);
    auto attn = [&out](const std::string& prefix, const AttentionParams& a) {
        out.emplace_back(prefix + ".embed", a.embed);
        out.emplace_back(prefix + ".pos", a.pos);
        out.emplace_back(prefix + ".wq", a.wq);
        out.emplace_back(prefix + ".wk", a.wk);
        out.emplace_back(prefix + ".wv", a.wv);
        out.emplace_back(prefix + ".wo", a.wo);
    };
    attn("linear.local_attn", linear.local_attn);
    attn("linear.global_attn", linear.global_attn);
    out.emplace_back("nonlinear.conv1.w", coeff.conv1_w);
    out.emplace_back("nonlinear.conv1.b", coeff.conv1_b);
    out.emplace_back("nonlinear.conv2.w", coeff.conv2_w);
    out.emplace_back("nonlinear.conv2.b", coeff.conv2_b);
    out.emplace_back("nonlinear.conv3.w", coeff.conv3_w);
    out.emplace_back("nonlinear.conv3.b", coeff.conv3_b);
    return out;
}

Model make_model(const SensorMeta* meta, const ModelConfig& cfg) {
    Model m;
    m.config = cfg;
    m.linear = make_linear_module(meta, cfg.channels, cfg.embed_dim, cfg.seed);
    m.coeff = make_coefficient_net(cfg.order, cfg.coeff_width,
                                   cfg.seed ^ 0x5f3759df);
    m.family = BasisFamily::make_default(cfg.order, true);
    return m;
}

ForwardResult model_forward(Graph& g, const Model& m, const Tensor& bayer) {
    ForwardResult r;
    r.lin = linear_forward(g, m.linear, bayer);
    r.coeffs = predict_coefficients(g, r.lin.output, m.coeff);
    r.enhanced = apply_nonlinear(g, r.lin.output, r.coeffs, m.family);
    return r;
}

void save_checkpoint(const Model& m, const std::string& path, int epoch,
                     const std::string& config_hash,
                     const LossReport& final_loss) {
    nlohmann::json j;
    nlohmann::json params;
    for (const auto& [name, t] : m.named_params()) {
        nlohmann::json p;
        p["shape"] = t->shape;
        p["data"] = t->value;
        params[name] = p;
    }
    j["params"] = params;
    j["epoch"] = epoch;
    j["config_hash"] = config_hash;
    j["final_loss"] = {{"l_sb", final_loss.l_sb},
                       {"l_task", final_loss.l_task},
                       {"total", final_loss.total},
                       {"lambda", final_loss.lambda},
                       {"active", final_loss.active}};
    j["order"] = m.config.order;
    j["channels"] = m.config.channels;
    j["embed_dim"] = m.config.embed_dim;
    j["coeff_width"] = m.config.coeff_width;
    std::ofstream os(path);
    if (!os) throw Error("IoFailure", "cannot write " + path);
    os << j.dump(2) << "\n";
}

int load_checkpoint(Model& m, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidHeader", std::string("bad checkpoint: ") + e.what());
    }
    if (!j.contains("params"))
        throw Error("InvalidHeader", "checkpoint has no params");
    for (auto& [name, t] : m.named_params()) {
        if (!j["params"].contains(name))
            throw Error("InvalidHeader", "checkpoint missing " + name);
        const auto& p = j["params"][name];
        auto shape = p.at("shape").get<Shape>();
        auto data = p.at("data").get<std::vector<double>>();
        if (shape != t->shape || data.size() != t->numel())
            throw Error("ShapeMismatch", "checkpoint shape differs for " + name);
        t->value = std::move(data);
    }
    return j.value("epoch", 0);
}

}  // namespace darkisp
