#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <darkisp/pipeline.hpp>
#include <darkisp/synth.hpp>
#include <darkisp/trainer.hpp>
#include <darkisp/verify.hpp>

using namespace darkisp;

namespace {

bool seed_override(std::uint64_t& seed) {
    const char* env = std::getenv("DARKISP_SEED");
    if (!env || !*env) return false;
    seed = std::strtoull(env, nullptr, 10);
    return true;
}

ModelConfig model_config_from_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    nlohmann::json j;
    is >> j;
    ModelConfig cfg;
    cfg.channels = j.value("channels", cfg.channels);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.order = j.value("order", cfg.order);
    cfg.coeff_width = j.value("coeff_width", cfg.coeff_width);
    return cfg;
}

Model load_model(const std::string& checkpoint, const SensorMeta* meta) {
    if (checkpoint == "identity") return make_model(meta, ModelConfig{});
    ModelConfig cfg = model_config_from_checkpoint(checkpoint);
    Model m = make_model(meta, cfg);
    load_checkpoint(m, checkpoint);
    return m;
}

int cmd_process(const std::string& input, const std::string& checkpoint,
                const std::string& output, const std::string& mode,
                const std::string& reference) {
    BayerImage raw = load_bayer(input);
    Model m = load_model(checkpoint, &raw.meta);
    Graph g;
    ForwardResult fwd = model_forward(g, m, bayer_to_tensor(raw));
    RgbImage out = rgb_from_tensor(fwd.enhanced, raw.height, raw.width);
    save_rgb(out, output,
             mode == "preview" ? RgbExportMode::Preview
                               : RgbExportMode::Float);
    if (!reference.empty()) {
        RgbImage ref = load_rgb(reference);
        const double e = mse(out, ref);
        Model ident = make_model(&raw.meta, ModelConfig{});
        Graph gi;
        ForwardResult fi = model_forward(gi, ident, bayer_to_tensor(raw));
        const double ei =
            mse(rgb_from_tensor(fi.enhanced, raw.height, raw.width), ref);
        auto psnr = [](double v) {
            return v > 0.0 ? 10.0 * std::log10(1.0 / v) : 1e9;
        };
        std::cerr << "psnr " << psnr(e) << " dB (identity " << psnr(ei)
                  << " dB, improvement " << psnr(e) - psnr(ei) << " dB)\n";
    }
    std::cerr << "wrote " << output << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& data,
              const std::string& out) {
    TrainConfig cfg = train_config_from_json_file(config);
    if (seed_override(cfg.seed)) cfg.model.seed = cfg.seed;
    Model m = make_model(nullptr, cfg.model);
    TrainResult res = train(m, cfg, data, out, &std::cout);
    std::cerr << "trained " << res.steps << " steps, final total loss "
              << res.final_loss.total << ", checkpoint " << out << "\n";
    return 0;
}

int cmd_synth(const std::string& config, const std::string& source,
              const std::string& out) {
    SynthConfig cfg = synth_config_from_json_file(config);
    seed_override(cfg.seed);
    Manifest m = generate_dataset(cfg, source, out);
    std::cerr << "generated " << m.pairs.size() << " pairs in " << out << "\n";
    return 0;
}

int cmd_verify(const std::vector<std::string>& suites) {
    std::uint64_t seed = 0;
    seed_override(seed);
    bool all_passed = false;
    std::cout << run_verification(suites, seed, all_passed) << "\n";
    return all_passed ? 0 : 2;
}

void print_mat34(const Mat34& p) {
    for (int r = 0; r < 3; ++r) {
        std::cout << " ";
        for (int c = 0; c < 4; ++c) std::cout << " " << p[r * 4 + c];
        std::cout << "\n";
    }
}

int cmd_inspect(const std::string& checkpoint, const std::string& what) {
    if (what == "params") {
        Model m = load_model(checkpoint, nullptr);
        LinearParams lp;
        for (int i = 0; i < 4; ++i)
            lp.wb_gains[i] = m.linear.wb_gains->value[i];
        for (int i = 0; i < 9; ++i) lp.ccm[i] = m.linear.ccm->value[i];
        std::cout << "wb_gains:";
        for (double v : lp.wb_gains) std::cout << " " << v;
        std::cout << "\nccm:\n";
        for (int r = 0; r < 3; ++r) {
            std::cout << " ";
            for (int c = 0; c < 3; ++c) std::cout << " " << lp.ccm[r * 3 + c];
            std::cout << "\n";
        }
        std::cout << "P (composed):\n";
        print_mat34(compose(lp));

        // pooled corrections on a fixed synthetic ramp frame
        BayerImage probe;
        probe.width = probe.height = 32;
        probe.planes.resize(4 * 32 * 32);
        for (std::size_t pl = 0; pl < 4; ++pl)
            for (std::size_t y = 0; y < 32; ++y)
                for (std::size_t x = 0; x < 32; ++x)
                    probe.at(pl, y, x) =
                        0.05 + 0.4 * (static_cast<double>(x + y) / 62.0) +
                        0.05 * static_cast<double>(pl);
        Graph g;
        LinearForward fwd =
            linear_forward(g, m.linear, bayer_to_tensor(probe));
        Mat34 pooled, pg;
        for (int i = 0; i < 12; ++i) {
            pooled[i] = fwd.pooled->value[i];
            pg[i] = fwd.p_global->value[i];
        }
        std::cout << "P_g (probe frame):\n";
        print_mat34(pg);
        std::cout << "pooled P' (probe frame):\n";
        print_mat34(pooled);
        return 0;
    }
    // basis / curves: 256-sample CSV of f_k and g_k
    std::size_t order = 8;
    if (checkpoint != "identity")
        order = model_config_from_checkpoint(checkpoint).order;
    BasisFamily fam = BasisFamily::make_default(order, false);
    std::cout << "x";
    for (std::size_t k = 0; k <= order; ++k) std::cout << ",f_" << k;
    for (std::size_t k = 0; k <= order; ++k) std::cout << ",g_" << k;
    std::cout << "\n";
    for (int i = 0; i < 256; ++i) {
        const double x = static_cast<double>(i) / 255.0;
        std::cout << x;
        for (std::size_t k = 0; k <= order; ++k)
            std::cout << "," << fam.eval_plain(k, x);
        for (std::size_t k = 0; k <= order; ++k)
            std::cout << "," << fam.eval_plain(k, x) - x;
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"darkisp: differentiable low-light RAW -> RGB pipeline"};
    app.require_subcommand(1);

    std::string input, checkpoint = "identity", output, mode = "float";
    std::string reference;
    auto* process = app.add_subcommand("process", "run the pipeline on a frame");
    process->add_option("--input", input, "DRAW input")->required();
    process->add_option("--checkpoint", checkpoint,
                        "checkpoint path or 'identity'");
    process->add_option("--output", output, "output image")->required();
    process->add_option("--mode", mode, "float|preview")
        ->check(CLI::IsMember({"float", "preview"}));
    process->add_option("--reference", reference,
                        "clean reference; reports PSNR on stderr");

    std::string t_config, t_data, t_out = "checkpoint.json";
    auto* train_cmd = app.add_subcommand("train", "optimize on a dataset");
    train_cmd->add_option("--config", t_config, "TrainConfig JSON")->required();
    train_cmd->add_option("--data", t_data, "dataset manifest")->required();
    train_cmd->add_option("--out", t_out, "checkpoint output path");

    std::string s_config, s_source, s_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", s_config, "SynthConfig JSON")->required();
    synth->add_option("--source", s_source,
                      "directory of PFM/PPM sources (default: procedural)");
    synth->add_option("--out", s_out, "output directory")->required();

    std::vector<std::string> suites;
    auto* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--suites", suites,
                       "subset of grad,basis,lsq,attn,roundtrip")
        ->delimiter(',');

    std::string i_checkpoint, i_what = "params";
    auto* inspect = app.add_subcommand("inspect", "dump checkpoint internals");
    inspect->add_option("--checkpoint", i_checkpoint,
                        "checkpoint path or 'identity'")
        ->required();
    inspect->add_option("--what", i_what, "params|basis|curves")
        ->check(CLI::IsMember({"params", "basis", "curves"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (process->parsed())
            return cmd_process(input, checkpoint, output, mode, reference);
        if (train_cmd->parsed()) return cmd_train(t_config, t_data, t_out);
        if (synth->parsed()) return cmd_synth(s_config, s_source, s_out);
        if (verify->parsed()) return cmd_verify(suites);
        if (inspect->parsed()) return cmd_inspect(i_checkpoint, i_what);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
