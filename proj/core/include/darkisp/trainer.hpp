#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <darkisp/pipeline.hpp>
#include <darkisp/self_boost.hpp>
#include <darkisp/synth.hpp>

namespace darkisp {

struct TrainConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs = 15;
    double lambda = 1e-2;
    int warmup = 10;
    bool sb_flow_through = false;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    std::string proxy = "reconstruction";
    ModelConfig model;
};

TrainConfig train_config_from_json_file(const std::string& path);
/// Stable hex digest of the serialized config, stored in checkpoints.
std::string config_hash(const TrainConfig& cfg);

/// MSE over all pixels/channels, on the tape.
Tensor proxy_loss(Graph& g, const Tensor& u, const Tensor& reference);
double mse(const RgbImage& a, const RgbImage& b);

struct SgdState {
    std::vector<std::vector<double>> velocity;  // parallels named_params()
};

/// v <- momentum v + grad + wd p; p <- p - lr v. Weight decay skips the
/// physical calibration parameters (wb_gains, ccm).
void sgd_step(const std::vector<std::pair<std::string, Tensor>>& params,
              SgdState& state, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double l_task = 0, l_sb = 0, total = 0;
    double kappa_mean = 0, residual_mean = 0, residual_grad_norm = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    LossReport final_loss;
    int steps = 0;
};

/// Full optimization loop over a generated dataset. Writes the checkpoint to
/// out_path when non-empty; CSV convergence log goes to `log_stream` when
/// given (header + one line per epoch).
TrainResult train(Model& m, const TrainConfig& cfg,
                  const std::string& manifest_path, const std::string& out_path,
                  std::ostream* log_stream = nullptr);

struct EvalMetrics {
    double psnr_mean = 0;  // +inf sentinel when every pair is exact
    double residual_mean = 0;
    double kappa_mean = 0;
    std::size_t pairs = 0;
};

EvalMetrics evaluate(const Model& m, const std::string& manifest_path);

}  // namespace darkisp
