#pragma once

#include <string>
#include <utility>
#include <vector>

#include <darkisp/linear_isp.hpp>
#include <darkisp/nonlinear_isp.hpp>
#include <darkisp/self_boost.hpp>

namespace darkisp {

struct ModelConfig {
    std::size_t channels = 16;    // feature width C
    std::size_t embed_dim = 16;   // attention token width d
    std::size_t order = 8;        // polynomial order n
    std::size_t coeff_width = 16;
    std::uint64_t seed = 0;
};

/// The full RAW -> RGB model: dynamic linear mapping followed by the
/// polynomial tone stretch. At init (zero output projections, zero final
/// coefficient layer) it is exactly the static camera ISP.
struct Model {
    ModelConfig config;
    LinearModule linear;
    CoefficientNet coeff;
    BasisFamily family = BasisFamily::make_default(8, true);

    // fixed enumeration order; names are the checkpoint contract
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

Model make_model(const SensorMeta* meta, const ModelConfig& cfg);

struct ForwardResult {
    LinearForward lin;  // base, corrections, pooled P', corrected image I'
    Tensor coeffs;      // (n+1) x H x W
    Tensor enhanced;    // U, 3 x H x W
};

ForwardResult model_forward(Graph& g, const Model& m, const Tensor& bayer);

void save_checkpoint(const Model& m, const std::string& path, int epoch,
                     const std::string& config_hash, const LossReport& final_loss);
/// Loads parameter tensors by name into an existing model; shapes must match.
/// Returns the stored epoch.
int load_checkpoint(Model& m, const std::string& path);

}  // namespace darkisp
