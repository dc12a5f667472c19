#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <darkisp/linear_isp.hpp>
#include <darkisp/raw_io.hpp>

namespace darkisp {

struct NoiseParams {
    double shot_scale = 0.0;  // K: electrons per normalized unit (Poisson)
    double read_sigma = 0.0;  // Gaussian std, normalized units
    double row_sigma = 0.0;   // per-row offset std, normalized units
    int quantize_bits = 0;    // 0 = off, else one of 10/12/14
};

struct SynthConfig {
    LinearParams ground_truth;
    double gamma = 2.2;          // synthetic display curve exponent
    double exposure_ratio = 1.0;  // in (0, 1]
    NoiseParams noise;
    std::size_t count = 1;
    std::size_t height = 64, width = 64;
    std::uint64_t seed = 0;
};

/// Inverse ISP: undo the display curve (x^gamma), invert the color matrix,
/// duplicate G into the two green planes, divide out white-balance gains.
/// The produced metadata is neutral; ground truth lives in the manifest only.
BayerImage inverse_isp(const RgbImage& rgb, const SynthConfig& cfg);

BayerImage darken(const BayerImage& img, double ratio);

/// Poisson shot noise + Gaussian read noise + per-row offset, optional
/// quantization, clamped to [0, 1.5]. Deterministic under seed.
BayerImage inject_noise(const BayerImage& img, const NoiseParams& p,
                        std::uint64_t seed);

/// Procedural source imagery (gradients, color checkers, smooth textures)
/// so dataset generation runs offline.
RgbImage make_test_card(std::size_t index, std::size_t height,
                        std::size_t width, std::uint64_t seed);

struct DatasetPair {
    std::string raw;        // DRAW file
    std::string reference;  // clean PFM
    std::uint64_t seed;
};

struct Manifest {
    SynthConfig cfg;
    std::vector<DatasetPair> pairs;
};

/// source_dir == "" uses bundled procedural test cards. Writes paired files
/// plus manifest.json into out_dir.
Manifest generate_dataset(const SynthConfig& cfg, const std::string& source_dir,
                          const std::string& out_dir);

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

SynthConfig synth_config_from_json_file(const std::string& path);

}  // namespace darkisp
