#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <darkisp/tensor.hpp>

namespace darkisp {

enum class CfaPattern { RGGB, BGGR, GRBG, GBRG };

CfaPattern cfa_from_string(const std::string& s);
std::string cfa_to_string(CfaPattern p);

struct SensorMeta {
    double black_level = 0.0;
    double white_level = 1.0;
    CfaPattern cfa_pattern = CfaPattern::RGGB;
    std::array<double, 4> wb_gains{1.0, 1.0, 1.0, 1.0};
    std::array<double, 9> ccm{1, 0, 0, 0, 1, 0, 0, 0, 1};
    double exposure_ratio = 1.0;
};

/// Four planar channels in plane order R, Gr, B, Gb, values normalized to
/// [0,1] at load time. Payload precision on disk is float32; in memory we
/// keep float64 for the training path.
struct BayerImage {
    std::size_t width = 0, height = 0;
    std::vector<double> planes;  // 4 * H * W, plane-major, row-major planes
    SensorMeta meta;

    double& at(std::size_t plane, std::size_t y, std::size_t x) {
        return planes[(plane * height + y) * width + x];
    }
    double at(std::size_t plane, std::size_t y, std::size_t x) const {
        return planes[(plane * height + y) * width + x];
    }
};

struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<double> channels;  // 3 * H * W

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return channels[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return channels[(c * height + y) * width + x];
    }
};

enum class RgbExportMode { Float, Preview };

// DRAW container + JSON sidecar (path + ".json")
BayerImage load_bayer(const std::string& path);
void save_bayer(const BayerImage& img, const std::string& path);

// 2H x 2W single-plane mosaic <-> planar channels
BayerImage pack_cfa(const std::vector<double>& mosaic, std::size_t height2,
                    std::size_t width2, CfaPattern pattern);
std::vector<double> unpack_cfa(const BayerImage& img);

// Float mode writes PFM (PF, little-endian, scale -1.0); preview clamps,
// applies the sRGB encoding gamma and writes binary PPM (P6, maxval 255).
void save_rgb(const RgbImage& img, const std::string& path,
              RgbExportMode mode);
RgbImage load_rgb(const std::string& path);  // PFM or P6 PPM (sRGB decoded)

double srgb_encode(double v);
double srgb_decode(double v);

Tensor bayer_to_tensor(const BayerImage& img, bool requires_grad = false);
Tensor rgb_to_tensor(const RgbImage& img, bool requires_grad = false);
RgbImage rgb_from_tensor(const Tensor& t, std::size_t height,
                         std::size_t width);

}  // namespace darkisp
