#include <darkisp/synth.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include <darkisp/linalg.hpp>
#include <darkisp/rng.hpp>

namespace fs = std::filesystem;

namespace darkisp {

BayerImage inverse_isp(const RgbImage& rgb, const SynthConfig& cfg) {
    const std::size_t n = rgb.width * rgb.height;
    if (!(cfg.gamma > 0.0))
        throw Error("InvalidHeader", "inverse_isp: gamma must be positive");

    Mat33 inv_ccm;
    if (!linalg::invert3(cfg.ground_truth.ccm.data(), inv_ccm.data()))
        throw Error("SingularCCM", "ground-truth ccm is not invertible");

    BayerImage out;
    out.width = rgb.width;
    out.height = rgb.height;
    out.planes.resize(4 * n);
    out.meta.exposure_ratio = cfg.exposure_ratio;
    const auto& gains = cfg.ground_truth.wb_gains;
    for (std::size_t i = 0; i < n; ++i) {
        double lin[3];
        for (int c = 0; c < 3; ++c)
            lin[c] = std::pow(rgb.channels[c * n + i], cfg.gamma);
        double sensor[3];
        for (int c = 0; c < 3; ++c)
            sensor[c] = inv_ccm[c * 3 + 0] * lin[0] +
                        inv_ccm[c * 3 + 1] * lin[1] +
                        inv_ccm[c * 3 + 2] * lin[2];
        out.planes[i] = sensor[0] / gains[0];          // R
        out.planes[n + i] = sensor[1] / gains[1];      // Gr
        out.planes[2 * n + i] = sensor[2] / gains[2];  // B
        out.planes[3 * n + i] = sensor[1] / gains[3];  // Gb
    }
    return out;
}

BayerImage darken(const BayerImage& img, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw Error("InvalidHeader", "darken: ratio must be in (0,1]");
    BayerImage out = img;
    for (double& v : out.planes) v *= ratio;
    return out;
}

BayerImage inject_noise(const BayerImage& img, const NoiseParams& p,
                        std::uint64_t seed) {
    BayerImage out = img;
    const bool noiseless = p.shot_scale <= 0.0 && p.read_sigma <= 0.0 &&
                           p.row_sigma <= 0.0 && p.quantize_bits == 0;
    if (noiseless) return out;

    Rng rng(seed);
    const std::size_t W = img.width, H = img.height;
    for (std::size_t plane = 0; plane < 4; ++plane)
        for (std::size_t y = 0; y < H; ++y) {
            const double row_off =
                p.row_sigma > 0.0 ? p.row_sigma * rng.normal() : 0.0;
            for (std::size_t x = 0; x < W; ++x) {
                double v = out.at(plane, y, x);
                if (p.shot_scale > 0.0)
                    v = static_cast<double>(
                            rng.poisson(std::max(v, 0.0) * p.shot_scale)) /
                        p.shot_scale;
                if (p.read_sigma > 0.0) v += p.read_sigma * rng.normal();
                v += row_off;
                if (p.quantize_bits > 0) {
                    const double levels =
                        static_cast<double>((1u << p.quantize_bits) - 1u);
                    v = std::round(v * levels) / levels;
                }
                out.at(plane, y, x) = std::clamp(v, 0.0, 1.5);
            }
        }
    return out;
}

RgbImage make_test_card(std::size_t index, std::size_t height,
                        std::size_t width, std::uint64_t seed) {
    Rng rng(seed ^ (index * 0x9e3779b97f4a7c15ull));
    RgbImage img;
    img.width = width;
    img.height = height;
    const std::size_t n = width * height;
    img.channels.resize(3 * n);

    const int kind = static_cast<int>(index % 3);
    if (kind == 0) {
        // axis-aligned ramps, one per channel, random direction and offset
        double phase[3], sx[3], sy[3];
        for (int c = 0; c < 3; ++c) {
            phase[c] = rng.uniform(0.05, 0.3);
            sx[c] = rng.uniform(-0.8, 0.8);
            sy[c] = rng.uniform(-0.8, 0.8);
        }
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double u = static_cast<double>(x) / (width - 1);
                    const double v = static_cast<double>(y) / (height - 1);
                    double t = phase[c] + 0.5 * (sx[c] * u + sy[c] * v) + 0.35;
                    img.channels[c * n + y * width + x] =
                        std::clamp(t, 0.02, 0.98);
                }
    } else if (kind == 1) {
        // color-checker style blocks
        const std::size_t bs = std::max<std::size_t>(4, width / 6);
        std::vector<std::array<double, 3>> palette;
        for (int i = 0; i < 48; ++i)
            palette.push_back({rng.uniform(0.08, 0.95), rng.uniform(0.08, 0.95),
                               rng.uniform(0.08, 0.95)});
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const std::size_t cell =
                    (y / bs) * ((width + bs - 1) / bs) + x / bs;
                const auto& col = palette[cell % palette.size()];
                for (int c = 0; c < 3; ++c)
                    img.channels[c * n + y * width + x] = col[c];
            }
    } else {
        // smooth low-frequency texture
        double fx[3], fy[3], ph[3], base[3];
        for (int c = 0; c < 3; ++c) {
            fx[c] = rng.uniform(1.0, 3.0);
            fy[c] = rng.uniform(1.0, 3.0);
            ph[c] = rng.uniform(0.0, 6.28);
            base[c] = rng.uniform(0.35, 0.6);
        }
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double u = static_cast<double>(x) / width;
                    const double v = static_cast<double>(y) / height;
                    const double t =
                        base[c] +
                        0.3 * std::sin(6.28 * (fx[c] * u + fy[c] * v) + ph[c]);
                    img.channels[c * n + y * width + x] =
                        std::clamp(t, 0.02, 0.98);
                }
    }
    return img;
}

namespace {

RgbImage resize_nearest(const RgbImage& src, std::size_t H, std::size_t W) {
    if (src.height == H && src.width == W) return src;
    RgbImage out;
    out.width = W;
    out.height = H;
    out.channels.resize(3 * H * W);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t sy = y * src.height / H;
                const std::size_t sx = x * src.width / W;
                out.at(c, y, x) = src.at(c, sy, sx);
            }
    return out;
}

nlohmann::json noise_to_json(const NoiseParams& p) {
    return {{"shot_scale", p.shot_scale},
            {"read_sigma", p.read_sigma},
            {"row_sigma", p.row_sigma},
            {"quantize_bits", p.quantize_bits}};
}

NoiseParams noise_from_json(const nlohmann::json& j) {
    NoiseParams p;
    p.shot_scale = j.value("shot_scale", 0.0);
    p.read_sigma = j.value("read_sigma", 0.0);
    p.row_sigma = j.value("row_sigma", 0.0);
    p.quantize_bits = j.value("quantize_bits", 0);
    if (p.quantize_bits != 0 && p.quantize_bits != 10 &&
        p.quantize_bits != 12 && p.quantize_bits != 14)
        throw Error("InvalidHeader", "quantize_bits must be 10, 12 or 14");
    return p;
}

nlohmann::json config_to_json(const SynthConfig& cfg) {
    nlohmann::json j;
    j["ground_truth"] = {
        {"wb_gains", std::vector<double>(cfg.ground_truth.wb_gains.begin(),
                                         cfg.ground_truth.wb_gains.end())},
        {"ccm", std::vector<double>(cfg.ground_truth.ccm.begin(),
                                    cfg.ground_truth.ccm.end())},
        {"gamma", cfg.gamma}};
    j["exposure_ratio"] = cfg.exposure_ratio;
    j["noise"] = noise_to_json(cfg.noise);
    j["count"] = cfg.count;
    j["size"] = {cfg.height, cfg.width};
    j["seed"] = cfg.seed;
    return j;
}

SynthConfig config_from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    if (j.contains("ground_truth")) {
        const auto& gt = j["ground_truth"];
        if (gt.contains("wb_gains")) {
            auto g = gt["wb_gains"].get<std::vector<double>>();
            std::copy(g.begin(), g.end(), cfg.ground_truth.wb_gains.begin());
        }
        if (gt.contains("ccm")) {
            auto c = gt["ccm"].get<std::vector<double>>();
            std::copy(c.begin(), c.end(), cfg.ground_truth.ccm.begin());
        }
        cfg.gamma = gt.value("gamma", 2.2);
    }
    cfg.exposure_ratio = j.value("exposure_ratio", 1.0);
    if (j.contains("noise")) cfg.noise = noise_from_json(j["noise"]);
    cfg.count = j.value("count", std::size_t{1});
    if (j.contains("size")) {
        cfg.height = j["size"][0].get<std::size_t>();
        cfg.width = j["size"][1].get<std::size_t>();
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (!(cfg.exposure_ratio > 0.0 && cfg.exposure_ratio <= 1.0))
        throw Error("InvalidHeader", "exposure_ratio must be in (0,1]");
    if (cfg.count < 1) throw Error("InvalidHeader", "count must be >= 1");
    return cfg;
}

}  // namespace

Manifest generate_dataset(const SynthConfig& cfg, const std::string& source_dir,
                          const std::string& out_dir) {
    std::vector<std::string> sources;
    if (!source_dir.empty()) {
        for (const auto& e : fs::directory_iterator(source_dir)) {
            const auto ext = e.path().extension().string();
            if (ext == ".pfm" || ext == ".ppm")
                sources.push_back(e.path().string());
        }
        std::sort(sources.begin(), sources.end());
        if (sources.empty())
            throw Error("EmptySource", "no PFM/PPM files in " + source_dir);
    }

    fs::create_directories(out_dir);
    Manifest manifest;
    manifest.cfg = cfg;
    for (std::size_t idx = 0; idx < cfg.count; ++idx) {
        RgbImage ref;
        if (sources.empty()) {
            ref = make_test_card(idx, cfg.height, cfg.width,
                                 cfg.seed ^ 0xcafef00dull);
        } else {
            ref = resize_nearest(load_rgb(sources[idx % sources.size()]),
                                 cfg.height, cfg.width);
        }
        const std::uint64_t pair_seed = cfg.seed ^ idx;
        BayerImage clean = inverse_isp(ref, cfg);
        BayerImage dark = darken(clean, cfg.exposure_ratio);
        BayerImage noisy = inject_noise(dark, cfg.noise, pair_seed);

        char raw_name[32], ref_name[32];
        std::snprintf(raw_name, sizeof raw_name, "raw_%03zu.draw", idx);
        std::snprintf(ref_name, sizeof ref_name, "ref_%03zu.pfm", idx);
        const std::string raw_path = (fs::path(out_dir) / raw_name).string();
        const std::string ref_path = (fs::path(out_dir) / ref_name).string();
        save_bayer(noisy, raw_path);
        save_rgb(ref, ref_path, RgbExportMode::Float);
        manifest.pairs.push_back({raw_name, ref_name, pair_seed});
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

void save_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j = config_to_json(m.cfg);
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : m.pairs)
        pairs.push_back({{"raw", p.raw},
                         {"reference", p.reference},
                         {"seed", p.seed}});
    j["pairs"] = pairs;
    std::ofstream os(path);
    if (!os) throw Error("IoFailure", "cannot write " + path);
    os << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("ManifestError", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("ManifestError", e.what());
    }
    Manifest m;
    m.cfg = config_from_json(j);
    if (j.contains("pairs"))
        for (const auto& p : j["pairs"])
            m.pairs.push_back({p.at("raw").get<std::string>(),
                               p.at("reference").get<std::string>(),
                               p.at("seed").get<std::uint64_t>()});
    return m;
}

SynthConfig synth_config_from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidHeader", e.what());
    }
    return config_from_json(j);
}

}  // namespace darkisp
