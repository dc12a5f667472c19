#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <darkisp/linear_isp.hpp>
#include <darkisp/rng.hpp>
#include <darkisp/synth.hpp>

using namespace darkisp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("darkisp_synth_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

SynthConfig demo_config() {
    SynthConfig cfg;
    cfg.ground_truth.wb_gains = {1.8, 1.0, 1.5, 1.0};
    cfg.ground_truth.ccm = {1.3, -0.2, -0.1, -0.15, 1.3, -0.15, 0.05, -0.35,
                            1.3};
    cfg.gamma = 2.2;
    cfg.exposure_ratio = 0.25;
    cfg.count = 2;
    cfg.height = cfg.width = 32;
    cfg.seed = 9;
    return cfg;
}

}  // namespace

TEST_CASE("inverse followed by the static forward pipeline round-trips") {
    SynthConfig cfg = demo_config();
    cfg.exposure_ratio = 1.0;
    RgbImage src = make_test_card(1, 16, 16, 5);
    BayerImage raw = inverse_isp(src, cfg);
    // forward: wb gains, merge greens, ccm, display curve x^(1/gamma)
    RgbImage lin = color_transform(
        binning(white_balance(raw, cfg.ground_truth.wb_gains)),
        cfg.ground_truth.ccm);
    for (std::size_t i = 0; i < lin.channels.size(); ++i) {
        const double v = std::pow(std::max(lin.channels[i], 0.0),
                                  1.0 / cfg.gamma);
        CHECK(v == doctest::Approx(src.channels[i]).epsilon(1e-8));
    }
    // metadata must stay neutral: the ground truth lives in the manifest
    CHECK(raw.meta.wb_gains[0] == 1.0);
    CHECK(raw.meta.ccm[1] == 0.0);
    // green duplication
    const std::size_t n = raw.width * raw.height;
    for (std::size_t i = 0; i < n; ++i)
        CHECK(raw.planes[n + i] == raw.planes[3 * n + i]);
}

TEST_CASE("darken scales every plane and validates the ratio") {
    BayerImage img;
    img.width = img.height = 1;
    img.planes = {0.4, 0.8, 0.2, 0.6};
    BayerImage d = darken(img, 0.25);
    CHECK(d.planes[0] == doctest::Approx(0.1));
    CHECK(d.planes[3] == doctest::Approx(0.15));
    CHECK_THROWS_AS(darken(img, 0.0), Error);
    CHECK_THROWS_AS(darken(img, 1.5), Error);
}

TEST_CASE("noise injection is deterministic and seed-sensitive") {
    BayerImage img;
    img.width = img.height = 8;
    Rng rng(2);
    img.planes.resize(4 * 64);
    for (double& v : img.planes) v = rng.uniform(0.05, 0.6);
    NoiseParams p;
    p.shot_scale = 1000.0;
    p.read_sigma = 0.01;
    p.row_sigma = 0.002;
    BayerImage a = inject_noise(img, p, 77);
    BayerImage b = inject_noise(img, p, 77);
    BayerImage c = inject_noise(img, p, 78);
    bool differs = false;
    for (std::size_t i = 0; i < img.planes.size(); ++i) {
        CHECK(a.planes[i] == b.planes[i]);
        if (a.planes[i] != c.planes[i]) differs = true;
        CHECK(a.planes[i] >= 0.0);
        CHECK(a.planes[i] <= 1.5);
    }
    CHECK(differs);
}

TEST_CASE("zero noise params pass the image through untouched") {
    BayerImage img;
    img.width = img.height = 2;
    img.planes.assign(16, 0.37);
    NoiseParams p;  // all zero
    BayerImage out = inject_noise(img, p, 123);
    for (double v : out.planes) CHECK(v == 0.37);
}

TEST_CASE("quantization snaps values to the code grid") {
    BayerImage img;
    img.width = img.height = 2;
    img.planes.assign(16, 0.123456789);
    NoiseParams p;
    p.quantize_bits = 10;
    BayerImage out = inject_noise(img, p, 0);
    const double levels = 1023.0;
    for (double v : out.planes)
        CHECK(v == doctest::Approx(std::round(0.123456789 * levels) / levels)
                       .epsilon(1e-12));
}

TEST_CASE("unsupported quantization depth rejected at parse time") {
    TempDir tmp;
    const std::string path = (tmp.path / "bad.json").string();
    std::ofstream(path) << "{\"noise\": {\"quantize_bits\": 11}}";
    CHECK_THROWS_WITH_AS(synth_config_from_json_file(path),
                         doctest::Contains("quantize_bits"), Error);
}

TEST_CASE("test cards are deterministic, in range, and varied") {
    RgbImage a = make_test_card(0, 32, 32, 4);
    RgbImage b = make_test_card(0, 32, 32, 4);
    RgbImage c = make_test_card(1, 32, 32, 4);
    CHECK(a.channels == b.channels);
    CHECK(a.channels != c.channels);
    for (std::size_t k = 0; k < 3; ++k) {
        RgbImage card = make_test_card(k, 32, 32, 4);
        for (double v : card.channels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("dataset generation writes pairs and a loadable manifest") {
    TempDir tmp;
    SynthConfig cfg = demo_config();
    Manifest m = generate_dataset(cfg, "", tmp.str());
    REQUIRE(m.pairs.size() == 2);
    for (const DatasetPair& pr : m.pairs) {
        // pair entries are stored relative to the manifest directory
        REQUIRE(fs::exists(tmp.path / pr.raw));
        REQUIRE(fs::exists(tmp.path / pr.reference));
        BayerImage raw = load_bayer((tmp.path / pr.raw).string());
        CHECK(raw.width == 32);
        CHECK(raw.height == 32);
        RgbImage ref = load_rgb((tmp.path / pr.reference).string());
        CHECK(ref.width == 32);
    }
    Manifest back = load_manifest((tmp.path / "manifest.json").string());
    REQUIRE(back.pairs.size() == m.pairs.size());
    CHECK(back.cfg.ground_truth.wb_gains[0] == doctest::Approx(1.8));
    CHECK(back.cfg.ground_truth.ccm[0] == doctest::Approx(1.3));
    CHECK(back.cfg.exposure_ratio == doctest::Approx(0.25));
    CHECK(back.cfg.seed == 9);
    CHECK(back.pairs[0].raw == m.pairs[0].raw);
}

TEST_CASE("same seed reproduces the dataset bit for bit") {
    TempDir tmp;
    SynthConfig cfg = demo_config();
    cfg.noise.shot_scale = 800.0;
    cfg.noise.read_sigma = 0.01;
    const std::string d1 = (tmp.path / "a").string();
    const std::string d2 = (tmp.path / "b").string();
    generate_dataset(cfg, "", d1);
    generate_dataset(cfg, "", d2);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "raw_%03zu.draw", i);
        std::ifstream f1(d1 + "/" + name, std::ios::binary);
        std::ifstream f2(d2 + "/" + name, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        std::string s2((std::istreambuf_iterator<char>(f2)), {});
        REQUIRE_FALSE(s1.empty());
        CHECK(s1 == s2);
    }
}

TEST_CASE("empty source directory raises") {
    TempDir tmp;
    fs::create_directories(tmp.path / "empty");
    SynthConfig cfg = demo_config();
    CHECK_THROWS_WITH_AS(
        generate_dataset(cfg, (tmp.path / "empty").string(), tmp.str()),
        doctest::Contains("EmptySource"), Error);
}

TEST_CASE("config file parsing validates ranges") {
    TempDir tmp;
    const std::string p = (tmp.path / "cfg.json").string();
    {
        std::ofstream os(p);
        os << "{\"exposure_ratio\": 2.0, \"count\": 1}";
    }
    CHECK_THROWS_AS(synth_config_from_json_file(p), Error);
    {
        std::ofstream os(p);
        os << "{\"exposure_ratio\": 0.5, \"count\": 3, \"seed\": 4,"
              " \"noise\": {\"shot_scale\": 100.0}}";
    }
    SynthConfig cfg = synth_config_from_json_file(p);
    CHECK(cfg.count == 3);
    CHECK(cfg.noise.shot_scale == doctest::Approx(100.0));
}
