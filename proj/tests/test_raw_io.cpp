#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <darkisp/raw_io.hpp>
#include <darkisp/rng.hpp>

using namespace darkisp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("darkisp_io_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

void write_draw_raw(const std::string& path, std::uint32_t w, std::uint32_t h,
                    const std::vector<float>& payload,
                    std::uint32_t channels = 4) {
    std::ofstream os(path, std::ios::binary);
    os.write("DRAW", 4);
    const char version = 1;
    os.write(&version, 1);
    auto u32 = [&os](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<char*>(b), 4);
    };
    u32(w);
    u32(h);
    u32(channels);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * 4));
}

void write_sidecar(const std::string& draw_path, double black, double white) {
    std::ofstream js(draw_path + ".json");
    js << "{\"black_level\": " << black << ", \"white_level\": " << white
       << ", \"cfa_pattern\": \"RGGB\", \"wb_gains\": [1,1,1,1],"
          " \"ccm\": [1,0,0,0,1,0,0,0,1], \"exposure_ratio\": 1.0}";
}

}  // namespace

TEST_CASE("normalization oracle values") {
    TempDir tmp;
    const std::string p = tmp.file("counts.draw");
    // one pixel per plane: raw counts 512 (black), 8447, 16383 (white), 4479
    write_draw_raw(p, 1, 1, {512.0f, 8447.0f, 16383.0f, 4479.0f});
    write_sidecar(p, 512.0, 16383.0);
    BayerImage img = load_bayer(p);
    CHECK(img.planes[0] == doctest::Approx(0.0));
    CHECK(img.planes[1] ==
          doctest::Approx((8447.0 - 512.0) / 15871.0).epsilon(1e-9));
    CHECK(img.planes[2] == doctest::Approx(1.0));
    CHECK(img.planes[3] ==
          doctest::Approx((4479.0 - 512.0) / 15871.0).epsilon(1e-9));
}

TEST_CASE("identity normalization without sidecar") {
    TempDir tmp;
    const std::string p = tmp.file("plain.draw");
    write_draw_raw(p, 2, 1, {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.1f, 0.2f, 0.3f});
    BayerImage img = load_bayer(p);
    CHECK(img.planes[1] == doctest::Approx(0.25));
    CHECK(img.planes[4] == doctest::Approx(1.0));
    CHECK(img.meta.black_level == 0.0);
}

TEST_CASE("header errors") {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("bad.draw"), std::ios::binary);
        os << "JUNKxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_WITH_AS(load_bayer(tmp.file("bad.draw")),
                         doctest::Contains("BadMagic"), Error);

    write_draw_raw(tmp.file("short.draw"), 2, 2, {1.0f, 2.0f});  // too few
    CHECK_THROWS_WITH_AS(load_bayer(tmp.file("short.draw")),
                         doctest::Contains("TruncatedPayload"), Error);

    write_draw_raw(tmp.file("zero.draw"), 0, 2, {});
    CHECK_THROWS_WITH_AS(load_bayer(tmp.file("zero.draw")),
                         doctest::Contains("InvalidHeader"), Error);

    CHECK_THROWS_WITH_AS(load_bayer(tmp.file("absent.draw")),
                         doctest::Contains("IoFailure"), Error);
}

TEST_CASE("incomplete sidecar is an error") {
    TempDir tmp;
    const std::string p = tmp.file("part.draw");
    write_draw_raw(p, 1, 1, {0.1f, 0.2f, 0.3f, 0.4f});
    {
        std::ofstream js(p + ".json");
        js << "{\"black_level\": 0.0}";
    }
    CHECK_THROWS_WITH_AS(load_bayer(p), doctest::Contains("MissingSidecarField"),
                         Error);
}

TEST_CASE("save/load round trip is bit-exact on the payload") {
    TempDir tmp;
    Rng rng(2);
    BayerImage img;
    img.width = 5;
    img.height = 3;
    img.planes.resize(4 * 15);
    for (double& v : img.planes)
        v = static_cast<double>(static_cast<float>(rng.uniform()));
    img.meta.wb_gains = {1.9, 1.0, 1.4, 1.0};
    img.meta.cfa_pattern = CfaPattern::GRBG;
    const std::string p = tmp.file("rt.draw");
    save_bayer(img, p);
    BayerImage back = load_bayer(p);
    REQUIRE(back.planes.size() == img.planes.size());
    for (std::size_t i = 0; i < img.planes.size(); ++i)
        CHECK(static_cast<float>(back.planes[i]) ==
              static_cast<float>(img.planes[i]));
    CHECK(back.meta.wb_gains[0] == doctest::Approx(1.9));
    CHECK(back.meta.cfa_pattern == CfaPattern::GRBG);
}

TEST_CASE("pack_cfa tile routing") {
    // 2x2 mosaic [a b; c d]
    const std::vector<double> mosaic = {0.1, 0.2, 0.3, 0.4};
    BayerImage rggb = pack_cfa(mosaic, 2, 2, CfaPattern::RGGB);
    CHECK(rggb.at(0, 0, 0) == 0.1);  // R = a
    CHECK(rggb.at(1, 0, 0) == 0.2);  // Gr = b
    CHECK(rggb.at(3, 0, 0) == 0.3);  // Gb = c
    CHECK(rggb.at(2, 0, 0) == 0.4);  // B = d
    BayerImage bggr = pack_cfa(mosaic, 2, 2, CfaPattern::BGGR);
    CHECK(bggr.at(2, 0, 0) == 0.1);  // B = a
    CHECK(bggr.at(1, 0, 0) == 0.2);  // Gr = b
    CHECK(bggr.at(3, 0, 0) == 0.3);  // Gb = c
    CHECK(bggr.at(0, 0, 0) == 0.4);  // R = d

    CHECK_THROWS_WITH_AS(pack_cfa(mosaic, 4, 4, CfaPattern::RGGB),
                         doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("pack/unpack round trip for every pattern") {
    Rng rng(11);
    std::vector<double> mosaic(8 * 8);
    for (double& v : mosaic) v = rng.uniform();
    for (CfaPattern p : {CfaPattern::RGGB, CfaPattern::BGGR, CfaPattern::GRBG,
                         CfaPattern::GBRG}) {
        BayerImage img = pack_cfa(mosaic, 8, 8, p);
        std::vector<double> back = unpack_cfa(img);
        REQUIRE(back.size() == mosaic.size());
        for (std::size_t i = 0; i < mosaic.size(); ++i)
            CHECK(back[i] == mosaic[i]);
    }
    CHECK_THROWS_WITH_AS(pack_cfa(mosaic, 7, 8, CfaPattern::RGGB),
                         doctest::Contains("OddDimensions"), Error);
}

TEST_CASE("sRGB preview oracle bytes") {
    TempDir tmp;
    RgbImage img;
    img.width = 3;
    img.height = 1;
    img.channels = {0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0};
    const std::string p = tmp.file("prev.ppm");
    save_rgb(img, p, RgbExportMode::Preview);
    std::ifstream is(p, std::ios::binary);
    std::string header;
    std::getline(is, header);
    CHECK(header == "P6");
    std::string dims, maxval;
    std::getline(is, dims);
    std::getline(is, maxval);
    unsigned char px[9];
    is.read(reinterpret_cast<char*>(px), 9);
    CHECK(px[0] == 0);    // value 0.0
    CHECK(px[3] == 188);  // value 0.5 after sRGB encode
    CHECK(px[6] == 255);  // value 1.0
}

TEST_CASE("preview export is monotone") {
    RgbImage img;
    img.width = 256;
    img.height = 1;
    img.channels.resize(3 * 256);
    for (int i = 0; i < 256; ++i)
        for (int c = 0; c < 3; ++c)
            img.channels[c * 256 + i] = i / 255.0;
    TempDir tmp;
    const std::string p = tmp.file("mono.ppm");
    save_rgb(img, p, RgbExportMode::Preview);
    RgbImage back = load_rgb(p);
    for (int i = 1; i < 256; ++i)
        CHECK(back.channels[i] >= back.channels[i - 1]);
}

TEST_CASE("PFM round trip preserves float32 payload") {
    TempDir tmp;
    Rng rng(6);
    RgbImage img;
    img.width = 4;
    img.height = 3;
    img.channels.resize(36);
    for (double& v : img.channels)
        v = static_cast<double>(static_cast<float>(rng.uniform(-0.2, 1.4)));
    const std::string p = tmp.file("x.pfm");
    save_rgb(img, p, RgbExportMode::Float);
    RgbImage back = load_rgb(p);
    for (std::size_t i = 0; i < img.channels.size(); ++i)
        CHECK(static_cast<float>(back.channels[i]) ==
              static_cast<float>(img.channels[i]));
}

TEST_CASE("non-finite values rejected at export") {
    RgbImage img;
    img.width = img.height = 1;
    img.channels = {0.1, std::numeric_limits<double>::infinity(), 0.3};
    CHECK_THROWS_WITH_AS(save_rgb(img, "/tmp/never.pfm", RgbExportMode::Float),
                         doctest::Contains("NonFiniteInput"), Error);
}
