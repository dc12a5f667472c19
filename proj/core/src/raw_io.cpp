#include <darkisp/raw_io.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace darkisp {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'A', 'W'};
constexpr std::uint8_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(&v), 4);  // little-endian host
}

SensorMeta meta_from_json(const nlohmann::json& j) {
    SensorMeta m;
    const char* required[] = {"black_level", "white_level", "cfa_pattern",
                              "wb_gains",    "ccm",         "exposure_ratio"};
    for (const char* key : required)
        if (!j.contains(key))
            throw Error("MissingSidecarField", key);
    m.black_level = j.at("black_level").get<double>();
    m.white_level = j.at("white_level").get<double>();
    m.cfa_pattern = cfa_from_string(j.at("cfa_pattern").get<std::string>());
    auto gains = j.at("wb_gains").get<std::vector<double>>();
    auto ccm = j.at("ccm").get<std::vector<double>>();
    if (gains.size() != 4 || ccm.size() != 9)
        throw Error("MissingSidecarField", "wb_gains/ccm have wrong arity");
    std::copy(gains.begin(), gains.end(), m.wb_gains.begin());
    std::copy(ccm.begin(), ccm.end(), m.ccm.begin());
    m.exposure_ratio = j.at("exposure_ratio").get<double>();
    if (!(m.white_level > m.black_level))
        throw Error("InvalidHeader", "white_level must exceed black_level");
    for (double g : m.wb_gains)
        if (!(g > 0.0))
            throw Error("InvalidHeader", "wb_gains must be positive");
    return m;
}

nlohmann::json meta_to_json(const SensorMeta& m) {
    nlohmann::json j;
    j["black_level"] = m.black_level;
    j["white_level"] = m.white_level;
    j["cfa_pattern"] = cfa_to_string(m.cfa_pattern);
    j["wb_gains"] = std::vector<double>(m.wb_gains.begin(), m.wb_gains.end());
    j["ccm"] = std::vector<double>(m.ccm.begin(), m.ccm.end());
    j["exposure_ratio"] = m.exposure_ratio;
    return j;
}

}  // namespace

CfaPattern cfa_from_string(const std::string& s) {
    if (s == "RGGB") return CfaPattern::RGGB;
    if (s == "BGGR") return CfaPattern::BGGR;
    if (s == "GRBG") return CfaPattern::GRBG;
    if (s == "GBRG") return CfaPattern::GBRG;
    throw Error("InvalidHeader", "unknown CFA pattern " + s);
}

std::string cfa_to_string(CfaPattern p) {
    switch (p) {
        case CfaPattern::RGGB: return "RGGB";
        case CfaPattern::BGGR: return "BGGR";
        case CfaPattern::GRBG: return "GRBG";
        case CfaPattern::GBRG: return "GBRG";
    }
    return "RGGB";
}

BayerImage load_bayer(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw Error("BadMagic", path);
    char version = 0;
    is.read(&version, 1);
    if (static_cast<std::uint8_t>(version) != kVersion)
        throw Error("InvalidHeader", "unsupported DRAW version");
    const std::uint32_t w = read_u32(is);
    const std::uint32_t h = read_u32(is);
    const std::uint32_t ch = read_u32(is);
    if (!is || w == 0 || h == 0)
        throw Error("InvalidHeader", "zero dimension");
    if (ch != 4) throw Error("InvalidHeader", "channel count must be 4");

    const std::size_t count = 4ull * w * h;
    std::vector<float> payload(count);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(count * 4));
    if (static_cast<std::size_t>(is.gcount()) != count * 4 ||
        is.peek() != EOF)
        throw Error("TruncatedPayload", path);

    BayerImage img;
    img.width = w;
    img.height = h;
    const std::string sidecar = path + ".json";
    if (std::filesystem::exists(sidecar)) {
        std::ifstream js(sidecar);
        nlohmann::json j;
        js >> j;
        img.meta = meta_from_json(j);
    }
    const double black = img.meta.black_level;
    const double range = img.meta.white_level - img.meta.black_level;
    img.planes.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        double v = (static_cast<double>(payload[i]) - black) / range;
        img.planes[i] = std::clamp(v, 0.0, 1.0);
    }
    return img;
}

void save_bayer(const BayerImage& img, const std::string& path) {
    if (img.planes.size() != 4 * img.width * img.height)
        throw Error("ShapeMismatch", "save_bayer: payload size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("IoFailure", "cannot write " + path);
    os.write(kMagic, 4);
    const char v = static_cast<char>(kVersion);
    os.write(&v, 1);
    write_u32(os, static_cast<std::uint32_t>(img.width));
    write_u32(os, static_cast<std::uint32_t>(img.height));
    write_u32(os, 4);
    // stored values are the normalized floats; the sidecar records a
    // black/white pair of 0/1 so load reproduces them exactly. Values above
    // white saturate here, mirroring the load-side clamp.
    for (double d : img.planes)
        write_f32(os, static_cast<float>(std::clamp(d, 0.0, 1.0)));
    if (!os) throw Error("IoFailure", "short write to " + path);

    SensorMeta m = img.meta;
    m.black_level = 0.0;
    m.white_level = 1.0;
    std::ofstream js(path + ".json");
    js << meta_to_json(m).dump(2) << "\n";
    if (!js) throw Error("IoFailure", "cannot write sidecar for " + path);
}

BayerImage pack_cfa(const std::vector<double>& mosaic, std::size_t height2,
                    std::size_t width2, CfaPattern pattern) {
    if (height2 % 2 != 0 || width2 % 2 != 0)
        throw Error("OddDimensions", "mosaic dims must be even");
    if (mosaic.size() != height2 * width2)
        throw Error("ShapeMismatch", "mosaic size mismatch");
    const std::size_t H = height2 / 2, W = width2 / 2;

    // tile offsets (dy,dx) for planes R, Gr, B, Gb
    struct Off { std::size_t y, x; };
    Off off[4];
    switch (pattern) {
        case CfaPattern::RGGB:
            off[0] = {0, 0}; off[1] = {0, 1}; off[2] = {1, 1}; off[3] = {1, 0};
            break;
        case CfaPattern::BGGR:
            off[0] = {1, 1}; off[1] = {0, 1}; off[2] = {0, 0}; off[3] = {1, 0};
            break;
        case CfaPattern::GRBG:
            off[0] = {0, 1}; off[1] = {0, 0}; off[2] = {1, 0}; off[3] = {1, 1};
            break;
        case CfaPattern::GBRG:
            off[0] = {1, 0}; off[1] = {1, 1}; off[2] = {0, 1}; off[3] = {0, 0};
            break;
    }

    BayerImage img;
    img.width = W;
    img.height = H;
    img.meta.cfa_pattern = pattern;
    img.planes.resize(4 * H * W);
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                img.at(p, y, x) =
                    mosaic[(2 * y + off[p].y) * width2 + 2 * x + off[p].x];
    return img;
}

std::vector<double> unpack_cfa(const BayerImage& img) {
    const std::size_t H = img.height, W = img.width;
    std::vector<double> mosaic(4 * H * W);
    // reuse pack's offset table by round-tripping through a scratch pack
    struct Off { std::size_t y, x; };
    Off off[4];
    switch (img.meta.cfa_pattern) {
        case CfaPattern::RGGB:
            off[0] = {0, 0}; off[1] = {0, 1}; off[2] = {1, 1}; off[3] = {1, 0};
            break;
        case CfaPattern::BGGR:
            off[0] = {1, 1}; off[1] = {0, 1}; off[2] = {0, 0}; off[3] = {1, 0};
            break;
        case CfaPattern::GRBG:
            off[0] = {0, 1}; off[1] = {0, 0}; off[2] = {1, 0}; off[3] = {1, 1};
            break;
        case CfaPattern::GBRG:
            off[0] = {1, 0}; off[1] = {1, 1}; off[2] = {0, 1}; off[3] = {0, 0};
            break;
    }
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                mosaic[(2 * y + off[p].y) * 2 * W + 2 * x + off[p].x] =
                    img.at(p, y, x);
    return mosaic;
}

double srgb_encode(double v) {
    if (v <= 0.0031308) return 12.92 * v;
    return 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_decode(double v) {
    if (v <= 0.04045) return v / 12.92;
    return std::pow((v + 0.055) / 1.055, 2.4);
}

void save_rgb(const RgbImage& img, const std::string& path,
              RgbExportMode mode) {
    const std::size_t H = img.height, W = img.width;
    if (img.channels.size() != 3 * H * W)
        throw Error("ShapeMismatch", "save_rgb: channel size mismatch");
    for (double v : img.channels)
        if (!std::isfinite(v)) throw Error("NonFiniteInput", "save_rgb");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("IoFailure", "cannot write " + path);
    if (mode == RgbExportMode::Float) {
        os << "PF\n" << W << " " << H << "\n-1.0\n";
        // PFM stores rows bottom-to-top, pixels interleaved
        for (std::size_t yy = H; yy-- > 0;)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    write_f32(os, static_cast<float>(img.at(c, yy, x)));
    } else {
        os << "P6\n" << W << " " << H << "\n255\n";
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                    const int b =
                        static_cast<int>(std::lround(srgb_encode(v) * 255.0));
                    const unsigned char uc =
                        static_cast<unsigned char>(std::clamp(b, 0, 255));
                    os.write(reinterpret_cast<const char*>(&uc), 1);
                }
    }
    if (!os) throw Error("IoFailure", "short write to " + path);
}

RgbImage load_rgb(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("IoFailure", "cannot open " + path);
    std::string magic;
    is >> magic;
    std::size_t w = 0, h = 0;
    RgbImage img;
    if (magic == "PF") {
        double scale = 0.0;
        is >> w >> h >> scale;
        is.get();  // single whitespace after header
        if (w == 0 || h == 0 || scale >= 0.0)
            throw Error("InvalidHeader", "bad PFM header in " + path);
        img.width = w;
        img.height = h;
        img.channels.resize(3 * w * h);
        std::vector<float> row(3 * w);
        for (std::size_t yy = h; yy-- > 0;) {
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(row.size() * 4));
            if (!is) throw Error("TruncatedPayload", path);
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    img.at(c, yy, x) = row[3 * x + c];
        }
    } else if (magic == "P6") {
        std::size_t maxval = 0;
        is >> w >> h >> maxval;
        is.get();
        if (w == 0 || h == 0 || maxval != 255)
            throw Error("InvalidHeader", "bad PPM header in " + path);
        img.width = w;
        img.height = h;
        img.channels.resize(3 * w * h);
        std::vector<unsigned char> row(3 * w);
        for (std::size_t y = 0; y < h; ++y) {
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(row.size()));
            if (!is) throw Error("TruncatedPayload", path);
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    img.at(c, y, x) = srgb_decode(row[3 * x + c] / 255.0);
        }
    } else {
        throw Error("BadMagic", path);
    }
    return img;
}

Tensor bayer_to_tensor(const BayerImage& img, bool requires_grad) {
    return make_tensor({4, img.height, img.width}, img.planes, requires_grad);
}

Tensor rgb_to_tensor(const RgbImage& img, bool requires_grad) {
    return make_tensor({3, img.height, img.width}, img.channels,
                       requires_grad);
}

RgbImage rgb_from_tensor(const Tensor& t, std::size_t height,
                         std::size_t width) {
    if (t->numel() != 3 * height * width)
        throw Error("ShapeMismatch", "rgb_from_tensor: size mismatch");
    RgbImage img;
    img.width = width;
    img.height = height;
    img.channels = t->value;
    return img;
}

}  // namespace darkisp
