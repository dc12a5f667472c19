#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <darkisp/rng.hpp>
#include <darkisp/synth.hpp>
#include <darkisp/trainer.hpp>

using namespace darkisp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("darkisp_trainer_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.channels = 4;
    mc.embed_dim = 4;
    mc.order = 4;
    mc.coeff_width = 4;
    mc.seed = 1;
    return mc;
}

std::string make_dataset(const TempDir& tmp, const char* name,
                         bool neutral = false) {
    SynthConfig cfg;
    if (!neutral) {
        cfg.ground_truth.wb_gains = {1.6, 1.0, 1.4, 1.0};
        cfg.ground_truth.ccm = {1.25, -0.15, -0.1, -0.1, 1.2, -0.1, 0.0, -0.25,
                                1.25};
        cfg.gamma = 2.0;
        cfg.exposure_ratio = 0.5;
    } else {
        cfg.gamma = 1.0;  // identity ground truth end to end
    }
    cfg.count = 2;
    cfg.height = cfg.width = 16;
    cfg.seed = 13;
    const std::string dir = (tmp.path / name).string();
    generate_dataset(cfg, "", dir);
    return dir + "/manifest.json";
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

}  // namespace

TEST_CASE("proxy loss oracle: constant offset 0.1 gives MSE 0.01") {
    Graph g;
    Tensor ref = make_tensor({3, 2, 2}, std::vector<double>(12, 0.4));
    Tensor u = make_tensor({3, 2, 2}, std::vector<double>(12, 0.5), true);
    Tensor loss = proxy_loss(g, u, ref);
    CHECK(loss->value[0] == doctest::Approx(0.01).epsilon(1e-12));
    g.backward(loss);
    // d/du of mean((u-ref)^2) = 2 (u - ref) / N
    for (double v : u->grad)
        CHECK(v == doctest::Approx(2.0 * 0.1 / 12.0).epsilon(1e-12));
}

TEST_CASE("plain mse agrees with the tape version") {
    RgbImage a, b;
    a.width = b.width = 2;
    a.height = b.height = 1;
    a.channels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    b.channels = {0.2, 0.2, 0.3, 0.4, 0.5, 0.9};
    CHECK(mse(a, b) == doctest::Approx((0.01 + 0.09) / 6.0).epsilon(1e-12));
}

TEST_CASE("sgd matches a hand-unrolled momentum recurrence") {
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.01;
    Tensor w = make_tensor({2}, {1.0, -2.0}, true);
    Tensor wb = make_tensor({2}, {1.5, 0.5}, true);  // decay-exempt name
    std::vector<std::pair<std::string, Tensor>> params = {
        {"coeff.conv1_w", w}, {"linear.wb_gains", wb}};
    SgdState st;
    double v_w[2] = {0, 0}, v_b[2] = {0, 0};
    double ref_w[2] = {1.0, -2.0}, ref_b[2] = {1.5, 0.5};
    for (int step = 0; step < 5; ++step) {
        w->ensure_grad();
        wb->ensure_grad();
        for (int i = 0; i < 2; ++i) {
            w->grad[i] = 0.3 * (step + 1) * (i ? -1 : 1);
            wb->grad[i] = 0.2 * (step + 1);
        }
        sgd_step(params, st, cfg);
        for (int i = 0; i < 2; ++i) {
            v_w[i] = cfg.momentum * v_w[i] + w->grad[i] +
                     cfg.weight_decay * ref_w[i];
            ref_w[i] -= cfg.lr * v_w[i];
            v_b[i] = cfg.momentum * v_b[i] + wb->grad[i];  // no decay
            ref_b[i] -= cfg.lr * v_b[i];
            CHECK(w->value[i] == doctest::Approx(ref_w[i]).epsilon(1e-15));
            CHECK(wb->value[i] == doctest::Approx(ref_b[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    Tensor w = make_tensor({3}, {0.5, 0.6, 0.7}, true);
    w->ensure_grad();
    for (double& g : w->grad) g = 1.0;
    SgdState st;
    std::vector<std::pair<std::string, Tensor>> params = {{"coeff.conv1_w", w}};
    sgd_step(params, st, cfg);
    CHECK(w->value[0] == 0.5);
    CHECK(w->value[2] == 0.7);
}

TEST_CASE("lambda has no effect during warmup") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "warm");
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 3;
    cfg.warmup = 10;
    cfg.lr = 0.01;
    cfg.lambda = 1e-2;
    Model m1 = make_model(nullptr, cfg.model);
    train(m1, cfg, manifest, "");

    cfg.lambda = 0.0;
    Model m2 = make_model(nullptr, cfg.model);
    train(m2, cfg, manifest, "");

    auto p1 = m1.named_params();
    auto p2 = m2.named_params();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i)
        CHECK(p1[i].second->value == p2[i].second->value);  // bitwise
}

TEST_CASE("training is deterministic for a fixed seed") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "det");
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 12;  // crosses the warmup boundary
    cfg.warmup = 10;
    auto run = [&] {
        Model m = make_model(nullptr, cfg.model);
        TrainResult r = train(m, cfg, manifest, "");
        std::vector<double> flat;
        for (auto& [name, t] : m.named_params())
            flat.insert(flat.end(), t->value.begin(), t->value.end());
        flat.push_back(r.final_loss.total);
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("divergent optimization reports a non-finite loss") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "blow");
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 8;
    cfg.warmup = 0;
    cfg.lr = 1e20;
    Model m = make_model(nullptr, cfg.model);
    CHECK_THROWS_WITH_AS(train(m, cfg, manifest, ""),
                         doctest::Contains("NonFiniteLoss"), Error);
}

TEST_CASE("convergence log has the documented CSV layout") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "log");
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 2;
    cfg.warmup = 0;
    Model m = make_model(nullptr, cfg.model);
    std::ostringstream log;
    TrainResult r = train(m, cfg, manifest, "", &log);
    std::istringstream is(log.str());
    std::string header;
    std::getline(is, header);
    CHECK(header.find("epoch") != std::string::npos);
    CHECK(header.find("l_task") != std::string::npos);
    CHECK(header.find("kappa_mean") != std::string::npos);
    int lines = 0;
    for (std::string line; std::getline(is, line);)
        if (!line.empty()) ++lines;
    CHECK(lines == 2);
    CHECK(r.log.size() == 2);
    CHECK(r.steps == 4);  // 2 epochs x 2 images, batch 1
}

TEST_CASE("evaluate returns the +inf sentinel on an exactly solvable set") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "exact", /*neutral=*/true);
    ModelConfig mc = tiny_model();
    Model m = make_model(nullptr, mc);  // identity init == identity GT
    EvalMetrics e1 = evaluate(m, manifest);
    CHECK(e1.pairs == 2);
    CHECK(std::isinf(e1.psnr_mean));
    CHECK(e1.residual_mean == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    EvalMetrics e2 = evaluate(m, manifest);
    CHECK(e1.psnr_mean == e2.psnr_mean);
    CHECK(e1.kappa_mean == e2.kappa_mean);
}

TEST_CASE("evaluate is finite when the model mismatches the data") {
    TempDir tmp;
    const std::string manifest = make_dataset(tmp, "mismatch");
    Model m = make_model(nullptr, tiny_model());
    EvalMetrics e = evaluate(m, manifest);
    CHECK(std::isfinite(e.psnr_mean));
    CHECK(e.psnr_mean > 0.0);
}

TEST_CASE("checkpoints round trip byte for byte") {
    TempDir tmp;
    ModelConfig mc = tiny_model();
    Model m = make_model(nullptr, mc);
    Rng rng(99);
    for (auto& [name, t] : m.named_params())
        for (double& v : t->value) v += 0.01 * rng.uniform(-1, 1);
    const std::string p1 = (tmp.path / "a.json").string();
    const std::string p2 = (tmp.path / "b.json").string();
    LossReport fl;
    fl.total = 0.123;
    save_checkpoint(m, p1, 7, "cafe1234", fl);

    Model m2 = make_model(nullptr, mc);
    CHECK(load_checkpoint(m2, p1) == 7);
    save_checkpoint(m2, p2, 7, "cafe1234", fl);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("config parsing and hashing") {
    TempDir tmp;
    const std::string p = (tmp.path / "train.json").string();
    std::ofstream(p) << "{\"lr\": 0.005, \"epochs\": 4, \"warmup\": 2,"
                        " \"lambda\": 0.02,"
                        " \"model\": {\"channels\": 4, \"embed_dim\": 4}}";
    TrainConfig cfg = train_config_from_json_file(p);
    CHECK(cfg.lr == doctest::Approx(0.005));
    CHECK(cfg.epochs == 4);
    CHECK(cfg.model.channels == 4);

    TrainConfig other = cfg;
    CHECK(config_hash(cfg) == config_hash(other));
    other.lr = 0.006;
    CHECK(config_hash(cfg) != config_hash(other));

    std::ofstream(p) << "{\"epochs\": 1}";  // warmup 10 > epochs
    CHECK_THROWS_AS(train_config_from_json_file(p), Error);
}
