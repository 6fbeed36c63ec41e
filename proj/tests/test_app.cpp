#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pmri/app.hpp"

using namespace pmri;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("pmri_app_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

AppConfig tiny() {
    AppConfig cfg;
    for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
             {"m", "16"}, {"n", "16"}, {"c", "2"}, {"T", "2"}, {"N_f", "4"}, {"kernel_G", "3"}, {"batch", "1"}})
        cfg.set(k, v);
    return cfg;
}

}  // namespace

TEST_CASE("config keys parse, validate and track what was set") {
    AppConfig cfg;
    cfg.set("T", "6");
    cfg.set(" lr ", " 3e-4 ");
    cfg.set("variant", "rss-combine,real-conv");
    cfg.set("variants", "full; init-zf");
    cfg.set("precision", "f32");
    CHECK(cfg.T == 6);
    CHECK(cfg.lr == doctest::Approx(3e-4));
    CHECK(cfg.variants == std::vector<std::string>{"full", "init-zf"});
    CHECK(cfg.is_set("T"));
    CHECK_FALSE(cfg.is_set("m"));
    CHECK(cfg.net().rss_combine);
    CHECK(cfg.grad_tol() == 1e-3);

    CHECK_THROWS_AS(cfg.set("bogus", "1"), ContractError);
    CHECK_THROWS_AS(cfg.set("T", "-1"), ContractError);
    CHECK_THROWS_AS(cfg.set("T", "2x"), ContractError);
    CHECK_THROWS_AS(cfg.set("ratio", "1.5"), ContractError);
    CHECK_THROWS_AS(cfg.set("variant", "bogus"), ContractError);
    CHECK_THROWS_AS(cfg.set("precision", "f16"), ContractError);

    // per-loss defaults unless overridden
    AppConfig w;
    w.set("loss", "coil");
    CHECK(w.weights().gamma == 1.0);
    CHECK(w.weights().beta == 1e-3);
    w.set("beta", "0.5");
    CHECK(w.weights().beta == 0.5);

    const fs::path dir = scratch("cfg");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "a.cfg");
        os << "# comment\nT = 3\nN_f = 16\n";
    }
    const AppConfig loaded = AppConfig::load(dir / "a.cfg");
    CHECK(loaded.T == 3);
    CHECK(loaded.N_f == 16);
    {
        std::ofstream os(dir / "b.cfg");
        os << "T = 3\nlearning_rate = 1\n";
    }
    CHECK_THROWS_WITH_AS(AppConfig::load(dir / "b.cfg"), doctest::Contains("learning_rate"), ContractError);
    fs::remove_all(dir);
}

TEST_CASE("pgm round trip") {
    const fs::path dir = scratch("pgm");
    fs::create_directories(dir);
    RealImage img(3, 5);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = double(i) / 7.0;
    write_pgm16(dir / "a.pgm", img, 2.0);
    const RealImage back = read_pgm16(dir / "a.pgm");
    REQUIRE(back.rows == 3);
    REQUIRE(back.cols == 5);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(std::min(img.data[i] / 2.0, 1.0)).epsilon(1e-4));
    std::ifstream is(dir / "a.pgm", std::ios::binary);
    std::string magic;
    std::getline(is, magic);
    CHECK(magic == "P5");
    CHECK(fs::file_size(dir / "a.pgm") == std::string("P5\n5 3\n65535\n").size() + 30);
    fs::remove_all(dir);
}

TEST_CASE("simulate, train, reconstruct, evaluate") {
    const fs::path dir = scratch("pipeline");
    std::ostringstream log;
    AppConfig cfg = tiny();
    cfg.set("n_samples", "2");
    REQUIRE(cmd_simulate(cfg, dir / "data", log) == kExitOk);
    CHECK(list_samples(dir / "data").size() == 2);
    CHECK(lines_of(dir / "data" / "manifest.csv").size() == 3);

    cfg.set("epochs", "2");
    REQUIRE(cmd_train(cfg, dir / "data", dir / "run", log) == kExitOk);
    const auto hist = lines_of(dir / "run" / "history.csv");
    REQUIRE(hist.size() == 3);
    CHECK(hist[0] == "epoch,loss,psnr_phase1,psnr_phase2");
    CHECK(fs::exists(dir / "run" / "checkpoint_init" / "params.txt"));
    {
        const NetParams a = load_params(dir / "run" / "checkpoint"), b = load_params(dir / "run" / "checkpoint_init");
        CHECK_FALSE(a.phases[0].rho == b.phases[0].rho);
    }

    AppConfig zero = tiny();
    zero.set("epochs", "0");
    REQUIRE(cmd_train(zero, dir / "data", dir / "run0", log) == kExitOk);
    CHECK(lines_of(dir / "run0" / "history.csv").size() == 1);

    REQUIRE(cmd_reconstruct(dir / "run" / "checkpoint", dir / "data" / "sample_0000", dir / "rec", log) == kExitOk);
    for (int t = 0; t <= 2; ++t) CHECK(fs::exists(dir / "rec" / ("phase_0" + std::to_string(t) + ".pgm")));
    CHECK(lines_of(dir / "rec" / "phases.csv").size() == 4);

    REQUIRE(cmd_evaluate(dir / "run" / "checkpoint", dir / "data", dir / "eval.csv", log) == kExitOk);
    const auto ev = lines_of(dir / "eval.csv");
    REQUIRE(ev.size() == 5);
    CHECK(ev[0] == "sample_id,psnr,ssim,rmse_image,rmse_multicoil");
    CHECK(ev[1].rfind("sample_0000,", 0) == 0);
    CHECK(ev[3].rfind("mean,", 0) == 0);
    CHECK(ev[4].rfind("std,", 0) == 0);

    // a checkpoint for a different coil count is rejected by name
    AppConfig four = tiny();
    four.set("c", "4");
    REQUIRE(cmd_simulate(four, dir / "data4", log) == kExitOk);
    CHECK_THROWS_WITH_AS(cmd_reconstruct(dir / "run" / "checkpoint", dir / "data4" / "sample_0000", dir / "rec4", log),
                         doctest::Contains("c = 2"), ShapeError);
    CHECK_THROWS_AS(cmd_train(tiny(), dir / "data4", dir / "run4", log), ShapeError);
    fs::remove_all(dir);
}

TEST_CASE("evaluate caps an exact reconstruction at 99.99 dB") {
    const fs::path dir = scratch("exact");
    std::ostringstream log;
    AppConfig cfg = tiny();
    cfg.set("ratio", "1");
    cfg.set("acs_lines", "4");
    REQUIRE(cmd_simulate(cfg, dir / "data", log) == kExitOk);
    cfg.set("variant", "rss-combine");
    NetConfig nc = cfg.net();
    save_params(NetParams::zeros(nc), dir / "zero");
    // full sampling, a zero network and RSS combination reproduce v* up to round-off
    REQUIRE(cmd_evaluate(dir / "zero", dir / "data", dir / "eval.csv", log) == kExitOk);
    const auto ev = lines_of(dir / "eval.csv");
    REQUIRE(ev.size() == 4);
    std::stringstream row(ev[1]);
    std::string id, p;
    std::getline(row, id, ',');
    std::getline(row, p, ',');
    CHECK(std::stod(p) > 99.0);
    CHECK(std::stod(p) <= 99.99);
    CHECK(ev[3] == "std,0,0,0,0");
    fs::remove_all(dir);
}

TEST_CASE("gradcheck exit codes and size bound") {
    std::ostringstream log;
    AppConfig cfg;
    cfg.set("gc_seeds", "1");
    cfg.set("m", "8");
    cfg.set("n", "8");
    CHECK(cmd_gradcheck(cfg, {}, log) == kExitOk);
    cfg.set("tol", "0");
    CHECK(cmd_gradcheck(cfg, {}, log) == kExitCertFailed);
    CHECK(log.str().find("FAIL") != std::string::npos);

    AppConfig big;
    big.set("m", "64");
    big.set("n", "64");
    CHECK_THROWS_AS(cmd_gradcheck(big, {}, log), ContractError);

    std::size_t m = 0, n = 0;
    const NetConfig small = gradcheck_config(AppConfig{}, m, n);
    CHECK(m == 16);
    CHECK(n == 16);
    CHECK(small.channels == 2);
    CHECK(small.phases == 2);
    CHECK(small.features == 8);
}

TEST_CASE("zero network deviation is round-off for every variant") {
    SimConfig sc;
    sc.m = 16;
    sc.n = 16;
    sc.c = 2;
    const Sample s = make_sample(sc, 3);
    for (const char* v : {"full", "ablation-image-only", "rss-combine", "real-conv", "init-zf"}) {
        NetConfig nc;
        nc.channels = 2;
        nc.phases = 3;
        nc.features = 4;
        nc.apply_variant(v);
        CHECK(zero_network_deviation(nc, s) < 1e-13);
    }
}
