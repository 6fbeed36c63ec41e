#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "pmri/data_sim.hpp"
#include "pmri/io.hpp"
#include "pmri/metrics.hpp"
#include "pmri/network.hpp"

using namespace pmri;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("pmri_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::size_t sampled_columns(const SamplingMask& mask) {
    std::size_t count = 0;
    for (std::size_t x = 0; x < mask.cols(); ++x) count += mask.image()(0, x) != 0.0;
    return count;
}

}  // namespace

TEST_CASE("phantom basics") {
    const auto p = phantom(32, 32);
    CHECK(p.rows == 32);
    CHECK(p(0, 0) == 0.0);
    CHECK(p(31, 31) == 0.0);
    for (double v : p.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // skull ring is bright, brain interior is darker but nonzero
    CHECK(p(16, 16) > 0.0);
    CHECK_THROWS_AS(phantom(7, 32), ContractError);
}

TEST_CASE("phantom membership is resolution independent at ellipse centres") {
    // centre of the image and centre of the left ventricle ellipse (-0.22, 0)
    const auto small = phantom(32, 32), big = phantom(320, 320);
    auto at = [](const RealImage& img, double x, double y) {
        const auto j = static_cast<std::size_t>((x + 1.0) / 2.0 * double(img.cols));
        const auto i = static_cast<std::size_t>((1.0 - y) / 2.0 * double(img.rows));
        return img(i, j);
    };
    CHECK(at(small, 0.0, 0.0) == doctest::Approx(at(big, 0.0, 0.0)));
    CHECK(at(small, -0.22, 0.0) == doctest::Approx(at(big, -0.22, 0.0)));
    CHECK(at(small, 0.0, 0.35) == doctest::Approx(at(big, 0.0, 0.35)));
}

TEST_CASE("phantom 64x64 regression checksum") {
    const auto p = phantom(64, 64);
    double sum = 0, weighted = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += p.data[i];
        weighted += p.data[i] * double(i % 97);
    }
    CHECK(sum == doctest::Approx(512.7999999999895).epsilon(1e-12));
    CHECK(weighted == doctest::Approx(25234.900000000012).epsilon(1e-12));
}

TEST_CASE("coil sensitivities are normalized") {
    for (std::uint64_t seed : {1u, 2u, 99u}) {
        for (std::size_t c : {1u, 2u, 4u, 8u}) {
            const auto s = coil_sensitivities(20, 24, c, seed);
            REQUIRE(s.s.shape() == Shape{20, 24, c});
            double worst = 0;
            for (std::size_t p = 0; p < 20 * 24; ++p) {
                double acc = 0;
                for (std::size_t ch = 0; ch < c; ++ch) acc += std::norm(s.s[p * c + ch]);
                worst = std::max(worst, std::abs(acc - 1.0));
            }
            CHECK(worst < 1e-10);
        }
    }
    const auto one = coil_sensitivities(16, 16, 1, 5);
    for (auto v : one.s.values()) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
    CHECK_THROWS_AS(coil_sensitivities(16, 16, 0, 1), ContractError);
}

TEST_CASE("coil sensitivities depend on the seed") {
    const auto a = coil_sensitivities(16, 16, 4, 1), b = coil_sensitivities(16, 16, 4, 2),
               a2 = coil_sensitivities(16, 16, 4, 1);
    CHECK(a.s != b.s);
    CHECK(a.s == a2.s);
}

TEST_CASE("coil images") {
    const auto v = phantom(16, 16);
    const auto s = coil_sensitivities(16, 16, 3, 7);
    SUBCASE("zero image") {
        const auto u = make_coil_images(RealImage(16, 16), s);
        for (auto x : u.values()) CHECK(x == cplx(0.0));
    }
    SUBCASE("RSS recovers the body image") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto u = make_coil_images(v, coil_sensitivities(16, 16, 4, seed));
            const auto r = rss_combine(u);
            double worst = 0;
            for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(r.data[i] - v.data[i]));
            CHECK(worst < 1e-10);
        }
    }
    SUBCASE("single pixel, two coils") {
        SensitivitySet two{ComplexTensor({1, 1, 2}, {cplx(0.6, 0.0), cplx(0.0, 0.8)})};
        RealImage px(1, 1, 2.5);
        const auto u = make_coil_images(px, two);
        CHECK(u[0] == cplx(1.5, 0.0));
        CHECK(u[1] == cplx(0.0, 2.0));
    }
    CHECK_THROWS_AS(make_coil_images(RealImage(8, 8), s), ShapeError);
}

TEST_CASE("mask at n = 320 samples 101 columns") {
    const auto mask = cartesian_mask(320, 320, 0.3156, 24);
    CHECK(sampled_columns(mask) == 101);
    CHECK(double(mask.sampled_count()) / double(320 * 320) == doctest::Approx(0.315625).epsilon(1e-15));
    CHECK(default_acs_lines(320) == 24);
}

TEST_CASE("mask structure") {
    for (std::size_t n : {64u, 128u, 320u}) {
        const auto mask = cartesian_mask(n, n, 0.3156, default_acs_lines(n));
        const double ratio = double(mask.sampled_count()) / double(n * n);
        CHECK(std::abs(ratio - 0.3156) < 0.005);
        // line sampling: every column constant
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 1; y < n; ++y) REQUIRE(mask.image()(y, x) == mask.image()(0, x));
        // ACS block contiguous and centred
        const std::size_t acs = default_acs_lines(n);
        const std::size_t start = n / 2 - acs / 2;
        for (std::size_t x = start; x < start + acs; ++x) CHECK(mask.image()(0, x) == 1.0);
    }
    SUBCASE("full ratio") {
        const auto mask = cartesian_mask(12, 10, 1.0, 2);
        CHECK(mask.sampled_count() == 120);
    }
    SUBCASE("row orientation is the transpose") {
        const auto cols = cartesian_mask(40, 40, 0.3156, 4, LineOrientation::columns);
        const auto rows = cartesian_mask(40, 40, 0.3156, 4, LineOrientation::rows);
        for (std::size_t y = 0; y < 40; ++y)
            for (std::size_t x = 0; x < 40; ++x) CHECK(rows.image()(x, y) == cols.image()(y, x));
    }
    SUBCASE("deterministic") {
        CHECK(cartesian_mask(64, 64, 0.25, 6).image() == cartesian_mask(64, 64, 0.25, 6).image());
    }
    CHECK_THROWS_AS(cartesian_mask(32, 32, 0.0, 2), ContractError);
    CHECK_THROWS_AS(cartesian_mask(32, 32, 1.5, 2), ContractError);
    CHECK_THROWS_AS(cartesian_mask(32, 32, 0.2, 10), ContractError);
}

TEST_CASE("acquisition") {
    std::mt19937_64 rng(3);
    const auto u = testutil::random_tensor({32, 32, 4}, rng);
    const auto mask = cartesian_mask(32, 32, 0.3156, 3);
    SUBCASE("noiseless equals encode") {
        CHECK(simulate_acquisition(u, mask, 0.0, 1).f == encode(u, mask).f);
    }
    SUBCASE("noise energy") {
        const double sigma = 0.05;
        const auto clean = encode(u, mask).f;
        const auto noisy = simulate_acquisition(u, mask, sigma, 11).f;
        double energy = 0;
        for (std::size_t i = 0; i < clean.size(); ++i) energy += std::norm(noisy[i] - clean[i]);
        const double expected = 2.0 * sigma * sigma * double(mask.sampled_count()) * 4.0;
        CHECK(std::abs(energy / expected - 1.0) < 0.1);
        KSpaceData{noisy}.check_consistent(mask);
    }
    SUBCASE("reproducible") {
        CHECK(simulate_acquisition(u, mask, 0.1, 5).f == simulate_acquisition(u, mask, 0.1, 5).f);
        CHECK(simulate_acquisition(u, mask, 0.1, 5).f != simulate_acquisition(u, mask, 0.1, 6).f);
    }
    CHECK_THROWS_AS(simulate_acquisition(u, mask, -1.0, 1), ContractError);
}

TEST_CASE("make_sample") {
    SimConfig cfg;
    cfg.m = 24;
    cfg.n = 20;
    cfg.c = 3;
    const auto s = make_sample(cfg, 4);
    s.validate();
    CHECK(s.has_u());
    CHECK(s.has_v());
    CHECK(s.coils() == 3);
    CHECK(s.v_star == phantom(24, 20));
    s.f.check_consistent(s.mask);
    CHECK(make_sample(cfg, 4) == s);
}

TEST_CASE("sample persistence") {
    SimConfig cfg;
    cfg.m = 16;
    cfg.n = 16;
    cfg.c = 2;
    cfg.sigma = 0.01;
    const auto s = make_sample(cfg, 9);
    const auto dir = scratch_dir("sample");

    SUBCASE("round trip is bitwise") {
        save_sample(s, dir / "a");
        CHECK(load_sample(dir / "a") == s);
        const auto found = list_samples(dir);
        REQUIRE(found.size() == 1);
        CHECK(found[0].filename() == "a");
    }
    SUBCASE("missing mask names the file") {
        save_sample(s, dir / "b");
        std::filesystem::remove(dir / "b" / "mask.ctns");
        try {
            load_sample(dir / "b");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("mask.ctns") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        save_sample(s, dir / "c");
        auto meta = KeyValueFile::load(dir / "c" / "meta");
        meta.set("version", "2");
        meta.save(dir / "c" / "meta");
        CHECK_THROWS_AS(load_sample(dir / "c"), FormatError);
    }
    SUBCASE("truncated tensor reports an offset") {
        save_sample(s, dir / "d");
        std::filesystem::resize_file(dir / "d" / "f.ctns", 40);
        try {
            load_sample(dir / "d");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------- metrics

TEST_CASE("psnr") {
    RealImage ref(2, 2, 0.5), rec(2, 2, 0.5);
    ref(0, 0) = 1.0;
    rec(0, 0) = 1.0;
    rec(1, 1) = 0.6;
    const double db = psnr(rec, ref);
    CHECK(std::abs(db - 20.0 * std::log10(1.0 / 0.05)) < 1e-6);
    CHECK(std::abs(db - 26.0206) < 1e-4);

    CHECK(std::isinf(psnr(ref, ref)));
    CHECK(psnr_for_csv(psnr(ref, ref)) == kPsnrCap);
    CHECK(psnr_for_csv(31.5) == 31.5);

    RealImage ref2 = ref, rec2 = rec;
    for (auto& v : ref2.data) v *= 2;
    for (auto& v : rec2.data) v *= 2;
    CHECK(psnr(rec2, ref2) == doctest::Approx(db).epsilon(1e-14));

    CHECK_THROWS_AS(psnr(rec, RealImage(2, 2)), ContractError);
    CHECK_THROWS_AS(psnr(rec, RealImage(3, 2, 1.0)), ShapeError);
}

TEST_CASE("ssim identical images is exactly one") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(-3.0, 7.0);
    RealImage v(20, 17);
    for (auto& x : v.data) x = d(rng);
    for (auto w : {SsimWindow::gaussian, SsimWindow::uniform, SsimWindow::global}) {
        SsimOptions opt;
        opt.window = w;
        CHECK(ssim(v, v, opt) == 1.0);
    }
    CHECK(ssim(phantom(32, 32), phantom(32, 32)) == 1.0);
}

TEST_CASE("ssim on a constant pair matches the luminance closed form") {
    const double a = 0.3, b = 0.8;
    RealImage v(12, 12, a), ref(12, 12, b);
    const double C1 = (0.01 * b) * (0.01 * b);
    const double expected = (2 * a * b + C1) / (a * a + b * b + C1);
    for (auto w : {SsimWindow::gaussian, SsimWindow::uniform, SsimWindow::global}) {
        SsimOptions opt;
        opt.window = w;
        CHECK(ssim(v, ref, opt) == doctest::Approx(expected).epsilon(1e-10));
    }
    CHECK(expected < 1.0);
}

TEST_CASE("ssim of anti-correlated patterns is negative") {
    RealImage v(12, 12), ref(12, 12);
    for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 12; ++x) {
            const bool on = (x + y) % 2 == 0;
            ref(y, x) = on ? 1.0 : 0.0;
            v(y, x) = on ? 0.0 : 1.0;
        }
    // global statistics: means 0.5, variances 0.25, covariance -0.25
    const double C1 = 1e-4, C2 = 9e-4;
    const double hand = ((0.5 + C1) * (-0.5 + C2)) / ((0.5 + C1) * (0.5 + C2));
    SsimOptions g;
    g.window = SsimWindow::global;
    CHECK(ssim(v, ref, g) == doctest::Approx(hand).epsilon(1e-12));
    CHECK(ssim(v, ref) < 0.0);
    SsimOptions u;
    u.window = SsimWindow::uniform;
    CHECK(ssim(v, ref, u) < 0.0);
}

TEST_CASE("ssim rejects small images") {
    CHECK_THROWS_AS(ssim(RealImage(8, 8, 1.0), RealImage(8, 8, 1.0)), ContractError);
    SsimOptions g;
    g.window = SsimWindow::global;
    CHECK(ssim(RealImage(2, 2, 1.0), RealImage(2, 2, 1.0), g) == 1.0);
}

TEST_CASE("rmse") {
    const auto ref = phantom(16, 16);
    CHECK(rmse_image(ref, ref) == 0.0);
    CHECK(rmse_image(RealImage(16, 16), ref) == doctest::Approx(1.0).epsilon(1e-15));
    RealImage scaled = ref;
    for (auto& v : scaled.data) v *= 1.1;
    CHECK(rmse_image(scaled, ref) == doctest::Approx(0.1).epsilon(1e-12));
    RealImage ref3 = ref, scaled3 = scaled;
    for (auto& v : ref3.data) v *= 3;
    for (auto& v : scaled3.data) v *= 3;
    CHECK(rmse_image(scaled3, ref3) == doctest::Approx(rmse_image(scaled, ref)).epsilon(1e-12));
    CHECK_THROWS_AS(rmse_image(ref, RealImage(16, 16)), ContractError);

    std::mt19937_64 rng(2);
    const auto u = testutil::random_tensor({6, 5, 2}, rng);
    CHECK(rmse_multicoil(u, u) == 0.0);
    CHECK(rmse_multicoil(ComplexTensor(u.shape()), u) == doctest::Approx(1.0).epsilon(1e-15));

    // c = 2 hand instance: ||u*||^2 = 9 + 16, error norms^2 = 1 + 4
    ComplexTensor us({1, 1, 2}, {cplx(3, 0), cplx(0, 4)});
    ComplexTensor uh({1, 1, 2}, {cplx(2, 0), cplx(0, 2)});
    CHECK(rmse_multicoil(uh, us) == doctest::Approx(std::sqrt(5.0 / 25.0)).epsilon(1e-15));
    CHECK_THROWS_AS(rmse_multicoil(u, ComplexTensor(u.shape())), ContractError);

    // c = 1 magnitude images agree with rmse_image
    const auto t = to_tensor(scaled), r = to_tensor(ref);
    CHECK(rmse_multicoil(t, r) == doctest::Approx(rmse_image(scaled, ref)).epsilon(1e-14));
}
