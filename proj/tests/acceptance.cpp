// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance            all criteria
//   acceptance 3 8 9      a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "pmri/app.hpp"
#include "pmri/metrics.hpp"
#include "pmri/ops.hpp"

using namespace pmri;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", x);
    return buf;
}

ComplexTensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    ComplexTensor t(std::move(shape));
    for (auto& v : t.values()) v = {d(rng), d(rng)};
    return t;
}

double max_diff(const ComplexTensor& a, const ComplexTensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ComplexTensor loop_conv(const ComplexTensor& x, const ConvKernel& k) {
    const long m = long(x.dim(0)), n = long(x.dim(1)), ci = long(k.cin()), co = long(k.cout());
    const long kh = long(k.kh()), kw = long(k.kw());
    ComplexTensor out({x.dim(0), x.dim(1), k.cout()});
    for (long y = 0; y < m; ++y)
        for (long xx = 0; xx < n; ++xx)
            for (long o = 0; o < co; ++o) {
                std::complex<long double> acc(k.bias[o].real(), k.bias[o].imag());
                for (long dy = 0; dy < kh; ++dy)
                    for (long dx = 0; dx < kw; ++dx) {
                        const long sy = y + dy - kh / 2, sx = xx + dx - kw / 2;
                        if (sy < 0 || sy >= m || sx < 0 || sx >= n) continue;
                        for (long i = 0; i < ci; ++i) {
                            const cplx w = k.weights[((dy * kw + dx) * ci + i) * co + o];
                            const cplx v = x[(sy * n + sx) * ci + i];
                            acc += std::complex<long double>(w.real(), w.imag()) *
                                   std::complex<long double>(v.real(), v.imag());
                        }
                    }
                out[(y * n + xx) * co + o] = {double(acc.real()), double(acc.imag())};
            }
    return out;
}

// ---- 1 and 2 share one certification run

const GradcheckSummary& certification() {
    static const GradcheckSummary sum = [] {
        AppConfig cfg;
        cfg.gc_seeds = 10;
        std::size_t m = 0, n = 0;
        const NetConfig nc = gradcheck_config(cfg, m, n);
        return run_gradcheck(nc, m, n, cfg);
    }();
    return sum;
}

Outcome criterion1() {
    const auto& s = certification();
    double worst = 0;
    std::size_t blocks = 0, coords = 0;
    for (const auto& r : s.reports) {
        worst = std::max(worst, r.max_rel_err);
        blocks += r.blocks.size();
        for (const auto& b : r.blocks) coords += b.checked;
    }
    const bool pass = s.reports.size() >= 10 && worst < 1e-5 && s.seconds < 60.0;
    return {pass, std::to_string(s.reports.size()) + " seeds, " + std::to_string(blocks) + " blocks, " +
                      std::to_string(coords) + " coordinates, max rel err " + sci(worst) + " (< 1e-5), " +
                      sci(s.seconds) + " s (< 60)"};
}

Outcome criterion2() {
    const auto& s = certification();
    double worst = 0;
    bool every_t = true;
    std::size_t entries = 0;
    for (const auto& r : s.reports) {
        worst = std::max(worst, r.max_costate_err);
        for (auto c : r.costate_checked) {
            every_t = every_t && c > 0;
            entries += c;
        }
        every_t = every_t && r.costate_checked.size() == 3;  // t = 0, 1, 2
    }
    return {every_t && worst < 1e-6, std::to_string(entries) + " costate entries over t = 0..T, max rel err " +
                                          sci(worst) + " (< 1e-6)" + (every_t ? "" : ", some t unchecked")};
}

Outcome criterion3() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    double unit = 0, round = 0, adj_dft = 0, adj_conv = 0, adj_mask = 0, oracle = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 3 + rng() % 30, n = 3 + rng() % 30, c = 1 + rng() % 4;
        const auto x = random_tensor({m, n, c}, rng), y = random_tensor({m, n, c}, rng);
        unit = std::max(unit, std::abs(std::sqrt(norm2(dft2(x))) - std::sqrt(norm2(x))) / std::sqrt(norm2(x)));
        round = std::max(round, max_diff(idft2(dft2(x)), x) / max_abs(x));
        round = std::max(round, max_diff(dft2(idft2(x)), x) / max_abs(x));
        const cplx l = inner(dft2(x), y), r = inner(x, idft2(y));
        adj_dft = std::max(adj_dft, std::abs(l - r) / std::abs(l));

        RealImage mask(m, n);
        for (auto& v : mask.data) v = double(rng() % 2);
        const double lm = real_inner(mask_apply(x, mask), y), rm = real_inner(x, mask_apply(y, mask));
        adj_mask = std::max(adj_mask, std::abs(lm - rm) / std::max(1.0, std::abs(lm)));

        const std::size_t k = std::vector<std::size_t>{1, 3, 5, 9}[trial % 4], co = 1 + rng() % 4;
        ConvKernel ker{random_tensor({k, k, c, co}, rng, 0.3), random_tensor({co}, rng, 0.3)};
        for (auto path : {ConvPath::direct, ConvPath::spectral})
            oracle = std::max(oracle, max_diff(cconv2d(x, ker, Precision::f64, path), loop_conv(x, ker)));
        ker.bias = ComplexTensor({co});
        const auto yo = random_tensor({m, n, co}, rng);
        for (auto path : {ConvPath::direct, ConvPath::spectral}) {
            const double lc = real_inner(cconv2d(x, ker, Precision::f64, path), yo);
            const double rc = real_inner(x, cconv2d_vjp(x, ker, yo, Precision::f64, true, path).input);
            adj_conv = std::max(adj_conv, std::abs(lc - rc) / std::max(1.0, std::abs(lc)));
        }
    }
    const double secs = seconds_since(t0);
    const bool pass = unit < 1e-10 && round < 1e-10 && adj_dft < 1e-10 && adj_conv < 1e-10 && adj_mask < 1e-10 &&
                      oracle < 1e-12 && secs < 10.0;
    return {pass, "unitarity " + sci(unit) + ", round trip " + sci(round) + ", adjoint dft2 " + sci(adj_dft) +
                      " cconv2d " + sci(adj_conv) + " mask " + sci(adj_mask) + ", conv vs loop " + sci(oracle) +
                      ", " + sci(secs) + " s"};
}

Outcome criterion4() {
    const std::vector<std::string> variants{"full", "ablation-image-only", "rss-combine", "real-conv", "init-zf",
                                            "init-k"};
    SimConfig sc;
    const Sample phantom_sample = make_sample(sc, 1);
    // a second consistent instance with a random multi-coil image
    std::mt19937_64 rng(5);
    Sample random_sample = phantom_sample;
    random_sample.u_star = random_tensor({32, 32, 4}, rng);
    random_sample.f = encode(random_sample.u_star, random_sample.mask);

    double worst = 0;
    bool per_phase = true;
    for (const auto& v : variants) {
        NetConfig nc;
        nc.features = 8;
        nc.apply_variant(v);
        for (const Sample* s : std::vector<const Sample*>{&phantom_sample, &random_sample}) {
            worst = std::max(worst, zero_network_deviation(nc, *s));
            // each phase on its own, fed the zero-filled image
            const NetParams net = NetParams::zeros(nc);
            const ComplexTensor zf = idft2(s->f.f);
            for (std::size_t t = 1; t <= nc.phases; ++t) {
                const ComplexTensor out = nc.image_only ? phase_ablation(zf, s->f, s->mask, net, t, nc.alpha)
                                                        : phase_g(zf, s->f, s->mask, net, t).u_next;
                per_phase = per_phase && max_diff(out, zf) <= 1e-12 * max_abs(zf);
            }
        }
    }
    return {worst <= 1e-12 && per_phase, "6 variants x 2 consistent samples: max |u(t) - F^H f| / max|F^H f| = " +
                                             sci(worst) + " (round-off bound 1e-12)"};
}

Outcome criterion5() {
    const auto t0 = Clock::now();
    SimConfig sc;  // 32x32, c = 4, ratio 0.3156, sigma 0
    const Sample s = make_sample(sc, 1);
    NetConfig nc;
    nc.channels = 4;
    nc.phases = 4;
    nc.features = 32;
    NetParams init = NetParams::xavier(nc, 1);
    const LossWeights w{1e-3, 1e-4, 0.0};
    const double loss0 = sample_loss(init, s, LossKind::main, w);
    const std::vector<double> psnr0 = phase_psnr(init, s);

    TrainConfig tc;
    tc.loss = LossKind::main;
    tc.weights = w;
    tc.adam.lr = 1e-4;
    tc.adam.decay = 1.0;
    tc.batch = 1;
    tc.epochs = 2000;
    tc.shuffle = false;
    bool reached = false;
    tc.on_epoch = [&](const EpochRecord& rec, const NetParams& net) {
        if (rec.epoch % 5 != 0) return;
        const double l = sample_loss(net, s, LossKind::main, w);
        const double p = phase_psnr(net, s).back();
        reached = l < 0.1 * loss0 && p >= 35.0;
        if (rec.epoch % 50 == 0)
            std::printf("    step %4zu  loss %.4f  psnr(T) %.2f dB  %.0f s\n", rec.epoch, l, p, seconds_since(t0));
    };
    tc.stop = [&](const EpochRecord&) { return reached || seconds_since(t0) > 14.0 * 60.0; };
    const TrainResult res = train({s}, std::move(init), tc);

    const double loss1 = sample_loss(res.net, s, LossKind::main, w);
    const std::vector<double> psnr1 = phase_psnr(res.net, s);
    const double secs = seconds_since(t0);
    std::printf("    phase   initial   final (dB)\n");
    for (std::size_t t = 0; t < psnr1.size(); ++t) std::printf("    %5zu  %8.2f  %8.2f\n", t + 1, psnr0[t], psnr1[t]);
    const bool pass = res.steps <= 2000 && loss1 < 0.1 * loss0 && psnr1.back() >= 35.0 &&
                      psnr1.back() >= psnr1.front() && secs < 15 * 60.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%zu steps, loss %.4f -> %.4f (ratio %.4f < 0.1), PSNR(T) %.2f dB (>= 35), phase 1 %.2f <= phase "
                  "T, %.0f s",
                  res.steps, loss0, loss1, loss1 / loss0, psnr1.back(), psnr1.front(), secs);
    return {pass, buf};
}

Outcome criterion6() {
    NetConfig nc;
    nc.phases = 4;
    std::string detail;
    bool pass = nc.bank_count() == 2;
    for (std::size_t nf : {32, 64}) {
        nc.features = nf;
        const NetParams net = NetParams::zeros(nc);
        const std::size_t shared = net.scalar_count(), unshared = NetParams::unshared_scalar_count(nc);
        const double saving = 1.0 - double(shared) / double(unshared);
        pass = pass && net.banks.size() == 2 && saving >= 0.25;
        char buf[160];
        std::snprintf(buf, sizeof buf, "N_f=%zu: %zu vs %zu unshared (%.1f%% fewer); ", nf, shared, unshared,
                      100 * saving);
        detail += buf;
    }
    return {pass, detail + "banks = " + std::to_string(nc.bank_count())};
}

Outcome criterion7() {
    const fs::path out = fs::current_path() / "acceptance_ablation";
    fs::remove_all(out);
    AppConfig cfg;
    cfg.N_f = 32;
    cfg.seed = 1;
    cfg.decay = 1.0;
    cfg.ablate_steps = 10;
    std::ostringstream log;
    const int rc = cmd_ablate(cfg, {}, out, log);
    std::printf("%s", log.str().c_str());

    std::ifstream is(out / "ablation.csv");
    std::string line;
    std::getline(is, line);
    const std::size_t ncols = std::count(line.begin(), line.end(), ',') + 1;
    const bool header_ok = line.rfind("variant,params,fixed_point_dev,gradcheck_max_rel_err", 0) == 0;
    std::size_t rows = 0;
    bool rows_ok = true, each_ok = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != ncols) {
            rows_ok = false;
            continue;
        }
        const double dev = std::stod(f[2]), grad = std::stod(f[3]), costate = std::stod(f[4]);
        each_ok = each_ok && dev <= 1e-12 && grad < 1e-5 && costate < 1e-6 && f[5] == "1";
    }
    const bool pass = rc == kExitOk && header_ok && rows_ok && rows == cfg.variants.size() && each_ok;
    return {pass, std::to_string(rows) + " variant rows x " + std::to_string(ncols) +
                      " columns in " + (out / "ablation.csv").string() +
                      (each_ok ? ", each passes the gradient and fixed-point checks" : ", a variant failed a check")};
}

Outcome criterion8() {
    const SamplingMask mask = cartesian_mask(320, 320, 0.3156, default_acs_lines(320));
    std::size_t cols = 0;
    for (std::size_t x = 0; x < 320; ++x) cols += mask.sampled(0, x) ? 1 : 0;
    const bool pass = cols == 101 && std::abs(mask.ratio() - 0.3156) < 0.01 && mask.sampled_count() == 101 * 320;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu/320 lines, ratio %.6f (target 0.3156)", cols, mask.ratio());
    return {pass, buf};
}

Outcome criterion9() {
    const RealImage v = phantom(32, 32);
    const bool ssim_one = ssim(v, v) == 1.0 && ssim(v, v, {0.01, 0.03, SsimWindow::uniform, 7, 1.5}) == 1.0 &&
                          ssim(v, v, {0.01, 0.03, SsimWindow::global, 11, 1.5}) == 1.0;
    const bool rmse_zero = rmse_image(v, v) == 0.0;
    RealImage ref(2, 2, 0.5), rec(2, 2, 0.5);
    ref(0, 0) = 1.0;
    rec(0, 0) = 1.0;
    rec(1, 1) = 0.6;
    const double expected = 20.0 * std::log10(1.0 / std::sqrt(0.01 / 4.0));  // 26.0206 dB
    const double got = psnr(rec, ref);
    const bool psnr_ok = std::abs(got - expected) < 1e-6;
    char buf[160];
    std::snprintf(buf, sizeof buf, "ssim(v,v) = 1 %s, rmse(v*,v*) = 0 %s, psnr hand case %.6f dB (expected %.6f)",
                  ssim_one ? "yes" : "no", rmse_zero ? "yes" : "no", got, expected);
    return {ssim_one && rmse_zero && psnr_ok, buf};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
        {1, {"gradient certification", criterion1}}, {2, {"costate identity", criterion2}},
        {3, {"operator algebra", criterion3}},        {4, {"fixed-point physics", criterion4}},
        {5, {"overfit one sample", criterion5}},      {6, {"parameter sharing", criterion6}},
        {7, {"ablation harness", criterion7}},        {8, {"mask ratio", criterion8}},
        {9, {"metrics self-consistency", criterion9}}};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty())
        for (const auto& [k, _] : criteria) selected.push_back(k);

    int failed = 0;
    for (int k : selected) {
        const auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::printf("unknown criterion %d\n", k);
            return 1;
        }
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("CRITERION %d %s: %s -- %s\n", k, o.pass ? "PASS" : "FAIL", it->second.first, o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
