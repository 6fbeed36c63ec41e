#include "pmri/data_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pmri/io.hpp"
#include "pmri/ops.hpp"

namespace pmri {

void Sample::validate() const {
    if (f.f.rank() != 3) throw ShapeError("sample: k-space must be (m, n, c), got " + shape_str(f.f.shape()));
    f.check_consistent(mask);
    if (!has_u() && !has_v()) throw ContractError("sample: needs u_star or v_star");
    if (has_u() && u_star.shape() != f.f.shape())
        throw ShapeError("sample: u_star " + shape_str(u_star.shape()) + " does not match k-space " +
                         shape_str(f.f.shape()));
    if (has_v() && (v_star.rows != rows() || v_star.cols != cols()))
        throw ShapeError("sample: v_star extent does not match the mask");
}

namespace {

struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
};

// Toft's modified Shepp-Logan table
constexpr Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},         {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},     {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
    {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},        {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},      {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},    {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
};

// pixel centres on [-1, 1], y pointing up
double coord_x(std::size_t j, std::size_t n) { return (2.0 * double(j) + 1.0) / double(n) - 1.0; }
double coord_y(std::size_t i, std::size_t m) { return 1.0 - (2.0 * double(i) + 1.0) / double(m); }

}  // namespace

RealImage phantom(std::size_t m, std::size_t n) {
    if (m < 8 || n < 8) throw ContractError("phantom: extents must be at least 8x8");
    RealImage img(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = coord_x(j, n), y = coord_y(i, m);
            double v = 0;
            for (const auto& e : kSheppLogan) {
                const double phi = e.phi_deg * std::numbers::pi / 180.0;
                const double dx = x - e.x0, dy = y - e.y0;
                const double xr = dx * std::cos(phi) + dy * std::sin(phi);
                const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
                if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
            }
            img(i, j) = std::clamp(v, 0.0, 1.0);
        }
    return img;
}

SensitivitySet coil_sensitivities(std::size_t m, std::size_t n, std::size_t c, std::uint64_t seed) {
    if (c == 0) throw ContractError("coil_sensitivities: need at least one coil");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> slope(-std::numbers::pi / 2, std::numbers::pi / 2);
    std::uniform_real_distribution<double> offset(-std::numbers::pi, std::numbers::pi);
    struct Coil {
        double cx, cy, kx, ky, phase0;
    };
    std::vector<Coil> coils(c);
    for (std::size_t i = 0; i < c; ++i) {
        const double ang = 2.0 * std::numbers::pi * double(i) / double(c);
        coils[i] = {0.7 * std::cos(ang), 0.7 * std::sin(ang), slope(rng), slope(rng), offset(rng)};
    }
    const double width = 0.6;
    SensitivitySet out{ComplexTensor({m, n, c})};
    for (std::size_t y = 0; y < m; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double px = coord_x(x, n), py = coord_y(y, m);
            double total = 0;
            for (std::size_t i = 0; i < c; ++i) {
                const auto& k = coils[i];
                const double d2 = (px - k.cx) * (px - k.cx) + (py - k.cy) * (py - k.cy);
                const double mag = std::exp(-d2 / (2 * width * width));
                out.s(y, x, i) = std::polar(mag, k.kx * px + k.ky * py + k.phase0);
                total += mag * mag;
            }
            const double inv = 1.0 / std::sqrt(total);
            for (std::size_t i = 0; i < c; ++i) out.s(y, x, i) *= inv;
        }
    return out;
}

ComplexTensor make_coil_images(const RealImage& v_star, const SensitivitySet& s) {
    if (s.s.rank() != 3 || s.s.dim(0) != v_star.rows || s.s.dim(1) != v_star.cols)
        throw ShapeError("make_coil_images: sensitivities " + shape_str(s.s.shape()) + " do not match image " +
                         std::to_string(v_star.rows) + "x" + std::to_string(v_star.cols));
    const std::size_t c = s.s.dim(2);
    ComplexTensor u(s.s.shape());
    for (std::size_t p = 0; p < v_star.size(); ++p)
        for (std::size_t i = 0; i < c; ++i) u[p * c + i] = s.s[p * c + i] * v_star.data[p];
    return u;
}

std::size_t default_acs_lines(std::size_t extent) {
    return static_cast<std::size_t>(std::lround(24.0 * double(extent) / 320.0));
}

SamplingMask cartesian_mask(std::size_t m, std::size_t n, double target_ratio, std::size_t acs_lines,
                            LineOrientation orientation) {
    if (m == 0 || n == 0) throw ContractError("cartesian_mask: empty extent");
    if (!(target_ratio > 0.0 && target_ratio <= 1.0))
        throw ContractError("cartesian_mask: ratio must lie in (0, 1], got " + std::to_string(target_ratio));
    const std::size_t lines = orientation == LineOrientation::columns ? n : m;
    std::size_t total = static_cast<std::size_t>(std::lround(target_ratio * double(lines)));
    total = std::clamp<std::size_t>(total, 1, lines);
    if (target_ratio < 1.0 && double(acs_lines) >= target_ratio * double(lines))
        throw ContractError("cartesian_mask: " + std::to_string(acs_lines) + " ACS lines exceed the " +
                            std::to_string(target_ratio) + " sampling budget");

    std::vector<bool> keep(lines, false);
    const std::size_t acs = std::min(acs_lines, total);
    const std::size_t acs_start = lines / 2 - acs / 2;
    for (std::size_t i = 0; i < acs; ++i) keep[acs_start + i] = true;

    // spread the remaining budget over the unsampled lines with a fractional stride
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < lines; ++i)
        if (!keep[i]) rest.push_back(i);
    const std::size_t extra = total - acs;
    if (extra > 0) {
        const double stride = double(rest.size()) / double(extra);
        for (std::size_t j = 0; j < extra; ++j) {
            const auto idx = static_cast<std::size_t>(std::floor((double(j) + 0.5) * stride));
            keep[rest[std::min(idx, rest.size() - 1)]] = true;
        }
    }

    RealImage img(m, n);
    for (std::size_t y = 0; y < m; ++y)
        for (std::size_t x = 0; x < n; ++x)
            img(y, x) = keep[orientation == LineOrientation::columns ? x : y] ? 1.0 : 0.0;
    return SamplingMask(std::move(img));
}

KSpaceData simulate_acquisition(const ComplexTensor& u_star, const SamplingMask& mask, double sigma,
                                std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ContractError("simulate_acquisition: noise level must be nonnegative");
    if (u_star.rank() != 3 || u_star.dim(0) != mask.rows() || u_star.dim(1) != mask.cols())
        throw ShapeError("simulate_acquisition: image " + shape_str(u_star.shape()) + " does not match mask");
    ComplexTensor k = dft2(u_star);
    if (sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& v : k.values()) {
            const double re = noise(rng);
            const double im = noise(rng);
            v += cplx(re, im);
        }
    }
    return {mask.apply(k)};
}

Sample make_sample(const SimConfig& cfg, std::uint64_t seed) {
    Sample s;
    s.seed = seed;
    s.sigma = cfg.sigma;
    s.v_star = phantom(cfg.m, cfg.n);
    s.u_star = make_coil_images(s.v_star, coil_sensitivities(cfg.m, cfg.n, cfg.c, seed));
    const std::size_t extent = cfg.orientation == LineOrientation::columns ? cfg.n : cfg.m;
    s.mask = cartesian_mask(cfg.m, cfg.n, cfg.ratio, cfg.acs_lines.value_or(default_acs_lines(extent)),
                            cfg.orientation);
    // noise stream decorrelated from the coil-map stream
    s.f = simulate_acquisition(s.u_star, s.mask, cfg.sigma, seed ^ 0x9E3779B97F4A7C15ULL);
    return s;
}

namespace {
std::string exact(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace

void save_sample(const Sample& s, const std::filesystem::path& dir) {
    s.validate();
    std::filesystem::create_directories(dir);
    KeyValueFile meta;
    meta.set("version", "1");
    meta.set("m", std::to_string(s.rows()));
    meta.set("n", std::to_string(s.cols()));
    meta.set("c", std::to_string(s.coils()));
    meta.set("ratio", exact(s.mask.ratio()));
    meta.set("sigma", exact(s.sigma));
    meta.set("seed", std::to_string(s.seed));
    save_ctns(dir / "f.ctns", s.f.f);
    save_ctns(dir / "mask.ctns", to_tensor(s.mask.image()));
    if (s.has_u()) save_ctns(dir / "u_star.ctns", s.u_star);
    if (s.has_v()) save_ctns(dir / "v_star.ctns", to_tensor(s.v_star));
    meta.save(dir / "meta", "pmri sample");
}

Sample load_sample(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta";
    if (!std::filesystem::exists(meta_path)) throw FormatError("missing sample file " + meta_path.string());
    const auto meta = KeyValueFile::load(meta_path);
    if (meta.get("version") != "1")
        throw FormatError(meta_path.string() + ": unsupported sample version '" + meta.get("version") + "'");
    auto need = [&](const char* name) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) throw FormatError("missing sample file " + p.string());
        return load_ctns(p);
    };
    Sample s;
    s.seed = meta.get_size("seed");
    s.sigma = meta.get_double("sigma");
    s.f.f = need("f.ctns");
    try {
        s.mask = SamplingMask(real_part(need("mask.ctns")));
    } catch (const ContractError& e) {
        throw FormatError((dir / "mask.ctns").string() + ": " + e.what());
    }
    if (std::filesystem::exists(dir / "u_star.ctns")) s.u_star = load_ctns(dir / "u_star.ctns");
    if (std::filesystem::exists(dir / "v_star.ctns")) s.v_star = real_part(load_ctns(dir / "v_star.ctns"));
    if (s.f.f.rank() != 3 || s.rows() != meta.get_size("m") || s.cols() != meta.get_size("n") ||
        s.coils() != meta.get_size("c"))
        throw FormatError(meta_path.string() + ": extents disagree with f.ctns " + shape_str(s.f.f.shape()));
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw FormatError(dir.string() + ": " + e.what());
    }
    return s;
}

std::vector<std::filesystem::path> list_samples(const std::filesystem::path& dataset) {
    if (!std::filesystem::is_directory(dataset)) throw FormatError("dataset directory not found: " + dataset.string());
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dataset))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta")) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace pmri
