#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "pmri/forward_model.hpp"
#include "pmri/tensor.hpp"

namespace pmri {

/// One training pair. u_star and v_star are empty when absent.
struct Sample {
    KSpaceData f;
    SamplingMask mask;
    ComplexTensor u_star;  // (m, n, c)
    RealImage v_star;      // m x n
    std::uint64_t seed = 0;
    double sigma = 0.0;

    bool has_u() const { return !u_star.empty(); }
    bool has_v() const { return !v_star.data.empty(); }
    std::size_t rows() const { return mask.rows(); }
    std::size_t cols() const { return mask.cols(); }
    std::size_t coils() const { return f.f.dim(2); }

    /// Throws ContractError/ShapeError on inconsistent fields.
    void validate() const;
    bool operator==(const Sample&) const = default;
};

/// Modified Shepp-Logan head phantom on [-1, 1]^2, values clamped to [0, 1].
RealImage phantom(std::size_t m, std::size_t n);

/// Smooth complex coil profiles with sum_i |s_i|^2 = 1 at every pixel.
struct SensitivitySet {
    ComplexTensor s;  // (m, n, c)
};
SensitivitySet coil_sensitivities(std::size_t m, std::size_t n, std::size_t c, std::uint64_t seed);

/// u_i = s_i * v.
ComplexTensor make_coil_images(const RealImage& v_star, const SensitivitySet& s);

enum class LineOrientation { columns, rows };

/// Centred ACS block of lines plus evenly spread outer lines, the total being
/// round(target_ratio * n) lines. Every position along a sampled line is kept.
SamplingMask cartesian_mask(std::size_t m, std::size_t n, double target_ratio, std::size_t acs_lines,
                            LineOrientation orientation = LineOrientation::columns);

/// 24 ACS lines at 320, scaled with the phase-encode extent.
std::size_t default_acs_lines(std::size_t extent);

/// f = P * (dft2(u) + noise), noise N(0, sigma^2) per real and imaginary part.
KSpaceData simulate_acquisition(const ComplexTensor& u_star, const SamplingMask& mask, double sigma,
                                std::uint64_t seed);

struct SimConfig {
    std::size_t m = 32, n = 32, c = 4;
    double ratio = 0.3156;
    std::optional<std::size_t> acs_lines;  // default_acs_lines when unset
    double sigma = 0.0;
    LineOrientation orientation = LineOrientation::columns;
};

/// Phantom, coil maps seeded by `seed`, mask, acquisition.
Sample make_sample(const SimConfig& cfg, std::uint64_t seed);

/// Directory with `meta` plus f.ctns, mask.ctns and whichever of
/// u_star.ctns / v_star.ctns are present.
void save_sample(const Sample& s, const std::filesystem::path& dir);
Sample load_sample(const std::filesystem::path& dir);

/// Every subdirectory containing a `meta` file, sorted by name.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& dataset);

}  // namespace pmri
