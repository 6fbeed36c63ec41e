#pragma once

#include <limits>

#include "pmri/tensor.hpp"

namespace pmri {

/// Written in place of +inf when a reconstruction is exact.
inline constexpr double kPsnrCap = 99.99;

/// 20 log10(max|v*| / sqrt(mean (v* - v)^2)); +inf when identical.
double psnr(const RealImage& v, const RealImage& v_star);

enum class SsimWindow { gaussian, uniform, global };

struct SsimOptions {
    double k1 = 0.01;
    double k2 = 0.03;
    SsimWindow window = SsimWindow::gaussian;
    std::size_t size = 11;
    double sigma = 1.5;
};

/// Mean SSIM over all fully contained windows, L = max|v*|.
double ssim(const RealImage& v, const RealImage& v_star, const SsimOptions& opt = {});

/// ||v* - v|| / ||v*||.
double rmse_image(const RealImage& v, const RealImage& v_star);
/// sqrt(sum_i ||u*_i - u_i||^2 / sum_i ||u*_i||^2).
double rmse_multicoil(const ComplexTensor& u, const ComplexTensor& u_star);

struct MetricReport {
    double psnr = 0;
    double ssim = 0;
    double rmse_image = 0;
    double rmse_multicoil = std::numeric_limits<double>::quiet_NaN();  // NaN without a multi-coil reference
};

/// PSNR capped at kPsnrCap for printing.
double psnr_for_csv(double db);

}  // namespace pmri
