#include "pmri/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace pmri {

namespace {

void same_extent(const RealImage& a, const RealImage& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw ShapeError(std::string(what) + ": images differ in size (" + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
}

double peak(const RealImage& v) {
    double m = 0;
    for (double x : v.data) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> window_weights(const SsimOptions& opt) {
    const std::size_t k = opt.size;
    std::vector<double> w(k * k, 1.0);
    if (opt.window == SsimWindow::gaussian) {
        const double r = double(k / 2);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double dy = double(i) - r, dx = double(j) - r;
                w[i * k + j] = std::exp(-(dx * dx + dy * dy) / (2 * opt.sigma * opt.sigma));
            }
    }
    double total = 0;
    for (double x : w) total += x;
    for (double& x : w) x /= total;
    return w;
}

}  // namespace

double psnr(const RealImage& v, const RealImage& v_star) {
    same_extent(v, v_star, "psnr");
    const double top = peak(v_star);
    if (top == 0.0) throw ContractError("psnr: reference image is all zero");
    double sse = 0;
    for (std::size_t i = 0; i < v.size(); ++i) sse += (v_star.data[i] - v.data[i]) * (v_star.data[i] - v.data[i]);
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(top / std::sqrt(sse / double(v.size())));
}

double psnr_for_csv(double db) { return std::isinf(db) && db > 0 ? kPsnrCap : std::min(db, kPsnrCap); }

double ssim(const RealImage& v, const RealImage& v_star, const SsimOptions& opt) {
    same_extent(v, v_star, "ssim");
    double L = peak(v_star);
    if (L == 0.0) L = 1.0;
    const double C1 = (opt.k1 * L) * (opt.k1 * L), C2 = (opt.k2 * L) * (opt.k2 * L);
    auto index = [&](double mx, double my, double sxx, double syy, double sxy) {
        return ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx * mx + my * my + C1) * (sxx + syy + C2));
    };

    if (opt.window == SsimWindow::global) {
        const double N = double(v.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            mx += v.data[i];
            my += v_star.data[i];
        }
        mx /= N;
        my /= N;
        double sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double a = v.data[i] - mx, b = v_star.data[i] - my;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
        return index(mx, my, sxx / N, syy / N, sxy / N);
    }

    const std::size_t k = opt.size;
    if (k == 0 || k % 2 == 0) throw ContractError("ssim: window size must be odd");
    if (v.rows < k || v.cols < k)
        throw ContractError("ssim: image " + std::to_string(v.rows) + "x" + std::to_string(v.cols) +
                            " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
    const auto w = window_weights(opt);
    double acc = 0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + k <= v.rows; ++y)
        for (std::size_t x = 0; x + k <= v.cols; ++x) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    const double wt = w[i * k + j];
                    const double a = v(y + i, x + j), b = v_star(y + i, x + j);
                    mx += wt * a;
                    my += wt * b;
                    xx += wt * a * a;
                    yy += wt * b * b;
                    xy += wt * a * b;
                }
            acc += index(mx, my, xx - mx * mx, yy - my * my, xy - mx * my);
            ++count;
        }
    return acc / double(count);
}

double rmse_image(const RealImage& v, const RealImage& v_star) {
    same_extent(v, v_star, "rmse_image");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += (v_star.data[i] - v.data[i]) * (v_star.data[i] - v.data[i]);
        den += v_star.data[i] * v_star.data[i];
    }
    if (den == 0.0) throw ContractError("rmse_image: reference image is all zero");
    return std::sqrt(num / den);
}

double rmse_multicoil(const ComplexTensor& u, const ComplexTensor& u_star) {
    require_same_shape(u, u_star, "rmse_multicoil");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        num += std::norm(u_star[i] - u[i]);
        den += std::norm(u_star[i]);
    }
    if (den == 0.0) throw ContractError("rmse_multicoil: reference is all zero");
    return std::sqrt(num / den);
}

}  // namespace pmri
