#pragma once

#include <cmath>
#include <random>

#include "pmri/tensor.hpp"

namespace testutil {

inline pmri::ComplexTensor random_tensor(pmri::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    pmri::ComplexTensor t(std::move(shape));
    for (auto& v : t.values()) v = {d(rng), d(rng)};
    return t;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

inline double max_diff(const pmri::ComplexTensor& a, const pmri::ComplexTensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// O(N^2) unitary DFT over the two leading axes, used as an oracle.
inline pmri::ComplexTensor naive_dft2(const pmri::ComplexTensor& x, bool inverse) {
    const std::size_t m = x.dim(0), n = x.dim(1), c = x.rank() == 3 ? x.dim(2) : 1;
    pmri::ComplexTensor out(x.shape());
    const double sgn = inverse ? 1.0 : -1.0;
    const double scale = 1.0 / std::sqrt(double(m * n));
    for (std::size_t ky = 0; ky < m; ++ky)
        for (std::size_t kx = 0; kx < n; ++kx)
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::complex<long double> acc = 0;
                for (std::size_t y = 0; y < m; ++y)
                    for (std::size_t xx = 0; xx < n; ++xx) {
                        const long double ph = sgn * 2.0L * 3.14159265358979323846264338327950288L *
                                               ((long double)((ky * y) % m) / m + (long double)((kx * xx) % n) / n);
                        const auto v = x[(y * n + xx) * c + ch];
                        acc += std::complex<long double>(v.real(), v.imag()) *
                               std::complex<long double>(std::cos(ph), std::sin(ph));
                    }
                out[(ky * n + kx) * c + ch] = {double(acc.real() * scale), double(acc.imag() * scale)};
            }
    return out;
}

}  // namespace testutil
