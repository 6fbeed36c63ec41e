#include "pmri/fft.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace pmri {

namespace {

constexpr std::size_t kMaxRadix = 31;

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> out;
    std::size_t p = 4;
    const auto root = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    do {
        while (n % p) {
            switch (p) {
                case 4: p = 2; break;
                case 2: p = 3; break;
                default: p += 2; break;
            }
            if (p > root) p = n;
        }
        n /= p;
        out.push_back(p);
        out.push_back(n);
    } while (n > 1);
    return out;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

template <class T>
FftPlan<T>::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) return;
    factors_ = factorize(n);
    for (std::size_t i = 0; i < factors_.size(); i += 2)
        if (factors_[i] > kMaxRadix) use_bluestein_ = true;

    if (!use_bluestein_) {
        twiddle_fwd_.resize(n);
        twiddle_inv_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle_fwd_[k] = value_type(static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase)));
            twiddle_inv_[k] = std::conj(twiddle_fwd_[k]);
        }
        return;
    }

    const std::size_t m = next_pow2(2 * n - 1);
    inner_ = std::make_unique<FftPlan>(m);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small for large k
        const std::size_t k2 = (k * k) % (2 * n);
        const double phase = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp_[k] = value_type(static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase)));
    }
    kernel_hat_.assign(m, value_type(0));
    kernel_hat_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
        kernel_hat_[k] = std::conj(chirp_[k]);
        kernel_hat_[m - k] = std::conj(chirp_[k]);
    }
    inner_->forward(kernel_hat_.data());
}

template <class T>
void FftPlan<T>::transform(value_type* data, bool inverse) const {
    if (n_ <= 1) return;
    if (use_bluestein_) {
        if (inverse) {
            for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
            bluestein(data);
            for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
        } else {
            bluestein(data);
        }
        return;
    }
    thread_local std::vector<value_type> scratch;
    scratch.assign(data, data + n_);
    work(data, scratch.data(), 1, factors_.data(), inverse);
}

template <class T>
void FftPlan<T>::work(value_type* out, const value_type* in, std::size_t fstride, const std::size_t* factors,
                      bool inverse) const {
    const std::size_t p = factors[0];
    const std::size_t m = factors[1];
    value_type* const begin = out;
    const value_type* const end = out + p * m;

    if (m == 1) {
        for (value_type* o = out; o != end; ++o, in += fstride) *o = *in;
    } else {
        for (value_type* o = out; o != end; o += m, in += fstride) work(o, in, fstride * p, factors + 2, inverse);
    }

    const auto& tw = inverse ? twiddle_inv_ : twiddle_fwd_;
    out = begin;
    if (p == 2) {
        for (std::size_t k = 0; k < m; ++k) {
            const value_type t = out[k + m] * tw[k * fstride];
            out[k + m] = out[k] - t;
            out[k] += t;
        }
    } else if (p == 4) {
        for (std::size_t k = 0; k < m; ++k) {
            value_type* f = out + k;
            const value_type s0 = f[m] * tw[k * fstride];
            const value_type s1 = f[2 * m] * tw[2 * k * fstride];
            const value_type s2 = f[3 * m] * tw[3 * k * fstride];
            const value_type s5 = f[0] - s1;
            const value_type f0 = f[0] + s1;
            const value_type s3 = s0 + s2;
            const value_type s4 = s0 - s2;
            f[2 * m] = f0 - s3;
            f[0] = f0 + s3;
            if (inverse) {
                f[m] = value_type(s5.real() - s4.imag(), s5.imag() + s4.real());
                f[3 * m] = value_type(s5.real() + s4.imag(), s5.imag() - s4.real());
            } else {
                f[m] = value_type(s5.real() + s4.imag(), s5.imag() - s4.real());
                f[3 * m] = value_type(s5.real() - s4.imag(), s5.imag() + s4.real());
            }
        }
    } else {
        value_type scratch[kMaxRadix];
        for (std::size_t u = 0; u < m; ++u) {
            for (std::size_t q = 0, k = u; q < p; ++q, k += m) scratch[q] = out[k];
            for (std::size_t q1 = 0, k = u; q1 < p; ++q1, k += m) {
                std::size_t twidx = 0;
                value_type acc = scratch[0];
                for (std::size_t q = 1; q < p; ++q) {
                    twidx += fstride * k;
                    if (twidx >= n_) twidx -= n_;
                    acc += scratch[q] * tw[twidx];
                }
                out[k] = acc;
            }
        }
    }
}

template <class T>
void FftPlan<T>::bluestein(value_type* data) const {
    const std::size_t m = inner_->size();
    thread_local std::vector<value_type> buf;
    buf.assign(m, value_type(0));
    for (std::size_t k = 0; k < n_; ++k) buf[k] = data[k] * chirp_[k];
    inner_->forward(buf.data());
    for (std::size_t k = 0; k < m; ++k) buf[k] *= kernel_hat_[k];
    inner_->inverse(buf.data());
    const T scale = T(1) / static_cast<T>(m);
    for (std::size_t k = 0; k < n_; ++k) data[k] = buf[k] * chirp_[k] * scale;
}

template <class T>
const FftPlan<T>& fft_plan(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<FftPlan<T>>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<FftPlan<T>>(n);
    return *slot;
}

namespace {

// Short lines go through a dense DFT matrix instead: one GEMM per axis covers
// every channel at once, which beats per-line recursion at these sizes.
constexpr std::size_t kDenseMax = 64;

template <class T>
using DenseMat = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
const DenseMat<T>& dft_matrix(std::size_t n, bool inverse) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, bool>, std::unique_ptr<DenseMat<T>>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{n, inverse}];
    if (!slot) {
        slot = std::make_unique<DenseMat<T>>(n, n);
        const double sign = inverse ? 2.0 : -2.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const double phase = sign * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
                (*slot)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                    std::complex<T>(static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase)));
            }
    }
    return *slot;
}

template <class T>
void dense_fft2(std::complex<T>* data, std::size_t rows, std::size_t cols, std::size_t channels, bool inverse) {
    using Map = Eigen::Map<DenseMat<T>>;
    const auto r = static_cast<Eigen::Index>(rows), c = static_cast<Eigen::Index>(cols),
               ch = static_cast<Eigen::Index>(channels);
    thread_local DenseMat<T> tmp;
    if (cols > 1) {
        const auto& f = dft_matrix<T>(cols, inverse);
        for (std::size_t y = 0; y < rows; ++y) {
            Map row(data + y * cols * channels, c, ch);
            tmp.noalias() = f * row;
            row = tmp;
        }
    }
    if (rows > 1) {
        const auto& f = dft_matrix<T>(rows, inverse);
        Map all(data, r, c * ch);
        tmp.noalias() = f * all;
        all = tmp;
    }
}

}  // namespace

template <class T>
void fft2_inplace(std::complex<T>* data, std::size_t rows, std::size_t cols, std::size_t channels, bool inverse) {
    if (rows <= kDenseMax && cols <= kDenseMax) {
        dense_fft2(data, rows, cols, channels, inverse);
        return;
    }
    const auto& row_plan = fft_plan<T>(cols);
    const auto& col_plan = fft_plan<T>(rows);
    thread_local std::vector<std::complex<T>> line;

    line.resize(cols);
    for (std::size_t y = 0; y < rows; ++y) {
        std::complex<T>* row = data + y * cols * channels;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t x = 0; x < cols; ++x) line[x] = row[x * channels + ch];
            inverse ? row_plan.inverse(line.data()) : row_plan.forward(line.data());
            for (std::size_t x = 0; x < cols; ++x) row[x * channels + ch] = line[x];
        }
    }
    line.resize(rows);
    const std::size_t ystride = cols * channels;
    for (std::size_t x = 0; x < cols; ++x) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            std::complex<T>* col = data + x * channels + ch;
            for (std::size_t y = 0; y < rows; ++y) line[y] = col[y * ystride];
            inverse ? col_plan.inverse(line.data()) : col_plan.forward(line.data());
            for (std::size_t y = 0; y < rows; ++y) col[y * ystride] = line[y];
        }
    }
}

template class FftPlan<double>;
template class FftPlan<float>;
template const FftPlan<double>& fft_plan<double>(std::size_t);
template const FftPlan<float>& fft_plan<float>(std::size_t);
template void fft2_inplace<double>(std::complex<double>*, std::size_t, std::size_t, std::size_t, bool);
template void fft2_inplace<float>(std::complex<float>*, std::size_t, std::size_t, std::size_t, bool);

}  // namespace pmri
