#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace pmri {

/// One-dimensional complex FFT of fixed length, unnormalized in both
/// directions. Lengths with only small prime factors use a mixed-radix
/// Cooley-Tukey recursion; anything with a prime factor above 31 goes through
/// Bluestein's chirp-z algorithm on a power-of-two grid.
template <class T>
class FftPlan {
public:
    using value_type = std::complex<T>;

    explicit FftPlan(std::size_t n);

    std::size_t size() const noexcept { return n_; }

    /// X[k] = sum_j x[j] exp(-2 pi i jk / n), in place.
    void forward(value_type* data) const { transform(data, false); }
    /// x[j] = sum_k X[k] exp(+2 pi i jk / n), in place (no 1/n).
    void inverse(value_type* data) const { transform(data, true); }

private:
    void transform(value_type* data, bool inverse) const;
    void work(value_type* out, const value_type* in, std::size_t fstride, const std::size_t* factors,
              bool inverse) const;
    void bluestein(value_type* data) const;

    std::size_t n_ = 0;
    std::vector<std::size_t> factors_;  // (radix, remaining length) pairs
    std::vector<value_type> twiddle_fwd_;
    std::vector<value_type> twiddle_inv_;

    // Bluestein state
    bool use_bluestein_ = false;
    std::vector<value_type> chirp_;     // exp(-i pi k^2 / n)
    std::vector<value_type> kernel_hat_;
    std::unique_ptr<FftPlan> inner_;
};

/// Shared, lazily built plan for length n. Thread-safe.
template <class T>
const FftPlan<T>& fft_plan(std::size_t n);

/// In-place 2-D transform of a rows x cols x channels array (channel fastest),
/// applied independently per channel. Unnormalized.
template <class T>
void fft2_inplace(std::complex<T>* data, std::size_t rows, std::size_t cols, std::size_t channels, bool inverse);

extern template class FftPlan<double>;
extern template class FftPlan<float>;

}  // namespace pmri
