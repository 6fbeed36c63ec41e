#pragma once

#include "pmri/tensor.hpp"

namespace pmri {

/// Binary k-space sampling pattern, m x n, shared by all coils.
class SamplingMask {
public:
    SamplingMask() = default;
    /// Throws ContractError unless every entry is 0 or 1 and at least one is 1.
    explicit SamplingMask(RealImage mask);

    static SamplingMask full(std::size_t m, std::size_t n) { return SamplingMask(RealImage(m, n, 1.0)); }

    const RealImage& image() const noexcept { return mask_; }
    std::size_t rows() const noexcept { return mask_.rows; }
    std::size_t cols() const noexcept { return mask_.cols; }
    std::size_t sampled_count() const noexcept { return sampled_; }
    double ratio() const noexcept { return static_cast<double>(sampled_) / static_cast<double>(mask_.size()); }
    bool sampled(std::size_t y, std::size_t x) const noexcept { return mask_(y, x) != 0.0; }

    ComplexTensor apply(const ComplexTensor& x) const;

    bool operator==(const SamplingMask&) const = default;

private:
    RealImage mask_;
    std::size_t sampled_ = 0;
};

/// Multi-coil k-space measurement stored densely: (m, n, c) with exact zeros
/// at unsampled locations.
struct KSpaceData {
    ComplexTensor f;

    /// Throws ContractError if f is nonzero anywhere the mask is 0.
    void check_consistent(const SamplingMask& mask) const;
    bool operator==(const KSpaceData&) const = default;
};

/// mask * dft2(u), per coil.
KSpaceData encode(const ComplexTensor& u, const SamplingMask& mask, Precision p = Precision::f64);

/// Data-fidelity residual idft2(mask * (dft2(u) - f)), the gradient of
/// 1/2 sum_i ||P F u_i - f_i||^2.
ComplexTensor fidelity_residual(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask,
                                Precision p = Precision::f64);

/// One gradient step on the data-fidelity term: u - rho * fidelity_residual.
/// rho must be positive unless allow_zero_step is set (tests only).
ComplexTensor fidelity_grad_step(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask, double rho,
                                 Precision p = Precision::f64, bool allow_zero_step = false);

/// The operator F^H P F applied to g; self-adjoint, so it is also its own VJP.
ComplexTensor normal_operator(const ComplexTensor& g, const SamplingMask& mask, Precision p = Precision::f64);

}  // namespace pmri
