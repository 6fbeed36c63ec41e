#include "pmri/forward_model.hpp"

#include <string>

#include "pmri/ops.hpp"

namespace pmri {

SamplingMask::SamplingMask(RealImage mask) : mask_(std::move(mask)) {
    for (double v : mask_.data) {
        if (v != 0.0 && v != 1.0) throw ContractError("sampling mask entries must be 0 or 1, got " + std::to_string(v));
        if (v == 1.0) ++sampled_;
    }
    if (sampled_ == 0) throw ContractError("sampling mask has no sampled locations");
}

ComplexTensor SamplingMask::apply(const ComplexTensor& x) const { return mask_apply(x, mask_); }

void KSpaceData::check_consistent(const SamplingMask& mask) const {
    if (f.rank() != 3 || f.dim(0) != mask.rows() || f.dim(1) != mask.cols())
        throw ShapeError("k-space data " + shape_str(f.shape()) + " does not match mask " + std::to_string(mask.rows()) +
                         "x" + std::to_string(mask.cols()));
    const std::size_t c = f.dim(2);
    for (std::size_t p = 0; p < mask.image().size(); ++p) {
        if (mask.image().data[p] != 0.0) continue;
        for (std::size_t ch = 0; ch < c; ++ch)
            if (f[p * c + ch] != cplx(0.0))
                throw ContractError("k-space data is nonzero at an unsampled location (pixel " + std::to_string(p) + ")");
    }
}

namespace {
void check_pair(const ComplexTensor& u, const SamplingMask& mask, const char* what) {
    if (u.rank() != 3 || u.dim(0) != mask.rows() || u.dim(1) != mask.cols())
        throw ShapeError(std::string(what) + ": image " + shape_str(u.shape()) + " does not match mask " +
                         std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
}
}  // namespace

KSpaceData encode(const ComplexTensor& u, const SamplingMask& mask, Precision p) {
    check_pair(u, mask, "encode");
    return {mask.apply(dft2(u, p))};
}

ComplexTensor fidelity_residual(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask, Precision p) {
    check_pair(u, mask, "fidelity_residual");
    require_same_shape(u, f.f, "fidelity_residual");
    ComplexTensor k = dft2(u, p);
    k -= f.f;
    return idft2(mask.apply(k), p);
}

ComplexTensor fidelity_grad_step(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask, double rho,
                                 Precision p, bool allow_zero_step) {
    if (!(rho > 0.0) && !(allow_zero_step && rho == 0.0))
        throw ContractError("fidelity_grad_step: step size must be positive, got " + std::to_string(rho));
    ComplexTensor b = u;
    b.axpy(-rho, fidelity_residual(u, f, mask, p));
    quantize(b, p);
    return b;
}

ComplexTensor normal_operator(const ComplexTensor& g, const SamplingMask& mask, Precision p) {
    check_pair(g, mask, "normal_operator");
    return idft2(mask.apply(dft2(g, p)), p);
}

}  // namespace pmri
