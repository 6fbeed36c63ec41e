#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pmri/tensor.hpp"

namespace pmri {

/// Complex convolution kernel: weights kh x kw x c_in x c_out, bias c_out.
struct ConvKernel {
    ComplexTensor weights;
    ComplexTensor bias;

    static ConvKernel zeros(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout);
    /// kh x kw kernel that passes channel i to channel i through the centre tap.
    static ConvKernel identity(std::size_t k, std::size_t channels);

    std::size_t kh() const { return weights.dim(0); }
    std::size_t kw() const { return weights.dim(1); }
    std::size_t cin() const { return weights.dim(2); }
    std::size_t cout() const { return weights.dim(3); }

    /// Throws ShapeError unless weights are rank 4 with odd spatial extents
    /// and the bias length matches c_out.
    void validate() const;

    bool operator==(const ConvKernel&) const = default;
};

/// Unitary 2-D DFT over the two leading axes, independently per channel.
/// Accepts (m, n) or (m, n, c).
ComplexTensor dft2(const ComplexTensor& x, Precision p = Precision::f64);
/// Inverse (and Hermitian adjoint) of dft2.
ComplexTensor idft2(const ComplexTensor& y, Precision p = Precision::f64);

enum class ConvPath {
    automatic,  // spectral for kernels with at least 25 taps, direct otherwise
    direct,     // im2col + GEMM
    spectral,   // zero-padded FFT products
};

/// Complex cross-correlation with zero "same" padding, stride 1, plus bias.
/// x is (m, n, c_in); the result is (m, n, c_out).
ComplexTensor cconv2d(const ComplexTensor& x, const ConvKernel& k, Precision p = Precision::f64,
                      ConvPath path = ConvPath::automatic);

struct ConvGrads {
    ComplexTensor input;  // empty when not requested
    ConvKernel kernel;
};

/// Cotangents of cconv2d w.r.t. input, weights and bias given the output
/// cotangent g, in the real-pair convention.
ConvGrads cconv2d_vjp(const ComplexTensor& x, const ConvKernel& k, const ComplexTensor& g,
                      Precision p = Precision::f64, bool need_input = true, ConvPath path = ConvPath::automatic);

/// ReLU on real and imaginary parts independently.
ComplexTensor crelu(const ComplexTensor& x);
ComplexTensor crelu_vjp(const ComplexTensor& x, const ComplexTensor& g);

/// sign(t) max(|t| - alpha, 0) on real and imaginary parts independently.
ComplexTensor soft_shrink(const ComplexTensor& x, double alpha);
ComplexTensor soft_shrink_vjp(const ComplexTensor& x, double alpha, const ComplexTensor& g);

/// Zeroes every sample whose (row, col) is unsampled; broadcast over channels.
/// The mask must be 0/1 valued.
ComplexTensor mask_apply(const ComplexTensor& x, const RealImage& mask);

/// Extra, non-differentiated arguments for the name-dispatched vjp.
struct PrimitiveArgs {
    double alpha = 0.0;              // soft_shrink threshold
    double scale = 1.0;              // "scale"
    const RealImage* mask = nullptr; // "mask"
    Precision precision = Precision::f64;
};

/// Vector-Jacobian product of a named primitive. Known names: dft2, idft2,
/// cconv2d (inputs x, weights, bias), crelu, soft_shrink, add (two inputs),
/// scale, mask. Returns one cotangent per input. Unknown names raise
/// ContractError.
std::vector<ComplexTensor> vjp(std::string_view primitive, std::span<const ComplexTensor> inputs,
                               const ComplexTensor& cotangent, const PrimitiveArgs& args = {});

}  // namespace pmri
