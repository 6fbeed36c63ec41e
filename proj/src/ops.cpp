#include "pmri/ops.hpp"

#include <cmath>
#include <string>

#include "pmri/fft.hpp"

namespace pmri {

ConvKernel ConvKernel::zeros(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout) {
    ConvKernel k{ComplexTensor({kh, kw, cin, cout}), ComplexTensor({cout})};
    k.validate();
    return k;
}

ConvKernel ConvKernel::identity(std::size_t ksize, std::size_t channels) {
    ConvKernel k = zeros(ksize, ksize, channels, channels);
    const std::size_t c = ksize / 2;
    for (std::size_t i = 0; i < channels; ++i) k.weights[((c * ksize + c) * channels + i) * channels + i] = 1.0;
    return k;
}

void ConvKernel::validate() const {
    if (weights.rank() != 4) throw ShapeError("kernel weights must be rank 4, got " + shape_str(weights.shape()));
    if (kh() % 2 == 0 || kw() % 2 == 0)
        throw ShapeError("kernel extents must be odd, got " + shape_str(weights.shape()));
    if (bias.rank() != 1 || bias.dim(0) != cout())
        throw ShapeError("bias shape " + shape_str(bias.shape()) + " does not match c_out " + std::to_string(cout()));
}

namespace {

void check_image_rank(const ComplexTensor& x, const char* what) {
    if (x.rank() < 2) throw ShapeError(std::string(what) + ": need at least 2 spatial dims, got " + shape_str(x.shape()));
    if (x.rank() > 3) throw ShapeError(std::string(what) + ": expected (m, n) or (m, n, c), got " + shape_str(x.shape()));
    if (x.dim(0) == 0 || x.dim(1) == 0) throw ShapeError(std::string(what) + ": empty spatial extent");
}

template <class T>
ComplexTensor unitary_dft(const ComplexTensor& x, bool inverse) {
    const std::size_t m = x.dim(0), n = x.dim(1);
    const std::size_t c = x.rank() == 3 ? x.dim(2) : 1;
    std::vector<std::complex<T>> buf(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = std::complex<T>(static_cast<T>(x[i].real()), static_cast<T>(x[i].imag()));
    fft2_inplace<T>(buf.data(), m, n, c, inverse);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m * n));
    ComplexTensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = cplx(static_cast<double>(buf[i].real()), static_cast<double>(buf[i].imag())) * scale;
    return out;
}

}  // namespace

ComplexTensor dft2(const ComplexTensor& x, Precision p) {
    check_image_rank(x, "dft2");
    if (p == Precision::f32) {
        auto out = unitary_dft<float>(x, false);
        quantize(out, p);
        return out;
    }
    return unitary_dft<double>(x, false);
}

ComplexTensor idft2(const ComplexTensor& y, Precision p) {
    check_image_rank(y, "idft2");
    if (p == Precision::f32) {
        auto out = unitary_dft<float>(y, true);
        quantize(out, p);
        return out;
    }
    return unitary_dft<double>(y, true);
}

ComplexTensor crelu(const ComplexTensor& x) {
    ComplexTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = cplx(x[i].real() > 0 ? x[i].real() : 0.0, x[i].imag() > 0 ? x[i].imag() : 0.0);
    return out;
}

ComplexTensor crelu_vjp(const ComplexTensor& x, const ComplexTensor& g) {
    require_same_shape(x, g, "crelu_vjp");
    ComplexTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = cplx(x[i].real() > 0 ? g[i].real() : 0.0, x[i].imag() > 0 ? g[i].imag() : 0.0);
    return out;
}

namespace {
double shrink(double t, double alpha) {
    if (t > alpha) return t - alpha;
    if (t < -alpha) return t + alpha;
    return 0.0;
}
void check_alpha(double alpha) {
    if (!(alpha >= 0.0)) throw ContractError("soft_shrink: threshold must be nonnegative, got " + std::to_string(alpha));
}
}  // namespace

ComplexTensor soft_shrink(const ComplexTensor& x, double alpha) {
    check_alpha(alpha);
    if (alpha == 0.0) return x;
    ComplexTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = cplx(shrink(x[i].real(), alpha), shrink(x[i].imag(), alpha));
    return out;
}

ComplexTensor soft_shrink_vjp(const ComplexTensor& x, double alpha, const ComplexTensor& g) {
    check_alpha(alpha);
    require_same_shape(x, g, "soft_shrink_vjp");
    if (alpha == 0.0) return g;
    ComplexTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = cplx(std::abs(x[i].real()) > alpha ? g[i].real() : 0.0, std::abs(x[i].imag()) > alpha ? g[i].imag() : 0.0);
    return out;
}

ComplexTensor mask_apply(const ComplexTensor& x, const RealImage& mask) {
    check_image_rank(x, "mask_apply");
    if (x.dim(0) != mask.rows || x.dim(1) != mask.cols)
        throw ShapeError("mask_apply: mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                         " does not match " + shape_str(x.shape()));
    const std::size_t c = x.rank() == 3 ? x.dim(2) : 1;
    ComplexTensor out(x.shape());
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask.data[p] == 0.0) continue;
        for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = x[p * c + ch];
    }
    return out;
}

std::vector<ComplexTensor> vjp(std::string_view primitive, std::span<const ComplexTensor> inputs,
                               const ComplexTensor& cotangent, const PrimitiveArgs& args) {
    auto need = [&](std::size_t count) {
        if (inputs.size() != count)
            throw ContractError("vjp(" + std::string(primitive) + "): expected " + std::to_string(count) +
                                " inputs, got " + std::to_string(inputs.size()));
    };
    if (primitive == "dft2") {
        need(1);
        return {idft2(cotangent, args.precision)};
    }
    if (primitive == "idft2") {
        need(1);
        return {dft2(cotangent, args.precision)};
    }
    if (primitive == "cconv2d") {
        need(3);
        ConvKernel k{inputs[1], inputs[2]};
        auto g = cconv2d_vjp(inputs[0], k, cotangent, args.precision, true);
        return {std::move(g.input), std::move(g.kernel.weights), std::move(g.kernel.bias)};
    }
    if (primitive == "crelu") {
        need(1);
        return {crelu_vjp(inputs[0], cotangent)};
    }
    if (primitive == "soft_shrink") {
        need(1);
        return {soft_shrink_vjp(inputs[0], args.alpha, cotangent)};
    }
    if (primitive == "add") {
        need(2);
        require_same_shape(inputs[0], inputs[1], "vjp(add)");
        return {cotangent, cotangent};
    }
    if (primitive == "scale") {
        need(1);
        return {args.scale * cotangent};
    }
    if (primitive == "mask") {
        need(1);
        if (!args.mask) throw ContractError("vjp(mask): no mask supplied");
        return {mask_apply(cotangent, *args.mask)};
    }
    throw ContractError("vjp: unknown primitive '" + std::string(primitive) + "'");
}

}  // namespace pmri
