#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmri {

using cplx = std::complex<double>;

/// Raised when tensor extents do not fit an operation.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when an argument violates an operation's precondition.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised by readers of on-disk formats (CTNS, manifests, sample dirs).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Arithmetic mode. In f32 mode the heavy kernels (FFT, convolution) run in
/// single precision and their outputs are rounded to float.
enum class Precision { f64, f32 };

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense complex array, row-major. Images are m x n x c with the channel
/// index fastest.
class ComplexTensor {
public:
    ComplexTensor() = default;
    explicit ComplexTensor(Shape shape);
    ComplexTensor(Shape shape, std::vector<cplx> data);

    static ComplexTensor zeros(Shape shape) { return ComplexTensor(std::move(shape)); }
    static ComplexTensor filled(Shape shape, cplx value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    cplx* data() noexcept { return data_.data(); }
    const cplx* data() const noexcept { return data_.data(); }
    std::span<cplx> values() noexcept { return data_; }
    std::span<const cplx> values() const noexcept { return data_; }
    std::vector<cplx>& storage() noexcept { return data_; }
    const std::vector<cplx>& storage() const noexcept { return data_; }

    cplx& operator[](std::size_t i) noexcept { return data_[i]; }
    const cplx& operator[](std::size_t i) const noexcept { return data_[i]; }

    // rank-3 (m, n, c) access
    cplx& operator()(std::size_t y, std::size_t x, std::size_t ch) noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + ch];
    }
    const cplx& operator()(std::size_t y, std::size_t x, std::size_t ch) const noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + ch];
    }

    /// Same data viewed under another shape with equal element count.
    ComplexTensor reshaped(Shape shape) const;

    ComplexTensor& operator+=(const ComplexTensor& o);
    ComplexTensor& operator-=(const ComplexTensor& o);
    ComplexTensor& operator*=(cplx s);
    /// this += a * x
    ComplexTensor& axpy(cplx a, const ComplexTensor& x);

    bool operator==(const ComplexTensor& o) const = default;

private:
    Shape shape_;
    std::vector<cplx> data_;
};

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator*(cplx s, ComplexTensor a);

std::size_t shape_product(const Shape& s);
void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what);

/// Complex inner product sum conj(a) * b.
cplx inner(const ComplexTensor& a, const ComplexTensor& b);
/// Real inner product of the real/imaginary pairs, Re(inner(a, b)).
double real_inner(const ComplexTensor& a, const ComplexTensor& b);
double norm2(const ComplexTensor& a);
double max_abs(const ComplexTensor& a);
bool all_finite(const ComplexTensor& a);

/// Round every sample to single precision (no-op for f64).
void quantize(ComplexTensor& t, Precision p);

/// Real-valued m x n image (magnitudes, phantoms, RSS output).
struct RealImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RealImage() = default;
    RealImage(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t y, std::size_t x) noexcept { return data[y * cols + x]; }
    double operator()(std::size_t y, std::size_t x) const noexcept { return data[y * cols + x]; }
    std::size_t size() const noexcept { return data.size(); }
    bool operator==(const RealImage&) const = default;
};

/// Real image embedded as an (m, n, 1) tensor with zero imaginary part.
ComplexTensor to_tensor(const RealImage& img);
/// Pointwise modulus of a single-channel (m, n) or (m, n, 1) tensor.
RealImage modulus(const ComplexTensor& t);
/// Real part of a single-channel tensor; used to read back masks and real images.
RealImage real_part(const ComplexTensor& t);

}  // namespace pmri
