#include "pmri/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace pmri {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

std::size_t shape_product(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_)) {}

ComplexTensor::ComplexTensor(Shape shape, std::vector<cplx> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

ComplexTensor ComplexTensor::filled(Shape shape, cplx value) {
    ComplexTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

ComplexTensor ComplexTensor::reshaped(Shape shape) const {
    if (shape_product(shape) != size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return ComplexTensor(std::move(shape), data_);
}

void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

ComplexTensor& ComplexTensor::operator+=(const ComplexTensor& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

ComplexTensor& ComplexTensor::operator-=(const ComplexTensor& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

ComplexTensor& ComplexTensor::operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
}

ComplexTensor& ComplexTensor::axpy(cplx a, const ComplexTensor& x) {
    require_same_shape(*this, x, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
    return *this;
}

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b) { return a += b; }
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b) { return a -= b; }
ComplexTensor operator*(cplx s, ComplexTensor a) { return a *= s; }

cplx inner(const ComplexTensor& a, const ComplexTensor& b) {
    require_same_shape(a, b, "inner");
    cplx acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

double real_inner(const ComplexTensor& a, const ComplexTensor& b) {
    require_same_shape(a, b, "real_inner");
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return acc;
}

double norm2(const ComplexTensor& a) {
    double acc = 0;
    for (const auto& v : a.values()) acc += std::norm(v);
    return std::sqrt(acc);
}

double max_abs(const ComplexTensor& a) {
    double m = 0;
    for (const auto& v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

bool all_finite(const ComplexTensor& a) {
    return std::all_of(a.values().begin(), a.values().end(),
                       [](const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

void quantize(ComplexTensor& t, Precision p) {
    if (p == Precision::f64) return;
    for (auto& v : t.values())
        v = cplx(static_cast<double>(static_cast<float>(v.real())), static_cast<double>(static_cast<float>(v.imag())));
}

ComplexTensor to_tensor(const RealImage& img) {
    ComplexTensor t({img.rows, img.cols, 1});
    for (std::size_t i = 0; i < img.size(); ++i) t[i] = img.data[i];
    return t;
}

namespace {
void require_single_channel(const ComplexTensor& t, const char* what) {
    if (t.rank() == 2 || (t.rank() == 3 && t.dim(2) == 1)) return;
    throw ShapeError(std::string(what) + ": expected a single-channel image, got " + shape_str(t.shape()));
}
}  // namespace

RealImage modulus(const ComplexTensor& t) {
    require_single_channel(t, "modulus");
    RealImage img(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = std::abs(t[i]);
    return img;
}

RealImage real_part(const ComplexTensor& t) {
    require_single_channel(t, "real_part");
    RealImage img(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = t[i].real();
    return img;
}

}  // namespace pmri
