// Complex "same" cross-correlation and its vector-Jacobian products.
//
// Direct path: im2col (rows = pixels, cols = taps x c_in) times the weight
// matrix (taps x c_in, c_out). Spectral path: both operands are zero padded
// to L = extent + radius per axis, which is enough for the circular product to
// match the linear one on the cropped output window.

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <list>
#include <memory>
#include <numbers>
#include <string>

#include "pmri/fft.hpp"
#include "pmri/ops.hpp"

namespace pmri {

namespace {

template <class T>
using Mat = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<Mat<T>>;
template <class T>
using CMapMat = Eigen::Map<const Mat<T>>;

template <class T>
std::vector<std::complex<T>> convert(const ComplexTensor& t) {
    std::vector<std::complex<T>> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        out[i] = std::complex<T>(static_cast<T>(t[i].real()), static_cast<T>(t[i].imag()));
    return out;
}

template <class T>
ComplexTensor back(Shape shape, const std::complex<T>* data) {
    ComplexTensor out(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = cplx(static_cast<double>(data[i].real()), static_cast<double>(data[i].imag()));
    return out;
}

struct Geometry {
    std::size_t m, n, cin, cout, kh, kw, rh, rw;
};

Geometry geometry(const ComplexTensor& x, const ConvKernel& k) {
    k.validate();
    if (x.rank() != 3) throw ShapeError("cconv2d: input must be (m, n, c), got " + shape_str(x.shape()));
    if (x.dim(2) != k.cin())
        throw ShapeError("cconv2d: input has " + std::to_string(x.dim(2)) + " channels, kernel expects " +
                         std::to_string(k.cin()));
    return {x.dim(0), x.dim(1), k.cin(), k.cout(), k.kh(), k.kw(), k.kh() / 2, k.kw() / 2};
}

bool use_spectral(const Geometry& g, ConvPath path) {
    if (path == ConvPath::direct) return false;
    if (path == ConvPath::spectral) return true;
    return g.kh * g.kw >= 25;
}

// ---------------------------------------------------------------- direct path

template <class T>
Mat<T> im2col(const std::vector<std::complex<T>>& x, const Geometry& g) {
    const std::size_t taps = g.kh * g.kw;
    Mat<T> col = Mat<T>::Zero(static_cast<Eigen::Index>(g.m * g.n), static_cast<Eigen::Index>(taps * g.cin));
    for (std::size_t y = 0; y < g.m; ++y) {
        for (std::size_t xx = 0; xx < g.n; ++xx) {
            std::complex<T>* row = col.data() + (y * g.n + xx) * taps * g.cin;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.rh);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.m)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(g.rw);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.n)) continue;
                    const std::complex<T>* src = x.data() + (static_cast<std::size_t>(sy) * g.n + static_cast<std::size_t>(sx)) * g.cin;
                    std::copy(src, src + g.cin, row + (ky * g.kw + kx) * g.cin);
                }
            }
        }
    }
    return col;
}

template <class T>
void col2im_add(const Mat<T>& gcol, const Geometry& g, std::complex<T>* gx) {
    const std::size_t taps = g.kh * g.kw;
    for (std::size_t y = 0; y < g.m; ++y) {
        for (std::size_t xx = 0; xx < g.n; ++xx) {
            const std::complex<T>* row = gcol.data() + (y * g.n + xx) * taps * g.cin;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.rh);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.m)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(g.rw);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.n)) continue;
                    std::complex<T>* dst = gx + (static_cast<std::size_t>(sy) * g.n + static_cast<std::size_t>(sx)) * g.cin;
                    const std::complex<T>* src = row + (ky * g.kw + kx) * g.cin;
                    for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

template <class T>
ComplexTensor direct_forward(const ComplexTensor& x, const ConvKernel& k, const Geometry& g) {
    const auto xs = convert<T>(x);
    const auto ws = convert<T>(k.weights);
    const auto bs = convert<T>(k.bias);
    const Mat<T> col = im2col(xs, g);
    CMapMat<T> w(ws.data(), static_cast<Eigen::Index>(g.kh * g.kw * g.cin), static_cast<Eigen::Index>(g.cout));
    Mat<T> out = col * w;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < g.cout; ++c) out(r, static_cast<Eigen::Index>(c)) += bs[c];
    return back<T>({g.m, g.n, g.cout}, out.data());
}

template <class T>
ConvGrads direct_vjp(const ComplexTensor& x, const ConvKernel& k, const ComplexTensor& gout, const Geometry& g,
                     bool need_input) {
    const auto xs = convert<T>(x);
    const auto ws = convert<T>(k.weights);
    const auto gs = convert<T>(gout);
    const auto rows = static_cast<Eigen::Index>(g.m * g.n);
    const auto kdim = static_cast<Eigen::Index>(g.kh * g.kw * g.cin);
    CMapMat<T> w(ws.data(), kdim, static_cast<Eigen::Index>(g.cout));
    CMapMat<T> go(gs.data(), rows, static_cast<Eigen::Index>(g.cout));

    ConvGrads grads;
    const Mat<T> col = im2col(xs, g);
    const Mat<T> gw = col.adjoint() * go;
    grads.kernel.weights = back<T>(k.weights.shape(), gw.data());
    grads.kernel.bias = ComplexTensor({g.cout});
    for (std::size_t c = 0; c < g.cout; ++c) {
        std::complex<T> acc = 0;
        for (Eigen::Index r = 0; r < rows; ++r) acc += go(r, static_cast<Eigen::Index>(c));
        grads.kernel.bias[c] = cplx(acc.real(), acc.imag());
    }
    if (need_input) {
        const Mat<T> gcol = go * w.adjoint();
        std::vector<std::complex<T>> gx(x.size());
        col2im_add<T>(gcol, g, gx.data());
        grads.input = back<T>(x.shape(), gx.data());
    }
    return grads;
}

// -------------------------------------------------------------- spectral path

bool smooth235(std::size_t n) {
    for (std::size_t p : {2u, 3u, 5u})
        while (n % p == 0) n /= p;
    return n == 1;
}

std::size_t padded_length(std::size_t extent, std::size_t radius) {
    std::size_t l = extent + radius;
    while (!smooth235(l)) ++l;
    return l;
}

// A[w, d] = exp(+2 pi i w (d - r) / L), L x k
template <class T>
Mat<T> tap_phases(std::size_t len, std::size_t k) {
    const std::size_t r = k / 2;
    Mat<T> a(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(k));
    for (std::size_t w = 0; w < len; ++w) {
        for (std::size_t d = 0; d < k; ++d) {
            const auto off = static_cast<long long>(d) - static_cast<long long>(r);
            const long long idx = ((static_cast<long long>(w) * off) % static_cast<long long>(len) + static_cast<long long>(len)) %
                                  static_cast<long long>(len);
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(len);
            a(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(d)) =
                std::complex<T>(static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase)));
        }
    }
    return a;
}

template <class T>
struct Spectral {
    Geometry g;
    std::size_t ly, lx;
    Mat<T> ay, ax;

    explicit Spectral(const Geometry& geo)
        : g(geo), ly(padded_length(geo.m, geo.rh)), lx(padded_length(geo.n, geo.rw)), ay(tap_phases<T>(ly, geo.kh)),
          ax(tap_phases<T>(lx, geo.kw)) {}

    std::size_t freqs() const { return ly * lx; }

    // zero-padded forward transform of an (m, n, c) array
    std::vector<std::complex<T>> transform_image(const ComplexTensor& t, std::size_t channels) const {
        std::vector<std::complex<T>> buf(freqs() * channels);
        for (std::size_t y = 0; y < g.m; ++y)
            for (std::size_t x = 0; x < g.n; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const cplx v = t[(y * g.n + x) * channels + c];
                    buf[(y * lx + x) * channels + c] = std::complex<T>(static_cast<T>(v.real()), static_cast<T>(v.imag()));
                }
        fft2_inplace<T>(buf.data(), ly, lx, channels, false);
        return buf;
    }

    // inverse transform, 1/L scaling, crop to (m, n, c)
    ComplexTensor crop_inverse(std::vector<std::complex<T>>& buf, std::size_t channels) const {
        fft2_inplace<T>(buf.data(), ly, lx, channels, true);
        const double scale = 1.0 / static_cast<double>(freqs());
        ComplexTensor out({g.m, g.n, channels});
        for (std::size_t y = 0; y < g.m; ++y)
            for (std::size_t x = 0; x < g.n; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const auto v = buf[(y * lx + x) * channels + c];
                    out[(y * g.n + x) * channels + c] = cplx(v.real(), v.imag()) * scale;
                }
        return out;
    }

    // K[wy, wx, ci, co] = sum_{dy,dx} W[dy, dx, ci, co] ay[wy, dy] ax[wx, dx]
    Mat<T> transform_kernel(const ConvKernel& k) const {
        const auto ws = convert<T>(k.weights);
        const auto q = static_cast<Eigen::Index>(g.cin * g.cout);
        const auto lxi = static_cast<Eigen::Index>(lx);
        Mat<T> t1(static_cast<Eigen::Index>(g.kh), lxi * q);
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
            CMapMat<T> wdy(ws.data() + dy * g.kw * g.cin * g.cout, static_cast<Eigen::Index>(g.kw), q);
            MapMat<T> out(t1.data() + static_cast<Eigen::Index>(dy) * lxi * q, lxi, q);
            out.noalias() = ax * wdy;
        }
        Mat<T> khat = ay * t1;  // ly x (lx * q)
        return khat;
    }

    // inverse of transform_kernel's adjoint: gW[d] = (1/L) sum_w P[w] conj(ay) conj(ax)
    ComplexTensor kernel_adjoint(const Mat<T>& p, const Shape& wshape) const {
        const auto q = static_cast<Eigen::Index>(g.cin * g.cout);
        const auto lxi = static_cast<Eigen::Index>(lx);
        const Mat<T> t1 = ay.adjoint() * p;  // kh x (lx * q)
        Mat<T> gw(static_cast<Eigen::Index>(g.kh * g.kw), q);
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
            CMapMat<T> slab(t1.data() + static_cast<Eigen::Index>(dy) * lxi * q, lxi, q);
            MapMat<T> out(gw.data() + static_cast<Eigen::Index>(dy * g.kw) * q, static_cast<Eigen::Index>(g.kw), q);
            out.noalias() = ax.adjoint() * slab;
        }
        gw *= static_cast<T>(1.0 / static_cast<double>(freqs()));
        return back<T>(wshape, gw.data());
    }
};

// Transformed kernels are memoized per thread. A hit requires the exact same
// weights and grid, so results do not depend on whether the cache is warm.
// Shared banks are applied several times per training step with the same
// weights; small kernels are not worth keeping.
constexpr std::size_t kCacheMinPairs = 64;
constexpr std::size_t kCacheSlots = 24;

template <class T>
struct KernelCacheEntry {
    std::size_t ly, lx, kh, kw, cin, cout;
    std::vector<cplx> weights;
    std::shared_ptr<const Mat<T>> khat;
};

template <class T>
std::shared_ptr<const Mat<T>> cached_kernel(const Spectral<T>& s, const ConvKernel& k) {
    const Geometry& g = s.g;
    if (g.cin * g.cout < kCacheMinPairs) return std::make_shared<const Mat<T>>(s.transform_kernel(k));
    thread_local std::list<KernelCacheEntry<T>> cache;
    const auto& w = k.weights.values();
    for (auto it = cache.begin(); it != cache.end(); ++it) {
        if (it->ly != s.ly || it->lx != s.lx || it->kh != g.kh || it->kw != g.kw || it->cin != g.cin ||
            it->cout != g.cout || it->weights.size() != w.size())
            continue;
        if (std::memcmp(it->weights.data(), w.data(), w.size() * sizeof(cplx)) != 0) continue;
        cache.splice(cache.begin(), cache, it);
        return cache.front().khat;
    }
    auto khat = std::make_shared<const Mat<T>>(s.transform_kernel(k));
    cache.push_front({s.ly, s.lx, g.kh, g.kw, g.cin, g.cout, std::vector<cplx>(w.begin(), w.end()), khat});
    if (cache.size() > kCacheSlots) cache.pop_back();
    return khat;
}

template <class T>
ComplexTensor spectral_forward(const ComplexTensor& x, const ConvKernel& k, const Geometry& g) {
    const Spectral<T> s(g);
    const auto xhat = s.transform_image(x, g.cin);
    const auto khat_ptr = cached_kernel(s, k);
    const Mat<T>& khat = *khat_ptr;
    std::vector<std::complex<T>> yhat(s.freqs() * g.cout);
    const auto ci = static_cast<Eigen::Index>(g.cin), co = static_cast<Eigen::Index>(g.cout);
    for (std::size_t w = 0; w < s.freqs(); ++w) {
        Eigen::Map<const Eigen::Matrix<std::complex<T>, 1, Eigen::Dynamic>> xv(xhat.data() + w * g.cin, ci);
        CMapMat<T> kw(khat.data() + w * g.cin * g.cout, ci, co);
        Eigen::Map<Eigen::Matrix<std::complex<T>, 1, Eigen::Dynamic>> yv(yhat.data() + w * g.cout, co);
        yv.noalias() = xv * kw;
    }
    ComplexTensor out = s.crop_inverse(yhat, g.cout);
    for (std::size_t p = 0; p < g.m * g.n; ++p)
        for (std::size_t c = 0; c < g.cout; ++c) out[p * g.cout + c] += k.bias[c];
    return out;
}

template <class T>
ConvGrads spectral_vjp(const ComplexTensor& x, const ConvKernel& k, const ComplexTensor& gout, const Geometry& g,
                       bool need_input) {
    const Spectral<T> s(g);
    const auto xhat = s.transform_image(x, g.cin);
    const auto ghat = s.transform_image(gout, g.cout);
    const auto ci = static_cast<Eigen::Index>(g.cin), co = static_cast<Eigen::Index>(g.cout);
    using Row = Eigen::Matrix<std::complex<T>, 1, Eigen::Dynamic>;

    ConvGrads grads;
    Mat<T> p(static_cast<Eigen::Index>(s.ly), static_cast<Eigen::Index>(s.lx) * ci * co);
    for (std::size_t w = 0; w < s.freqs(); ++w) {
        Eigen::Map<const Row> xv(xhat.data() + w * g.cin, ci);
        Eigen::Map<const Row> gv(ghat.data() + w * g.cout, co);
        MapMat<T> pw(p.data() + w * g.cin * g.cout, ci, co);
        pw.noalias() = xv.adjoint() * gv;
    }
    grads.kernel.weights = s.kernel_adjoint(p, k.weights.shape());

    grads.kernel.bias = ComplexTensor({g.cout});
    for (std::size_t q = 0; q < g.m * g.n; ++q)
        for (std::size_t c = 0; c < g.cout; ++c) grads.kernel.bias[c] += gout[q * g.cout + c];

    if (need_input) {
        const auto khat_ptr = cached_kernel(s, k);
        const Mat<T>& khat = *khat_ptr;
        std::vector<std::complex<T>> gx(s.freqs() * g.cin);
        for (std::size_t w = 0; w < s.freqs(); ++w) {
            CMapMat<T> kw(khat.data() + w * g.cin * g.cout, ci, co);
            Eigen::Map<const Row> gv(ghat.data() + w * g.cout, co);
            Eigen::Map<Row> xv(gx.data() + w * g.cin, ci);
            xv.noalias() = gv * kw.adjoint();
        }
        grads.input = s.crop_inverse(gx, g.cin);
    }
    return grads;
}

}  // namespace

ComplexTensor cconv2d(const ComplexTensor& x, const ConvKernel& k, Precision p, ConvPath path) {
    const Geometry g = geometry(x, k);
    const bool spectral = use_spectral(g, path);
    if (p == Precision::f32) {
        auto out = spectral ? spectral_forward<float>(x, k, g) : direct_forward<float>(x, k, g);
        quantize(out, p);
        return out;
    }
    return spectral ? spectral_forward<double>(x, k, g) : direct_forward<double>(x, k, g);
}

ConvGrads cconv2d_vjp(const ComplexTensor& x, const ConvKernel& k, const ComplexTensor& g, Precision p,
                      bool need_input, ConvPath path) {
    const Geometry geo = geometry(x, k);
    if (g.shape() != Shape{geo.m, geo.n, geo.cout})
        throw ShapeError("cconv2d_vjp: cotangent " + shape_str(g.shape()) + " does not match output shape");
    const bool spectral = use_spectral(geo, path);
    ConvGrads out;
    if (p == Precision::f32) {
        out = spectral ? spectral_vjp<float>(x, k, g, geo, need_input) : direct_vjp<float>(x, k, g, geo, need_input);
        quantize(out.kernel.weights, p);
        quantize(out.kernel.bias, p);
        if (need_input) quantize(out.input, p);
    } else {
        out = spectral ? spectral_vjp<double>(x, k, g, geo, need_input) : direct_vjp<double>(x, k, g, geo, need_input);
    }
    return out;
}

}  // namespace pmri
