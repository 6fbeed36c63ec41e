#include "doctest.h"
#include "helpers.hpp"
#include "pmri/forward_model.hpp"
#include "pmri/ops.hpp"

using namespace pmri;
using testutil::max_diff;
using testutil::random_tensor;

namespace {
SamplingMask random_mask(std::size_t m, std::size_t n, std::mt19937_64& rng) {
    RealImage img(m, n);
    for (auto& v : img.data) v = double(rng() % 3 == 0);
    img.data[0] = 1.0;
    return SamplingMask(img);
}
}  // namespace

TEST_CASE("sampling mask validation") {
    CHECK_THROWS_AS(SamplingMask(RealImage(4, 4, 0.0)), ContractError);
    RealImage bad(2, 2, 1.0);
    bad.data[1] = 0.5;
    CHECK_THROWS_AS(SamplingMask{bad}, ContractError);
    auto full = SamplingMask::full(4, 5);
    CHECK(full.sampled_count() == 20);
    CHECK(full.ratio() == 1.0);
}

TEST_CASE("encode examples") {
    std::mt19937_64 rng(1);
    auto u = random_tensor({6, 8, 3}, rng);
    CHECK(encode(u, SamplingMask::full(6, 8)).f == dft2(u));

    RealImage dc(4, 4);
    dc.data[0] = 1;
    auto e = encode(ComplexTensor::filled({4, 4, 1}, 2.0), SamplingMask(dc));
    CHECK(std::abs(e.f[0] - cplx(8, 0)) < 1e-14);
    for (std::size_t i = 1; i < 16; ++i) CHECK(e.f[i] == cplx(0));

    auto mask = random_mask(6, 8, rng);
    auto ref = dft2(u);
    for (std::size_t p = 0; p < 48; ++p)
        if (mask.image().data[p] == 0)
            for (int ch = 0; ch < 3; ++ch) ref[p * 3 + ch] = 0;
    CHECK(encode(u, mask).f == ref);
    CHECK_NOTHROW(encode(u, mask).check_consistent(mask));
    CHECK_THROWS_AS(encode(random_tensor({5, 8, 3}, rng), mask), ShapeError);
}

TEST_CASE("fidelity step fixed point and limits") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        auto u = random_tensor({8, 6, 2}, rng);
        auto mask = random_mask(8, 6, rng);
        auto f = encode(u, mask);
        for (double rho : {0.3, 1.0, 2.5}) CHECK(max_diff(fidelity_grad_step(u, f, mask, rho), u) < 1e-12 * max_abs(u));
        auto other = random_tensor({8, 6, 2}, rng);
        CHECK(fidelity_grad_step(other, f, mask, 0.0, Precision::f64, true) == other);
        CHECK_THROWS_AS(fidelity_grad_step(other, f, mask, 0.0), ContractError);
        CHECK_THROWS_AS(fidelity_grad_step(other, f, mask, -1.0), ContractError);
    }
    auto f = KSpaceData{random_tensor({4, 4, 2}, rng)};
    auto zero = ComplexTensor({4, 4, 2});
    CHECK(max_diff(fidelity_grad_step(zero, f, SamplingMask::full(4, 4), 1.0), idft2(f.f)) < 1e-14);
}

TEST_CASE("fidelity step contracts the sampled residual for rho <= 1") {
    std::mt19937_64 rng(3);
    auto mask = random_mask(8, 8, rng);
    auto f = encode(random_tensor({8, 8, 2}, rng), mask);
    auto u = random_tensor({8, 8, 2}, rng);
    auto resid = [&](const ComplexTensor& x) { return norm2(encode(x, mask).f - f.f); };
    for (double rho : {0.5, 1.0}) CHECK(resid(fidelity_grad_step(u, f, mask, rho)) <= resid(u));
    CHECK(resid(fidelity_grad_step(u, f, mask, 1.0)) < 1e-12);
}

TEST_CASE("normal operator is self-adjoint") {
    std::mt19937_64 rng(4);
    auto mask = random_mask(7, 9, rng);
    auto x = random_tensor({7, 9, 2}, rng), y = random_tensor({7, 9, 2}, rng);
    CHECK(std::abs(real_inner(normal_operator(x, mask), y) - real_inner(x, normal_operator(y, mask))) < 1e-10);
}
