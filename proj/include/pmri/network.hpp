#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pmri/forward_model.hpp"
#include "pmri/ops.hpp"
#include "pmri/tensor.hpp"

namespace pmri {

/// Structural hyperparameters of the unrolled network and its variant flags.
struct NetConfig {
    std::size_t channels = 4;  // coils, c
    std::size_t phases = 4;    // T
    std::size_t features = 64; // N_f
    std::size_t kernel_J = 3;  // J and its decoder
    std::size_t kernel_G = 9;  // G and its decoder
    std::size_t kernel_K = 3;  // K and K0

    bool image_only = false;   // image-domain phases with feature soft-shrinkage, no K
    bool rss_combine = false;  // root-sum-of-squares in place of the learned combination
    bool real_conv = false;    // kernels constrained to real values
    bool learned_init = true;  // u(0) = F^H(f + K0(f)); otherwise zero-filled
    double alpha = 0.0;        // soft-shrink threshold (image-only phases)
    Precision precision = Precision::f64;

    std::size_t bank_count() const { return (phases + 1) / 2; }
    /// Shared-M bank used by phase t (1-based): phases 1,2 -> 0; 3,4 -> 1; ...
    std::size_t bank_of(std::size_t t) const { return (t - 1) / 2; }

    /// Throws ContractError for zero extents, even kernels or T = 0.
    void validate() const;

    /// Comma-separated variant list, "full" when all flags are default.
    std::string variant_string() const;
    /// Applies a comma-separated list of: full, ablation-image-only,
    /// rss-combine, real-conv, init-zf, init-k.
    void apply_variant(const std::string& spec);

    bool operator==(const NetConfig&) const = default;
};

using ConvStack = std::vector<ConvKernel>;

/// One shared image-domain denoiser M = Jt . Gt . G . J.
struct MBank {
    ConvStack J, G, Gt, Jt;
};

struct PhaseParams {
    cplx rho{1.0};   // step size; imaginary part held at zero
    ConvStack K;     // k-space refiner, empty for image-only phases
    std::size_t bank = 0;

    double step() const { return rho.real(); }
};

struct NetParams {
    NetConfig config;
    ConvStack K0;                    // empty for zero-filled init
    std::vector<PhaseParams> phases; // phases[t-1] is theta(t)
    std::vector<MBank> banks;

    /// Every weight and bias zero, rho = 1.
    static NetParams zeros(const NetConfig& config);
    /// Same layout with every entry zero, rho included (gradient buffers).
    static NetParams zero_grads(const NetConfig& config);
    /// Glorot-uniform complex weights, zero biases, rho = 1.
    static NetParams xavier(const NetConfig& config, std::uint64_t seed);

    const MBank& bank_for(std::size_t t) const { return banks.at(phases.at(t - 1).bank); }

    /// Number of trainable real scalars (complex entries count twice unless real_only).
    std::size_t scalar_count() const;
    /// Scalar count of the same network with one M bank per phase.
    static std::size_t unshared_scalar_count(const NetConfig& config);
};

/// Named view of one parameter tensor. Real-only blocks keep their imaginary
/// parts at zero during training and differencing.
struct ParamRef {
    std::string name;  // e.g. theta1_G_2.w, theta3_rho
    cplx* data = nullptr;
    std::size_t size = 0;
    bool real_only = false;
    Shape shape;
};

/// Blocks in a fixed order. Shared banks are listed once, under the first
/// phase that uses them.
std::vector<ParamRef> param_refs(NetParams& net);
std::vector<ParamRef> param_refs(const NetParams& net);

/// Cached activations of a conv stack: inputs[l] feeds layer l, pre[l] is
/// layer l's output before the activation.
struct StackCache {
    std::vector<ComplexTensor> inputs;
    std::vector<ComplexTensor> pre;
};

/// Convolutions with CReLU between consecutive layers, none after the last.
ComplexTensor run_stack(const ConvStack& stack, const ComplexTensor& x, Precision p, StackCache* cache = nullptr);
/// Accumulates weight/bias cotangents into grads and returns the input
/// cotangent (empty when need_input is false).
ComplexTensor stack_vjp(const ConvStack& stack, const StackCache& cache, const ComplexTensor& g, ConvStack& grads,
                        Precision p, bool need_input = true);

struct MCache {
    ComplexTensor combined;  // z = J(b) or RSS-lifted b
    ComplexTensor features;  // G(z), before shrinkage
    StackCache J, G, Gt, Jt;
};

struct PhaseCache {
    ComplexTensor residual;  // F^H P (F u - f)
    MCache m;
    StackCache K;
};

/// State sequence plus everything the costate pass needs.
struct Trajectory {
    std::vector<ComplexTensor> u;     // u(0) .. u(T)
    std::vector<ComplexTensor> b;     // b[t-1] = b(t), t = 1..T
    std::vector<ComplexTensor> ubar;  // ubar[t-1]; image-only phases store u(t) here
    ComplexTensor v_final;            // combination of ubar(T), (m, n, 1)

    StackCache init;
    std::vector<PhaseCache> cache;
    StackCache final_combine;

    std::size_t phases() const { return b.size(); }
};

/// Learned coil combination, (m, n, c) -> (m, n, 1).
ComplexTensor op_combine_J(const ComplexTensor& x, const ConvStack& J, Precision p = Precision::f64,
                           StackCache* cache = nullptr);

/// Root of sum of squares over channels.
RealImage rss_combine(const ComplexTensor& u);
/// Cotangent of rss_combine w.r.t. u given the cotangent of the (real) RSS image.
ComplexTensor rss_vjp(const ComplexTensor& u, const RealImage& g);

/// Residual image-domain correction M(b); ubar = b + op_M(b). alpha > 0
/// inserts feature-space soft-shrinkage between encoder and decoder.
ComplexTensor op_M(const ComplexTensor& b, const MBank& bank, const NetConfig& config, double alpha = 0.0,
                   MCache* cache = nullptr);

/// ubar + idft2(K(dft2(ubar))).
ComplexTensor op_kspace_refine(const ComplexTensor& ubar, const ConvStack& K, Precision p = Precision::f64,
                               StackCache* cache = nullptr);

struct PhaseOutput {
    ComplexTensor u_next, b, ubar;
};

/// One full phase t (1-based): fidelity step, image denoiser, k-space refiner.
PhaseOutput phase_g(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask, const NetParams& net,
                    std::size_t t, PhaseCache* cache = nullptr);

/// Image-domain-only phase with soft-shrinkage in feature space.
ComplexTensor phase_ablation(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask,
                             const NetParams& net, std::size_t t, double alpha, PhaseCache* cache = nullptr);

/// u(0) = F^H(f + K0(f)), or F^H f when the network has no K0.
ComplexTensor init_g0(const KSpaceData& f, const NetParams& net, StackCache* cache = nullptr);

/// Runs u(0) and all T phases; keeps every intermediate.
Trajectory forward(const KSpaceData& f, const SamplingMask& mask, const NetParams& net);

/// Replays phases t0+1 .. T from a given u(t0), reusing u(0..t0) from traj.
Trajectory forward_from(const Trajectory& prefix, std::size_t t0, const ComplexTensor& u_t0, const KSpaceData& f,
                        const SamplingMask& mask, const NetParams& net);

/// Combined single-body image of each phase, |J(ubar(t))| (or RSS), t = 1..T.
std::vector<RealImage> phase_images(const Trajectory& traj, const NetParams& net);

// ---- vector-Jacobian products through the network, used by the costate pass

/// Back through v_final; returns the cotangent of ubar(T).
ComplexTensor final_combine_vjp(const Trajectory& traj, const ComplexTensor& g_v, const NetParams& net,
                                NetParams& grads);

/// Back through phase t given the cotangent of u(t) (and optionally an extra
/// cotangent entering at ubar(t)); returns the cotangent of u(t-1).
ComplexTensor phase_vjp(const Trajectory& traj, std::size_t t, const ComplexTensor& g_out,
                        const ComplexTensor* g_ubar_extra, const KSpaceData& f, const SamplingMask& mask,
                        const NetParams& net, NetParams& grads);

/// Back through u(0) = g0(f); accumulates K0 cotangents.
void init_vjp(const Trajectory& traj, const ComplexTensor& g_u0, const KSpaceData& f, const NetParams& net,
              NetParams& grads);

/// Smallest distance of any CReLU (or soft-shrink) input part to its kink.
double activation_margin(const Trajectory& traj, double alpha = 0.0);
/// Bit pattern of which side of its kink every activation input lies on.
std::vector<std::uint8_t> activation_pattern(const Trajectory& traj, double alpha = 0.0);

// ---- persistence

/// Writes params.txt plus one CTNS file per block into dir.
void save_params(const NetParams& net, const std::filesystem::path& dir);
NetParams load_params(const std::filesystem::path& dir);

}  // namespace pmri
