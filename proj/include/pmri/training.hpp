#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmri/data_sim.hpp"
#include "pmri/network.hpp"

namespace pmri {

enum class LossKind { main, coil, body };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind k);

struct LossWeights {
    double gamma = 1e-3;
    double eta = 1e-4;
    double beta = 0.0;

    /// Defaults used with each loss: (1e-3, 1e-4, 0) for main, (1, 0, 1e-3) otherwise.
    static LossWeights defaults(LossKind k);
    void validate() const;
};

/// Loss value plus its cotangents w.r.t. the quantities it reads. A cotangent
/// is left empty when the loss does not depend on that quantity.
struct LossEval {
    double value = 0;
    ComplexTensor g_uT;    // u(T)
    ComplexTensor g_ubar;  // ubar(T), through RSS
    ComplexTensor g_v;     // v_final
    ComplexTensor g_u0;    // u(0)
};

LossEval evaluate_loss(const Trajectory& traj, const Sample& s, LossKind kind, const LossWeights& w,
                       bool need_grad = true);

/// gamma sum_i ||u_i(T) - u*_i|| + || |v| - RSS(u*) || + eta ||RSS(ubar(T)) - RSS(u*)||
double loss_main(const Trajectory& traj, const ComplexTensor& u_star, const LossWeights& w);
/// gamma sum_i ||u_i(T) - u*_i|| + || |v| - RSS(u*) || + beta sum_i || |u_i(0)| - |u*_i| ||
double loss_coil(const Trajectory& traj, const ComplexTensor& u_star, const LossWeights& w);
/// gamma ||RSS(u(T)) - v*|| + || |v| - v* || + beta ||RSS(u(0)) - v*||
double loss_body(const Trajectory& traj, const RealImage& v_star, const LossWeights& w);

/// lambda(0) .. lambda(T), lambda(t) = -d loss / d u(t).
struct CostateSet {
    std::vector<ComplexTensor> lambda;
};

struct Backward {
    double loss = 0;
    CostateSet costates;
    NetParams grads;  // d loss / d Theta, same layout as the network
};

/// Costate recursion over a trajectory produced by forward(s.f, s.mask, net).
Backward mlm_backward(const Trajectory& traj, const NetParams& net, const Sample& s, LossKind kind,
                      const LossWeights& w);

/// Loss of the network on one sample (runs forward).
double sample_loss(const NetParams& net, const Sample& s, LossKind kind, const LossWeights& w);

/// Central differences over every real scalar of the network.
NetParams finite_diff_grad(const Sample& s, const NetParams& net, LossKind kind, const LossWeights& w, double h);

struct GradCheckOptions {
    double h = 1e-5;                    // widened up to 100x where round-off would dominate
    std::size_t coords_per_block = 3;   // besides the largest entry; 0 = every coordinate
    double costate_h = 1e-3;            // fourth-order stencil on u(t), shrunk 10x on kinks
    std::size_t costate_entries = 6;    // per phase, besides the largest entry
    std::uint64_t seed = 0;             // coordinate selection
};

struct BlockError {
    std::string name;
    double rel_err = 0;        // ||fd - mlm||_inf / max(||fd||_inf, ||mlm||_inf) over checked coordinates
    double directional = 0;    // relative error of the block-wide directional derivative
    std::size_t checked = 0;
    std::size_t discarded = 0; // activation pattern changed under +-h
    double step = 0;           // largest difference step used (widened for tiny derivatives)
};

struct Theorem1Report {
    double max_rel_err = 0;
    double max_costate_err = 0;
    std::vector<BlockError> blocks;
    std::vector<double> costate_errors;  // t = 0 .. T
    std::vector<std::size_t> costate_checked;  // entries compared at each t
    double loss = 0;

    bool passed(double tol, double costate_tol) const {
        for (auto n : costate_checked)
            if (n == 0) return false;
        return max_rel_err < tol && max_costate_err < costate_tol;
    }
};

/// Compares mlm_backward against finite differences on sampled coordinates of
/// every parameter block (plus one random direction per block), and the
/// costates against suffix-replay differences of the loss w.r.t. u(t).
/// The finite-difference oracle always runs in double precision.
Theorem1Report check_theorem1(const Sample& s, const NetParams& net, LossKind kind, const LossWeights& w,
                              const GradCheckOptions& opt = {});

/// Random complex multi-coil instance with a random mask and Xavier weights
/// plus small random biases, redrawn until every activation input is at least
/// `margin` from its kink.
struct CertInstance {
    Sample sample;
    NetParams net;
    std::size_t redraws = 0;
};
CertInstance make_certification_instance(const NetConfig& config, std::size_t m, std::size_t n, std::uint64_t seed,
                                         double margin = 1e-6);

// ---- optimizer

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.995;  // lr_e = lr * decay^e, e = completed epochs
};

struct AdamState {
    AdamConfig cfg;
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::vector<double> m, v;  // flattened over real scalars

    explicit AdamState(AdamConfig c = {}) : cfg(c) {}
    double current_lr() const;
};

/// One Adam update on every real scalar (real-only blocks skip their imaginary parts).
void adam_step(NetParams& net, const NetParams& grads, AdamState& state);

// ---- training loop

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0;                 // mean per-sample loss over the epoch
    std::vector<double> psnr_phase;  // validation PSNR of each phase image
};

struct TrainConfig {
    LossKind loss = LossKind::main;
    LossWeights weights;
    AdamConfig adam;
    std::size_t batch = 2;
    std::size_t epochs = 1;
    std::size_t max_steps = 0;  // 0 = no limit
    std::uint64_t seed = 0;     // shuffling
    bool shuffle = true;
    std::size_t threads = 1;
    const Sample* validation = nullptr;
    std::function<void(const EpochRecord&, const NetParams&)> on_epoch;
    /// Returning true ends training after the current epoch.
    std::function<bool(const EpochRecord&)> stop;
};

struct TrainResult {
    NetParams net;
    std::vector<EpochRecord> history;
    std::size_t steps = 0;
};

/// Raised when a loss, state or gradient stops being finite.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TrainResult train(const std::vector<Sample>& dataset, NetParams init, const TrainConfig& cfg);

/// Per-phase PSNR of |J(ubar(t))| against v* (RSS(u*) when v* is absent).
std::vector<double> phase_psnr(const NetParams& net, const Sample& s);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       std::size_t phases);

}  // namespace pmri
