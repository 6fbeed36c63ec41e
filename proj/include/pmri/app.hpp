#pragma once

// Command implementations behind the `pmri` executable.

#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pmri/data_sim.hpp"
#include "pmri/io.hpp"
#include "pmri/metrics.hpp"
#include "pmri/network.hpp"
#include "pmri/training.hpp"

namespace pmri {

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitCertFailed = 2 };

/// Every setting a command may read. Keys match the config-file names.
struct AppConfig {
    // data
    std::size_t m = 32, n = 32, c = 4;
    double ratio = 0.3156;
    std::optional<std::size_t> acs_lines;
    double sigma = 0.0;
    LineOrientation orientation = LineOrientation::columns;
    std::size_t n_samples = 1;

    // network
    std::size_t T = 4, N_f = 64;
    std::size_t kernel_J = 3, kernel_G = 9, kernel_K = 3;
    std::string variant = "full";
    double alpha = 0.0;
    double rho0 = 1.0;
    Precision precision = Precision::f64;

    // training; unset loss weights fall back to the per-loss defaults
    LossKind loss = LossKind::main;
    std::optional<double> gamma, eta, beta;
    double lr = 1e-4, decay = 0.995;
    std::size_t batch = 2, epochs = 1, max_steps = 0;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::size_t threads = 1;
    bool keep_checkpoints = false;

    // certification; tolerances default to 1e-5 / 1e-6 (f64) or 1e-3 (f32)
    std::size_t gc_seeds = 10;
    std::optional<double> tol, costate_tol;
    std::size_t coords_per_block = 3;

    // ablation
    std::vector<std::string> variants{"full", "ablation-image-only", "rss-combine", "real-conv", "init-zf", "init-k"};
    std::size_t ablate_steps = 100;

    /// Keys assigned through set(), from a file or the command line.
    std::set<std::string> explicit_keys;

    /// Parses and stores one setting. Unknown keys and malformed values throw ContractError.
    void set(const std::string& key, const std::string& value);
    bool is_set(const std::string& key) const { return explicit_keys.count(key) != 0; }
    static AppConfig load(const std::filesystem::path& path);
    static const std::vector<std::string>& known_keys();
    KeyValueFile to_kv() const;

    NetConfig net() const;
    SimConfig sim() const;
    LossWeights weights() const;
    TrainConfig train() const;
    double grad_tol() const;
    double costate_tolerance() const;
};

/// Binary PGM (P5, maxval 65535, big-endian rows). Values are divided by
/// `scale` and clamped to [0, 1].
void write_pgm16(const std::filesystem::path& path, const RealImage& img, double scale);
RealImage read_pgm16(const std::filesystem::path& path);

/// Metrics of one reconstruction against the sample's references.
MetricReport evaluate_sample(const NetParams& net, const Sample& s);

int cmd_simulate(const AppConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const AppConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out,
              std::ostream& log);
int cmd_reconstruct(const std::filesystem::path& checkpoint, const std::filesystem::path& sample,
                    const std::filesystem::path& out, std::ostream& log);
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                 const std::filesystem::path& out_csv, std::ostream& log);
/// Returns kExitCertFailed when any seed misses the tolerance. `report` may be empty.
int cmd_gradcheck(const AppConfig& cfg, const std::filesystem::path& report, std::ostream& log);
/// `sample` may be empty, in which case the overfit sample is simulated from cfg.
int cmd_ablate(const AppConfig& cfg, const std::filesystem::path& sample, const std::filesystem::path& out,
               std::ostream& log);

// ---- pieces the commands are built from

struct GradcheckSummary {
    std::vector<Theorem1Report> reports;  // one per seed
    double max_rel_err = 0;
    double max_costate_err = 0;
    bool passed = false;
    double seconds = 0;
};

/// Certification over cfg.gc_seeds random instances of `config` at m x n.
GradcheckSummary run_gradcheck(const NetConfig& config, std::size_t m, std::size_t n, const AppConfig& cfg);

/// Largest deviation, relative to the zero-filled image, of any u(t) or ubar(t)
/// from the zero-filled image when every learned weight is zero.
double zero_network_deviation(const NetConfig& config, const Sample& s);

/// Small certification network for a variant: 16x16, c = 2, T = 2, N_f = 8
/// unless the corresponding keys were set explicitly.
NetConfig gradcheck_config(const AppConfig& cfg, std::size_t& m, std::size_t& n);

}  // namespace pmri
