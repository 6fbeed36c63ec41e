// pmri: simulate, train, reconstruct, evaluate, gradcheck, ablate.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pmri/app.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key = value settings file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "override one setting, key=value (repeatable)");
    cmd->add_option("--threads", c.threads, "worker threads");
}

pmri::AppConfig resolve(const Common& c) {
    pmri::AppConfig cfg = c.config.empty() ? pmri::AppConfig{} : pmri::AppConfig::load(c.config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw pmri::ContractError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.threads) cfg.set("threads", std::to_string(c.threads));
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration-free parallel MRI reconstruction with an unrolled network"};
    app.require_subcommand(1);

    Common common;
    std::string out, data, checkpoint, sample, report;

    auto* sim = app.add_subcommand("simulate", "write a synthetic multi-coil dataset");
    add_common(sim, common);
    sim->add_option("--out", out, "dataset directory")->required();

    auto* tr = app.add_subcommand("train", "train a network on a dataset");
    add_common(tr, common);
    tr->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", out, "run directory")->required();

    auto* rec = app.add_subcommand("reconstruct", "run a checkpoint on one sample");
    rec->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
    rec->add_option("--sample", sample, "sample directory")->required()->check(CLI::ExistingDirectory);
    rec->add_option("--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "metrics of a checkpoint over a dataset");
    ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--data", data, "dataset or sample directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--out", out, "CSV file")->required();

    auto* gc = app.add_subcommand("gradcheck", "compare MLM gradients against finite differences");
    add_common(gc, common);
    gc->add_option("--report", report, "per-block CSV");

    auto* ab = app.add_subcommand("ablate", "fixed-point, gradient and training comparison of the variants");
    add_common(ab, common);
    ab->add_option("--sample", sample, "sample to overfit (simulated from the config when omitted)")
        ->check(CLI::ExistingDirectory);
    ab->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? pmri::kExitOk : pmri::kExitError;
    }

    try {
        if (*sim) return pmri::cmd_simulate(resolve(common), out, std::cout);
        if (*tr) return pmri::cmd_train(resolve(common), data, out, std::cout);
        if (*rec) return pmri::cmd_reconstruct(checkpoint, sample, out, std::cout);
        if (*ev) return pmri::cmd_evaluate(checkpoint, data, out, std::cout);
        if (*gc) return pmri::cmd_gradcheck(resolve(common), report, std::cout);
        if (*ab) return pmri::cmd_ablate(resolve(common), sample, out, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pmri::kExitError;
    }
    return pmri::kExitError;
}
