#include "pmri/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pmri/metrics.hpp"

namespace pmri {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

namespace {

std::string trim(std::string s) {
    auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size())
        throw ContractError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    if (pos != v.size() || !std::isfinite(x))
        throw ContractError("config key '" + key + "': expected a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ContractError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

std::string fmt_metric(double x) {
    if (std::isnan(x)) return "nan";
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

}  // namespace

const std::vector<std::string>& AppConfig::known_keys() {
    static const std::vector<std::string> keys{
        "m", "n", "c", "ratio", "acs_lines", "sigma", "orientation", "n_samples",
        "T", "N_f", "kernel_J", "kernel_G", "kernel_K", "variant", "alpha", "rho0", "precision",
        "loss", "gamma", "eta", "beta", "lr", "decay", "batch", "epochs", "max_steps", "seed", "shuffle",
        "threads", "keep_checkpoints",
        "gc_seeds", "tol", "costate_tol", "coords_per_block",
        "variants", "ablate_steps"};
    return keys;
}

void AppConfig::set(const std::string& raw_key, const std::string& raw_value) {
    const std::string key = trim(raw_key);
    const std::string v = trim(raw_value);
    auto positive = [&](std::size_t x) {
        if (x == 0) throw ContractError("config key '" + key + "' must be positive");
        return x;
    };
    if (key == "m") m = positive(parse_count(key, v));
    else if (key == "n") n = positive(parse_count(key, v));
    else if (key == "c") c = positive(parse_count(key, v));
    else if (key == "ratio") {
        ratio = parse_real(key, v);
        if (ratio <= 0 || ratio > 1) throw ContractError("config key 'ratio' must lie in (0, 1]");
    } else if (key == "acs_lines") acs_lines = parse_count(key, v);
    else if (key == "sigma") {
        sigma = parse_real(key, v);
        if (sigma < 0) throw ContractError("config key 'sigma' must be non-negative");
    } else if (key == "orientation") {
        if (v == "columns") orientation = LineOrientation::columns;
        else if (v == "rows") orientation = LineOrientation::rows;
        else throw ContractError("config key 'orientation': expected columns or rows, got '" + v + "'");
    } else if (key == "n_samples") n_samples = positive(parse_count(key, v));
    else if (key == "T") T = positive(parse_count(key, v));
    else if (key == "N_f") N_f = positive(parse_count(key, v));
    else if (key == "kernel_J") kernel_J = parse_count(key, v);
    else if (key == "kernel_G") kernel_G = parse_count(key, v);
    else if (key == "kernel_K") kernel_K = parse_count(key, v);
    else if (key == "variant") {
        NetConfig probe;
        probe.apply_variant(v);
        variant = v;
    } else if (key == "alpha") {
        alpha = parse_real(key, v);
        if (alpha < 0) throw ContractError("config key 'alpha' must be non-negative");
    } else if (key == "rho0") {
        rho0 = parse_real(key, v);
        if (rho0 <= 0) throw ContractError("config key 'rho0' must be positive");
    } else if (key == "precision") {
        if (v == "f64") precision = Precision::f64;
        else if (v == "f32") precision = Precision::f32;
        else throw ContractError("config key 'precision': expected f32 or f64, got '" + v + "'");
    } else if (key == "loss") {
        try {
            loss = parse_loss_kind(v);
        } catch (const std::exception& e) {
            throw ContractError(std::string("config key 'loss': ") + e.what());
        }
    } else if (key == "gamma") gamma = parse_real(key, v);
    else if (key == "eta") eta = parse_real(key, v);
    else if (key == "beta") beta = parse_real(key, v);
    else if (key == "lr") {
        lr = parse_real(key, v);
        if (lr <= 0) throw ContractError("config key 'lr' must be positive");
    } else if (key == "decay") {
        decay = parse_real(key, v);
        if (decay <= 0 || decay > 1) throw ContractError("config key 'decay' must lie in (0, 1]");
    } else if (key == "batch") batch = positive(parse_count(key, v));
    else if (key == "epochs") epochs = parse_count(key, v);
    else if (key == "max_steps") max_steps = parse_count(key, v);
    else if (key == "seed") seed = parse_count(key, v);
    else if (key == "shuffle") shuffle = parse_bool(key, v);
    else if (key == "threads") threads = positive(parse_count(key, v));
    else if (key == "keep_checkpoints") keep_checkpoints = parse_bool(key, v);
    else if (key == "gc_seeds") gc_seeds = positive(parse_count(key, v));
    else if (key == "tol") {
        tol = parse_real(key, v);
        if (*tol < 0) throw ContractError("config key 'tol' must be non-negative");
    } else if (key == "costate_tol") {
        costate_tol = parse_real(key, v);
        if (*costate_tol < 0) throw ContractError("config key 'costate_tol' must be non-negative");
    } else if (key == "coords_per_block") coords_per_block = parse_count(key, v);
    else if (key == "variants") {
        std::vector<std::string> list;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ';')) {
            item = trim(item);
            if (item.empty()) continue;
            NetConfig probe;
            probe.apply_variant(item);
            list.push_back(item);
        }
        if (list.empty()) throw ContractError("config key 'variants' lists no variant");
        variants = std::move(list);
    } else if (key == "ablate_steps") ablate_steps = positive(parse_count(key, v));
    else throw ContractError("unknown config key '" + key + "'");
    explicit_keys.insert(key);
}

AppConfig AppConfig::load(const fs::path& path) {
    const auto kv = KeyValueFile::load(path);
    AppConfig cfg;
    for (const auto& [k, v] : kv.entries()) {
        try {
            cfg.set(k, v);
        } catch (const ContractError& e) {
            throw ContractError(path.string() + ": " + e.what());
        }
    }
    return cfg;
}

KeyValueFile AppConfig::to_kv() const {
    KeyValueFile kv;
    kv.set("m", std::to_string(m));
    kv.set("n", std::to_string(n));
    kv.set("c", std::to_string(c));
    kv.set("ratio", fmt(ratio));
    if (acs_lines) kv.set("acs_lines", std::to_string(*acs_lines));
    kv.set("sigma", fmt(sigma));
    kv.set("orientation", orientation == LineOrientation::columns ? "columns" : "rows");
    kv.set("n_samples", std::to_string(n_samples));
    kv.set("T", std::to_string(T));
    kv.set("N_f", std::to_string(N_f));
    kv.set("kernel_J", std::to_string(kernel_J));
    kv.set("kernel_G", std::to_string(kernel_G));
    kv.set("kernel_K", std::to_string(kernel_K));
    kv.set("variant", variant);
    kv.set("alpha", fmt(alpha));
    kv.set("rho0", fmt(rho0));
    kv.set("precision", precision == Precision::f32 ? "f32" : "f64");
    kv.set("loss", to_string(loss));
    const LossWeights w = weights();
    kv.set("gamma", fmt(w.gamma));
    kv.set("eta", fmt(w.eta));
    kv.set("beta", fmt(w.beta));
    kv.set("lr", fmt(lr));
    kv.set("decay", fmt(decay));
    kv.set("batch", std::to_string(batch));
    kv.set("epochs", std::to_string(epochs));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("seed", std::to_string(seed));
    kv.set("shuffle", shuffle ? "true" : "false");
    kv.set("threads", std::to_string(threads));
    kv.set("keep_checkpoints", keep_checkpoints ? "true" : "false");
    return kv;
}

NetConfig AppConfig::net() const {
    NetConfig nc;
    nc.channels = c;
    nc.phases = T;
    nc.features = N_f;
    nc.kernel_J = kernel_J;
    nc.kernel_G = kernel_G;
    nc.kernel_K = kernel_K;
    nc.apply_variant(variant);
    nc.alpha = alpha;
    nc.precision = precision;
    nc.validate();
    return nc;
}

SimConfig AppConfig::sim() const {
    SimConfig s;
    s.m = m;
    s.n = n;
    s.c = c;
    s.ratio = ratio;
    s.acs_lines = acs_lines;
    s.sigma = sigma;
    s.orientation = orientation;
    return s;
}

LossWeights AppConfig::weights() const {
    LossWeights w = LossWeights::defaults(loss);
    if (gamma) w.gamma = *gamma;
    if (eta) w.eta = *eta;
    if (beta) w.beta = *beta;
    w.validate();
    return w;
}

TrainConfig AppConfig::train() const {
    TrainConfig t;
    t.loss = loss;
    t.weights = weights();
    t.adam.lr = lr;
    t.adam.decay = decay;
    t.batch = batch;
    t.epochs = epochs;
    t.max_steps = max_steps;
    t.seed = seed;
    t.shuffle = shuffle;
    t.threads = threads;
    return t;
}

double AppConfig::grad_tol() const {
    if (tol) return *tol;
    return precision == Precision::f32 ? 1e-3 : 1e-5;
}

double AppConfig::costate_tolerance() const {
    if (costate_tol) return *costate_tol;
    return precision == Precision::f32 ? 1e-3 : 1e-6;
}

// --------------------------------------------------------------------- PGM

void write_pgm16(const fs::path& path, const RealImage& img, double scale) {
    if (!(scale > 0)) scale = 1.0;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "P5\n" << img.cols << ' ' << img.rows << "\n65535\n";
    std::vector<unsigned char> buf(img.size() * 2);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double x = std::clamp(img.data[i] / scale, 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(x * 65535.0));
        buf[2 * i] = static_cast<unsigned char>(q >> 8);
        buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw FormatError("write failed: " + path.string());
}

RealImage read_pgm16(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 65535 || !is) throw FormatError(path.string() + ": not a 16-bit P5 file");
    is.get();
    std::vector<unsigned char> buf(w * h * 2);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw FormatError(path.string() + ": truncated pixel data");
    RealImage img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data[i] = double((unsigned(buf[2 * i]) << 8) | buf[2 * i + 1]) / 65535.0;
    return img;
}

// ---------------------------------------------------------------- helpers

namespace {

RealImage reference_image(const Sample& s) {
    if (s.has_v()) return s.v_star;
    if (s.has_u()) return rss_combine(s.u_star);
    return {};
}

void check_compatible(const NetParams& net, const Sample& s, const fs::path& where) {
    if (s.coils() != net.config.channels)
        throw ShapeError(where.string() + ": sample has " + std::to_string(s.coils()) +
                         " coils but the checkpoint expects c = " + std::to_string(net.config.channels));
}

SsimOptions ssim_options_for(const RealImage& img) {
    SsimOptions o;
    if (img.rows < o.size || img.cols < o.size) o.window = SsimWindow::global;
    return o;
}

double max_of(const RealImage& img) {
    double mx = 0;
    for (double x : img.data) mx = std::max(mx, x);
    return mx;
}

}  // namespace

MetricReport evaluate_sample(const NetParams& net, const Sample& s) {
    const RealImage ref = reference_image(s);
    if (ref.data.empty()) throw ContractError("sample has neither u_star nor v_star; nothing to evaluate against");
    const Trajectory traj = forward(s.f, s.mask, net);
    const RealImage v = modulus(traj.v_final);
    MetricReport r;
    r.psnr = psnr(v, ref);
    r.ssim = ssim(v, ref, ssim_options_for(ref));
    r.rmse_image = rmse_image(v, ref);
    if (s.has_u()) r.rmse_multicoil = rmse_multicoil(traj.u.back(), s.u_star);
    return r;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const AppConfig& cfg, const fs::path& out, std::ostream& log) {
    const SimConfig sc = cfg.sim();
    fs::create_directories(out);
    std::ofstream manifest(out / "manifest.csv");
    if (!manifest) throw FormatError("cannot write " + (out / "manifest.csv").string());
    manifest << "sample_id,seed,m,n,c,ratio,sigma\n";
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const std::uint64_t seed = cfg.seed + i;
        const Sample s = make_sample(sc, seed);
        std::ostringstream id;
        id << "sample_" << std::setw(4) << std::setfill('0') << i;
        save_sample(s, out / id.str());
        manifest << id.str() << ',' << seed << ',' << s.rows() << ',' << s.cols() << ',' << s.coils() << ','
                 << fmt(s.mask.ratio()) << ',' << fmt(s.sigma) << '\n';
        log << id.str() << ": " << s.rows() << "x" << s.cols() << "x" << s.coils() << ", ratio "
            << std::setprecision(4) << s.mask.ratio() << ", seed " << seed << '\n';
    }
    cfg.to_kv().save(out / "config.txt", "simulation settings");
    return kExitOk;
}

// ------------------------------------------------------------------- train

int cmd_train(const AppConfig& cfg, const fs::path& data, const fs::path& out, std::ostream& log) {
    const auto dirs = list_samples(data);
    if (dirs.empty()) throw ContractError("no samples found under " + data.string());
    std::vector<Sample> dataset;
    for (const auto& d : dirs) dataset.push_back(load_sample(d));

    const NetConfig nc = cfg.net();
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (dataset[i].coils() != nc.channels)
            throw ShapeError(dirs[i].string() + ": sample has " + std::to_string(dataset[i].coils()) +
                             " coils but the network is configured for c = " + std::to_string(nc.channels));

    NetParams net = NetParams::xavier(nc, cfg.seed);
    for (auto& p : net.phases) p.rho = cplx(cfg.rho0);

    fs::create_directories(out);
    cfg.to_kv().save(out / "config.txt", "training settings");
    save_params(net, out / "checkpoint_init");
    save_params(net, out / "checkpoint");
    log << "network " << nc.variant_string() << ": T=" << nc.phases << " N_f=" << nc.features << ", "
        << net.scalar_count() << " real parameters, " << dataset.size() << " samples\n";

    TrainConfig tc = cfg.train();
    tc.validation = &dataset.front();
    std::vector<EpochRecord> history;
    const auto t0 = std::chrono::steady_clock::now();
    tc.on_epoch = [&](const EpochRecord& rec, const NetParams& current) {
        history.push_back(rec);
        save_params(current, out / "checkpoint");
        if (cfg.keep_checkpoints) {
            std::ostringstream name;
            name << "checkpoint_epoch_" << std::setw(4) << std::setfill('0') << rec.epoch;
            save_params(current, out / name.str());
        }
        write_history_csv(out / "history.csv", history, nc.phases);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log << "epoch " << rec.epoch << "  loss " << std::setprecision(6) << rec.loss << "  psnr";
        for (double p : rec.psnr_phase) log << ' ' << std::fixed << std::setprecision(2) << p << std::defaultfloat;
        log << "  (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << '\n';
    };
    if (cfg.epochs == 0) {
        write_history_csv(out / "history.csv", history, nc.phases);
        log << "epochs = 0: wrote the initial checkpoint only\n";
        return kExitOk;
    }
    try {
        const TrainResult res = train(dataset, std::move(net), tc);
        save_params(res.net, out / "checkpoint");
        log << "done after " << res.steps << " steps\n";
    } catch (const NonFiniteError& e) {
        write_history_csv(out / "history.csv", history, nc.phases);
        log << "training aborted: " << e.what() << '\n';
        return kExitError;
    }
    return kExitOk;
}

// ------------------------------------------------------------- reconstruct

int cmd_reconstruct(const fs::path& checkpoint, const fs::path& sample, const fs::path& out, std::ostream& log) {
    const NetParams net = load_params(checkpoint);
    const Sample s = load_sample(sample);
    check_compatible(net, s, sample);

    const Trajectory traj = forward(s.f, s.mask, net);
    const RealImage ref = reference_image(s);

    std::vector<RealImage> images;
    images.push_back(rss_combine(traj.u.front()));
    for (auto& img : phase_images(traj, net)) images.push_back(std::move(img));

    double scale = ref.data.empty() ? 0.0 : max_of(ref);
    if (!(scale > 0))
        for (const auto& img : images) scale = std::max(scale, max_of(img));

    fs::create_directories(out);
    std::ofstream csv(out / "phases.csv");
    if (!csv) throw FormatError("cannot write " + (out / "phases.csv").string());
    csv << "phase,psnr,ssim,rmse_image\n";
    log << "phase    psnr      ssim      rmse\n";
    for (std::size_t t = 0; t < images.size(); ++t) {
        std::ostringstream name;
        name << "phase_" << std::setw(2) << std::setfill('0') << t << ".pgm";
        write_pgm16(out / name.str(), images[t], scale);
        if (ref.data.empty()) {
            csv << t << ",nan,nan,nan\n";
            log << std::setw(5) << t << "  (no reference)\n";
            continue;
        }
        const double p = psnr_for_csv(psnr(images[t], ref));
        const double q = ssim(images[t], ref, ssim_options_for(ref));
        const double r = rmse_image(images[t], ref);
        csv << t << ',' << fmt_metric(p) << ',' << fmt_metric(q) << ',' << fmt_metric(r) << '\n';
        log << std::setw(5) << t << std::fixed << std::setprecision(3) << std::setw(9) << p << std::setw(10) << q
            << std::setw(10) << r << std::defaultfloat << '\n';
    }
    save_ctns(out / "u_final.ctns", traj.u.back());
    save_ctns(out / "v_final.ctns", traj.v_final);
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const fs::path& checkpoint, const fs::path& data, const fs::path& out_csv, std::ostream& log) {
    const NetParams net = load_params(checkpoint);
    auto dirs = list_samples(data);
    if (dirs.empty() && fs::exists(data / "meta")) dirs.push_back(data);
    if (dirs.empty()) throw ContractError("no samples found under " + data.string());

    std::vector<std::string> ids;
    std::vector<MetricReport> rows;
    for (const auto& d : dirs) {
        const Sample s = load_sample(d);
        check_compatible(net, s, d);
        ids.push_back(d.filename().string());
        rows.push_back(evaluate_sample(net, s));
    }

    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    std::ofstream os(out_csv);
    if (!os) throw FormatError("cannot write " + out_csv.string());
    os << "sample_id,psnr,ssim,rmse_image,rmse_multicoil\n";
    auto column = [&](auto get) {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(get(r));
        return v;
    };
    const std::vector<std::vector<double>> cols{
        column([](const MetricReport& r) { return psnr_for_csv(r.psnr); }),
        column([](const MetricReport& r) { return r.ssim; }),
        column([](const MetricReport& r) { return r.rmse_image; }),
        column([](const MetricReport& r) { return r.rmse_multicoil; })};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << ids[i];
        for (const auto& c : cols) os << ',' << fmt_metric(c[i]);
        os << '\n';
    }
    std::vector<double> mean, stdev;
    for (const auto& c : cols) {
        double s = 0;
        for (double x : c) s += x;
        const double mu = s / double(c.size());
        double ss = 0;
        for (double x : c) ss += (x - mu) * (x - mu);
        mean.push_back(mu);
        stdev.push_back(std::sqrt(ss / double(c.size())));
    }
    os << "mean";
    for (double x : mean) os << ',' << fmt_metric(x);
    os << "\nstd";
    for (double x : stdev) os << ',' << fmt_metric(x);
    os << '\n';

    log << rows.size() << " samples: psnr " << std::fixed << std::setprecision(2) << mean[0] << " dB, ssim "
        << std::setprecision(4) << mean[1] << ", rmse " << mean[2] << std::defaultfloat << '\n';
    return kExitOk;
}

// --------------------------------------------------------------- gradcheck

NetConfig gradcheck_config(const AppConfig& cfg, std::size_t& m, std::size_t& n) {
    AppConfig small = cfg;
    if (!cfg.is_set("m")) small.m = 16;
    if (!cfg.is_set("n")) small.n = 16;
    if (!cfg.is_set("c")) small.c = 2;
    if (!cfg.is_set("T")) small.T = 2;
    if (!cfg.is_set("N_f")) small.N_f = 8;
    const std::size_t volume = small.m * small.n * small.c * small.T;
    if (volume > 16 * 16 * 4 * 4 || small.N_f > 16)
        throw ContractError("gradcheck runs central differences over every sampled coordinate; keep m*n*c*T <= 4096 "
                            "and N_f <= 16 (got " + std::to_string(volume) + " and " + std::to_string(small.N_f) + ")");
    m = small.m;
    n = small.n;
    return small.net();
}

GradcheckSummary run_gradcheck(const NetConfig& config, std::size_t m, std::size_t n, const AppConfig& cfg) {
    GradcheckSummary out;
    const auto t0 = std::chrono::steady_clock::now();
    const LossWeights w = cfg.weights();
    out.passed = true;
    for (std::size_t k = 0; k < cfg.gc_seeds; ++k) {
        const std::uint64_t seed = cfg.seed + k;
        const CertInstance inst = make_certification_instance(config, m, n, seed);
        GradCheckOptions opt;
        opt.coords_per_block = cfg.coords_per_block;
        opt.seed = seed;
        Theorem1Report rep = check_theorem1(inst.sample, inst.net, cfg.loss, w, opt);
        out.max_rel_err = std::max(out.max_rel_err, rep.max_rel_err);
        out.max_costate_err = std::max(out.max_costate_err, rep.max_costate_err);
        if (!rep.passed(cfg.grad_tol(), cfg.costate_tolerance())) out.passed = false;
        out.reports.push_back(std::move(rep));
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

int cmd_gradcheck(const AppConfig& cfg, const fs::path& report, std::ostream& log) {
    std::size_t m = 0, n = 0;
    const NetConfig nc = gradcheck_config(cfg, m, n);
    const double tol = cfg.grad_tol(), ctol = cfg.costate_tolerance();
    log << "gradcheck " << nc.variant_string() << " (" << to_string(cfg.loss) << " loss, "
        << (nc.precision == Precision::f32 ? "f32" : "f64") << "): " << m << "x" << n << " c=" << nc.channels
        << " T=" << nc.phases << " N_f=" << nc.features << ", " << cfg.gc_seeds << " seeds, tol " << tol
        << ", costate tol " << ctol << '\n';

    const GradcheckSummary sum = run_gradcheck(nc, m, n, cfg);
    std::ofstream csv;
    if (!report.empty()) {
        if (report.has_parent_path()) fs::create_directories(report.parent_path());
        csv.open(report);
        if (!csv) throw FormatError("cannot write " + report.string());
        csv << "seed,block,rel_err,directional,checked,discarded,step\n";
    }
    for (std::size_t k = 0; k < sum.reports.size(); ++k) {
        const auto& r = sum.reports[k];
        const bool ok = r.passed(tol, ctol);
        log << "  seed " << cfg.seed + k << ": grad " << std::scientific << std::setprecision(2) << r.max_rel_err
            << "  costate " << r.max_costate_err << std::defaultfloat << "  " << (ok ? "ok" : "FAIL") << '\n';
        if (csv.is_open()) {
            for (const auto& b : r.blocks)
                csv << cfg.seed + k << ',' << b.name << ',' << fmt(b.rel_err) << ',' << fmt(b.directional) << ','
                    << b.checked << ',' << b.discarded << ',' << fmt(b.step) << '\n';
            for (std::size_t t = 0; t < r.costate_errors.size(); ++t)
                csv << cfg.seed + k << ",lambda_" << t << ',' << fmt(r.costate_errors[t]) << ",0,"
                    << r.costate_checked[t] << ",0,0\n";
        }
    }
    log << (sum.passed ? "PASS" : "FAIL") << ": max relative gradient error " << std::scientific
        << std::setprecision(3) << sum.max_rel_err << ", max costate error " << sum.max_costate_err
        << std::defaultfloat << " (" << std::fixed << std::setprecision(1) << sum.seconds << " s)"
        << std::defaultfloat << '\n';
    return sum.passed ? kExitOk : kExitCertFailed;
}

// ------------------------------------------------------------------ ablate

double zero_network_deviation(const NetConfig& config, const Sample& s) {
    const NetParams net = NetParams::zeros(config);
    const Trajectory traj = forward(s.f, s.mask, net);
    // residual of the zero image is -F^H f
    const ComplexTensor neg_zf = fidelity_residual(ComplexTensor::zeros(s.f.f.shape()), s.f, s.mask);
    const double scale = std::max(max_abs(neg_zf), 1e-300);
    double worst = 0;
    auto dev = [&](const ComplexTensor& u) {
        double d = 0;
        for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, std::abs(u[i] + neg_zf[i]));
        return d / scale;
    };
    for (const auto& u : traj.u) worst = std::max(worst, dev(u));
    for (const auto& u : traj.ubar) worst = std::max(worst, dev(u));
    return worst;
}

int cmd_ablate(const AppConfig& cfg, const fs::path& sample, const fs::path& out, std::ostream& log) {
    const Sample s = sample.empty() ? make_sample(cfg.sim(), cfg.seed) : load_sample(sample);
    if (!s.has_u() && !s.has_v()) throw ContractError("ablation sample has no reference");
    fs::create_directories(out);
    std::ofstream csv(out / "ablation.csv");
    if (!csv) throw FormatError("cannot write " + (out / "ablation.csv").string());
    csv << "variant,params,fixed_point_dev,gradcheck_max_rel_err,gradcheck_costate_err,gradcheck_pass,"
           "train_steps,loss_initial,loss_final,psnr_initial,psnr_final,ssim,rmse_image,rmse_multicoil,seconds\n";

    bool all_ok = true;
    for (const auto& variant : cfg.variants) {
        AppConfig vc = cfg;
        vc.variant = variant;
        vc.c = s.coils();
        vc.m = s.rows();
        vc.n = s.cols();
        const auto t0 = std::chrono::steady_clock::now();
        const NetConfig nc = vc.net();

        const double dev = zero_network_deviation(nc, s);

        AppConfig gc = cfg;
        gc.variant = variant;
        std::size_t gm = 0, gn = 0;
        const NetConfig gnc = gradcheck_config(gc, gm, gn);
        const GradcheckSummary g = run_gradcheck(gnc, gm, gn, gc);
        all_ok = all_ok && g.passed;

        NetParams net = NetParams::xavier(nc, cfg.seed);
        for (auto& p : net.phases) p.rho = cplx(cfg.rho0);
        TrainConfig tc = vc.train();
        tc.batch = 1;
        tc.shuffle = false;
        tc.epochs = cfg.ablate_steps;
        tc.max_steps = cfg.ablate_steps;
        const std::vector<Sample> data{s};
        const double psnr0 = psnr(modulus(forward(s.f, s.mask, net).v_final), reference_image(s));
        const std::size_t params = net.scalar_count();
        TrainResult res;
        try {
            res = train(data, std::move(net), tc);
        } catch (const NonFiniteError& e) {
            log << variant << ": training diverged: " << e.what() << '\n';
            all_ok = false;
            continue;
        }
        const MetricReport mr = evaluate_sample(res.net, s);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double loss0 = res.history.empty() ? 0.0 : res.history.front().loss;
        const double loss1 = sample_loss(res.net, s, vc.loss, vc.weights());

        csv << variant << ',' << params << ',' << fmt(dev) << ',' << fmt(g.max_rel_err) << ','
            << fmt(g.max_costate_err) << ',' << (g.passed ? 1 : 0) << ',' << res.steps << ',' << fmt(loss0) << ','
            << fmt(loss1) << ',' << fmt_metric(psnr_for_csv(psnr0)) << ',' << fmt_metric(psnr_for_csv(mr.psnr))
            << ',' << fmt_metric(mr.ssim) << ',' << fmt_metric(mr.rmse_image) << ',' << fmt_metric(mr.rmse_multicoil)
            << ',' << std::fixed << std::setprecision(1) << secs << std::defaultfloat << '\n';
        csv.flush();
        log << std::left << std::setw(22) << variant << std::right << " params " << std::setw(8) << params
            << "  fixed-point " << std::scientific << std::setprecision(1) << dev << "  grad " << g.max_rel_err
            << (g.passed ? " ok" : " FAIL") << std::fixed << std::setprecision(2) << "  psnr " << psnr_for_csv(psnr0)
            << " -> " << psnr_for_csv(mr.psnr) << " dB  (" << std::setprecision(1) << secs << " s)"
            << std::defaultfloat << '\n';
    }
    return all_ok ? kExitOk : kExitCertFailed;
}

}  // namespace pmri
