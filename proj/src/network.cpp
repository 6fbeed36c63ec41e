#include "pmri/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pmri/io.hpp"

namespace pmri {

constexpr double kNormEps = 1e-12;

// ------------------------------------------------------------------ config

void NetConfig::validate() const {
    if (channels == 0) throw ContractError("network: channel count must be positive");
    if (phases == 0) throw ContractError("network: T must be at least 1");
    if (features == 0) throw ContractError("network: N_f must be positive");
    for (auto k : {kernel_J, kernel_G, kernel_K})
        if (k == 0 || k % 2 == 0) throw ContractError("network: kernel sizes must be odd, got " + std::to_string(k));
    if (!(alpha >= 0.0)) throw ContractError("network: soft-shrink threshold must be nonnegative");
}

std::string NetConfig::variant_string() const {
    std::vector<std::string> parts;
    if (image_only) parts.emplace_back("ablation-image-only");
    if (rss_combine) parts.emplace_back("rss-combine");
    if (real_conv) parts.emplace_back("real-conv");
    if (!learned_init) parts.emplace_back("init-zf");
    if (parts.empty()) return "full";
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
    return out;
}

void NetConfig::apply_variant(const std::string& spec) {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
        if (item.empty()) continue;
        if (item == "full") {
            image_only = rss_combine = real_conv = false;
            learned_init = true;
        } else if (item == "ablation-image-only") {
            image_only = true;
        } else if (item == "rss-combine") {
            rss_combine = true;
        } else if (item == "real-conv") {
            real_conv = true;
        } else if (item == "init-zf") {
            learned_init = false;
        } else if (item == "init-k") {
            learned_init = true;
        } else {
            throw ContractError("unknown variant '" + item + "'");
        }
    }
}

// -------------------------------------------------------------- parameters

namespace {

ConvStack make_stack(const std::vector<std::size_t>& widths, std::size_t k) {
    ConvStack s;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) s.push_back(ConvKernel::zeros(k, k, widths[l], widths[l + 1]));
    return s;
}

MBank make_bank(const NetConfig& c) {
    const std::size_t nf = c.features, ch = c.channels;
    MBank bank;
    if (!c.rss_combine) bank.J = make_stack({ch, nf, nf, nf, 1}, c.kernel_J);
    bank.G = make_stack({1, nf, nf, nf}, c.kernel_G);
    bank.Gt = make_stack({nf, nf, nf, 1}, c.kernel_G);
    bank.Jt = make_stack({1, nf, nf, nf, ch}, c.kernel_J);
    return bank;
}

ConvStack make_kspace_stack(const NetConfig& c) {
    return make_stack({c.channels, c.features, c.features, c.features, c.channels}, c.kernel_K);
}

std::size_t stack_scalars(const ConvStack& s, bool real_only) {
    std::size_t n = 0;
    for (const auto& k : s) n += k.weights.size() + k.bias.size();
    return real_only ? n : 2 * n;
}

std::size_t bank_scalars(const MBank& b, bool real_only) {
    return stack_scalars(b.J, real_only) + stack_scalars(b.G, real_only) + stack_scalars(b.Gt, real_only) +
           stack_scalars(b.Jt, real_only);
}

void push_stack(std::vector<ParamRef>& out, ConvStack& s, const std::string& prefix, bool real_only) {
    for (std::size_t l = 0; l < s.size(); ++l) {
        auto& k = s[l];
        const std::string base = prefix + "_" + std::to_string(l);
        out.push_back({base + ".w", k.weights.data(), k.weights.size(), real_only, k.weights.shape()});
        out.push_back({base + ".b", k.bias.data(), k.bias.size(), real_only, k.bias.shape()});
    }
}

}  // namespace

NetParams NetParams::zeros(const NetConfig& config) {
    config.validate();
    NetParams net;
    net.config = config;
    if (config.learned_init) net.K0 = make_kspace_stack(config);
    for (std::size_t b = 0; b < config.bank_count(); ++b) net.banks.push_back(make_bank(config));
    for (std::size_t t = 1; t <= config.phases; ++t) {
        PhaseParams p;
        p.bank = config.bank_of(t);
        if (!config.image_only) p.K = make_kspace_stack(config);
        net.phases.push_back(std::move(p));
    }
    return net;
}

NetParams NetParams::zero_grads(const NetConfig& config) {
    NetParams net = zeros(config);
    for (auto& p : net.phases) p.rho = 0.0;
    return net;
}

NetParams NetParams::xavier(const NetConfig& config, std::uint64_t seed) {
    NetParams net = zeros(config);
    std::mt19937_64 rng(seed);
    for (auto& ref : param_refs(net)) {
        if (ref.shape.size() != 4) continue;  // biases and rho keep their defaults
        const double fan_in = static_cast<double>(ref.shape[0] * ref.shape[1] * ref.shape[2]);
        const double fan_out = static_cast<double>(ref.shape[0] * ref.shape[1] * ref.shape[3]);
        // total variance 2 / (fan_in + fan_out), split evenly over re/im for complex kernels
        const double limit = ref.real_only ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(3.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < ref.size; ++i) {
            const double re = dist(rng);
            const double im = ref.real_only ? 0.0 : dist(rng);
            ref.data[i] = cplx(re, im);
        }
    }
    return net;
}

std::size_t NetParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& ref : param_refs(*this)) n += ref.real_only ? ref.size : 2 * ref.size;
    return n;
}

std::size_t NetParams::unshared_scalar_count(const NetConfig& config) {
    const NetParams net = zeros(config);
    const std::size_t per_bank = bank_scalars(net.banks.front(), config.real_conv);
    return net.scalar_count() + (config.phases - config.bank_count()) * per_bank;
}

std::vector<ParamRef> param_refs(NetParams& net) {
    std::vector<ParamRef> out;
    const bool ro = net.config.real_conv;
    push_stack(out, net.K0, "theta0_K0", ro);
    std::vector<bool> listed(net.banks.size(), false);
    for (std::size_t t = 1; t <= net.phases.size(); ++t) {
        auto& phase = net.phases[t - 1];
        const std::string theta = "theta" + std::to_string(t);
        if (!listed[phase.bank]) {
            listed[phase.bank] = true;
            auto& bank = net.banks[phase.bank];
            push_stack(out, bank.J, theta + "_J", ro);
            push_stack(out, bank.G, theta + "_G", ro);
            push_stack(out, bank.Gt, theta + "_Gt", ro);
            push_stack(out, bank.Jt, theta + "_Jt", ro);
        }
        out.push_back({theta + "_rho", &phase.rho, 1, true, Shape{1}});
        push_stack(out, phase.K, theta + "_K", ro);
    }
    return out;
}

std::vector<ParamRef> param_refs(const NetParams& net) { return param_refs(const_cast<NetParams&>(net)); }

// ------------------------------------------------------------- conv stacks

ComplexTensor run_stack(const ConvStack& stack, const ComplexTensor& x, Precision p, StackCache* cache) {
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    ComplexTensor a = x;
    for (std::size_t l = 0; l < stack.size(); ++l) {
        ComplexTensor z = cconv2d(a, stack[l], p);
        if (cache) cache->inputs.push_back(std::move(a));
        if (l + 1 == stack.size()) return z;
        a = crelu(z);
        if (cache) cache->pre.push_back(std::move(z));
    }
    return a;
}

ComplexTensor stack_vjp(const ConvStack& stack, const StackCache& cache, const ComplexTensor& g, ConvStack& grads,
                        Precision p, bool need_input) {
    if (cache.inputs.size() != stack.size() || grads.size() != stack.size())
        throw ContractError("stack_vjp: cache/gradient structure does not match the stack");
    ComplexTensor gz = g;
    for (std::size_t l = stack.size(); l-- > 0;) {
        if (l + 1 < stack.size()) gz = crelu_vjp(cache.pre[l], gz);
        auto cg = cconv2d_vjp(cache.inputs[l], stack[l], gz, p, l > 0 || need_input);
        grads[l].weights += cg.kernel.weights;
        grads[l].bias += cg.kernel.bias;
        gz = std::move(cg.input);
    }
    return gz;
}

// --------------------------------------------------------------- operators

ComplexTensor op_combine_J(const ComplexTensor& x, const ConvStack& J, Precision p, StackCache* cache) {
    if (J.empty()) throw ContractError("op_combine_J: empty combination operator");
    if (x.rank() != 3 || x.dim(2) != J.front().cin())
        throw ShapeError("op_combine_J: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(J.front().cin()) + " input channels");
    return run_stack(J, x, p, cache);
}

RealImage rss_combine(const ComplexTensor& u) {
    if (u.rank() != 3) throw ShapeError("rss_combine: expected (m, n, c), got " + shape_str(u.shape()));
    const std::size_t c = u.dim(2);
    RealImage out(u.dim(0), u.dim(1));
    for (std::size_t p = 0; p < out.size(); ++p) {
        double acc = 0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += std::norm(u[p * c + ch]);
        out.data[p] = std::sqrt(acc);
    }
    return out;
}

ComplexTensor rss_vjp(const ComplexTensor& u, const RealImage& g) {
    const RealImage r = rss_combine(u);
    if (g.rows != r.rows || g.cols != r.cols) throw ShapeError("rss_vjp: cotangent shape mismatch");
    const std::size_t c = u.dim(2);
    ComplexTensor out(u.shape());
    for (std::size_t p = 0; p < r.size(); ++p) {
        const double s = g.data[p] / std::max(r.data[p], kNormEps);
        for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = s * u[p * c + ch];
    }
    return out;
}

namespace {

// RSS image lifted to a complex single channel: r (1 + i)
ComplexTensor lift_rss(const ComplexTensor& b) {
    const RealImage r = rss_combine(b);
    ComplexTensor z({r.rows, r.cols, 1});
    for (std::size_t p = 0; p < r.size(); ++p) z[p] = cplx(r.data[p], r.data[p]);
    return z;
}

ComplexTensor lift_rss_vjp(const ComplexTensor& b, const ComplexTensor& gz) {
    RealImage g(b.dim(0), b.dim(1));
    for (std::size_t p = 0; p < g.size(); ++p) g.data[p] = gz[p].real() + gz[p].imag();
    return rss_vjp(b, g);
}

void check_state(const ComplexTensor& u, const NetConfig& c, const char* what) {
    if (u.rank() != 3 || u.dim(2) != c.channels)
        throw ShapeError(std::string(what) + ": state " + shape_str(u.shape()) + " does not have " +
                         std::to_string(c.channels) + " channels");
}

ComplexTensor m_vjp(const MCache& cache, const ComplexTensor& b, const ComplexTensor& g, const MBank& bank,
                    MBank& gbank, const NetConfig& config, double alpha) {
    const Precision p = config.precision;
    ComplexTensor gd = stack_vjp(bank.Jt, cache.Jt, g, gbank.Jt, p);
    ComplexTensor gs = stack_vjp(bank.Gt, cache.Gt, gd, gbank.Gt, p);
    ComplexTensor gf = soft_shrink_vjp(cache.features, alpha, gs);
    ComplexTensor gz = stack_vjp(bank.G, cache.G, gf, gbank.G, p);
    if (config.rss_combine) return lift_rss_vjp(b, gz);
    return stack_vjp(bank.J, cache.J, gz, gbank.J, p);
}

}  // namespace

ComplexTensor op_M(const ComplexTensor& b, const MBank& bank, const NetConfig& config, double alpha, MCache* cache) {
    check_state(b, config, "op_M");
    const Precision p = config.precision;
    MCache local;
    MCache& c = cache ? *cache : local;
    c.combined = config.rss_combine ? lift_rss(b) : run_stack(bank.J, b, p, &c.J);
    c.features = run_stack(bank.G, c.combined, p, &c.G);
    const ComplexTensor shrunk = soft_shrink(c.features, alpha);
    const ComplexTensor d = run_stack(bank.Gt, shrunk, p, &c.Gt);
    return run_stack(bank.Jt, d, p, &c.Jt);
}

ComplexTensor op_kspace_refine(const ComplexTensor& ubar, const ConvStack& K, Precision p, StackCache* cache) {
    if (K.empty()) return ubar;
    if (ubar.rank() != 3 || ubar.dim(2) != K.front().cin())
        throw ShapeError("op_kspace_refine: input " + shape_str(ubar.shape()) + " does not match K");
    ComplexTensor out = ubar;
    out += idft2(run_stack(K, dft2(ubar, p), p, cache), p);
    return out;
}

PhaseOutput phase_g(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask, const NetParams& net,
                    std::size_t t, PhaseCache* cache) {
    const NetConfig& c = net.config;
    check_state(u, c, "phase_g");
    const PhaseParams& th = net.phases.at(t - 1);
    const MBank& bank = net.bank_for(t);
    PhaseCache local;
    PhaseCache& pc = cache ? *cache : local;

    pc.residual = fidelity_residual(u, f, mask, c.precision);
    PhaseOutput out;
    out.b = u;
    out.b.axpy(-th.step(), pc.residual);
    quantize(out.b, c.precision);
    out.ubar = out.b + op_M(out.b, bank, c, 0.0, &pc.m);
    out.u_next = op_kspace_refine(out.ubar, th.K, c.precision, &pc.K);
    return out;
}

ComplexTensor phase_ablation(const ComplexTensor& u, const KSpaceData& f, const SamplingMask& mask,
                             const NetParams& net, std::size_t t, double alpha, PhaseCache* cache) {
    const NetConfig& c = net.config;
    check_state(u, c, "phase_ablation");
    const PhaseParams& th = net.phases.at(t - 1);
    PhaseCache local;
    PhaseCache& pc = cache ? *cache : local;
    pc.residual = fidelity_residual(u, f, mask, c.precision);
    ComplexTensor b = u;
    b.axpy(-th.step(), pc.residual);
    quantize(b, c.precision);
    return b + op_M(b, net.bank_for(t), c, alpha, &pc.m);
}

ComplexTensor init_g0(const KSpaceData& f, const NetParams& net, StackCache* cache) {
    check_state(f.f, net.config, "init_g0");
    const Precision p = net.config.precision;
    if (net.K0.empty()) return idft2(f.f, p);
    ComplexTensor y = f.f;
    y += run_stack(net.K0, f.f, p, cache);
    return idft2(y, p);
}

namespace {

void finish(Trajectory& tr, const NetParams& net) {
    const NetConfig& c = net.config;
    const ComplexTensor& last = tr.ubar[c.phases - 1];
    if (c.rss_combine) {
        tr.v_final = to_tensor(rss_combine(last));
        tr.final_combine = {};
    } else {
        tr.v_final = op_combine_J(last, net.bank_for(c.phases).J, c.precision, &tr.final_combine);
    }
}

void run_phases(Trajectory& tr, std::size_t from, const KSpaceData& f, const SamplingMask& mask,
                const NetParams& net) {
    const NetConfig& c = net.config;
    for (std::size_t t = from + 1; t <= c.phases; ++t) {
        PhaseCache& pc = tr.cache[t - 1];
        if (c.image_only) {
            ComplexTensor next = phase_ablation(tr.u[t - 1], f, mask, net, t, c.alpha, &pc);
            tr.b[t - 1] = tr.u[t - 1];
            tr.b[t - 1].axpy(-net.phases[t - 1].step(), pc.residual);
            quantize(tr.b[t - 1], c.precision);
            tr.ubar[t - 1] = next;
            tr.u[t] = std::move(next);
        } else {
            PhaseOutput out = phase_g(tr.u[t - 1], f, mask, net, t, &pc);
            tr.b[t - 1] = std::move(out.b);
            tr.ubar[t - 1] = std::move(out.ubar);
            tr.u[t] = std::move(out.u_next);
        }
    }
    finish(tr, net);
}

}  // namespace

Trajectory forward(const KSpaceData& f, const SamplingMask& mask, const NetParams& net) {
    const NetConfig& c = net.config;
    c.validate();
    check_state(f.f, c, "forward");
    Trajectory tr;
    tr.u.resize(c.phases + 1);
    tr.b.resize(c.phases);
    tr.ubar.resize(c.phases);
    tr.cache.resize(c.phases);
    tr.u[0] = init_g0(f, net, &tr.init);
    run_phases(tr, 0, f, mask, net);
    return tr;
}

Trajectory forward_from(const Trajectory& prefix, std::size_t t0, const ComplexTensor& u_t0, const KSpaceData& f,
                        const SamplingMask& mask, const NetParams& net) {
    if (t0 >= prefix.u.size()) throw ContractError("forward_from: phase index out of range");
    Trajectory tr = prefix;
    require_same_shape(tr.u[t0], u_t0, "forward_from");
    tr.u[t0] = u_t0;
    if (t0 < net.config.phases) {
        run_phases(tr, t0, f, mask, net);
    } else {
        // u(T) feeds the final combination directly when ubar(T) is u(T)
        if (net.config.image_only) tr.ubar[t0 - 1] = u_t0;
        finish(tr, net);
    }
    return tr;
}

std::vector<RealImage> phase_images(const Trajectory& traj, const NetParams& net) {
    std::vector<RealImage> out;
    for (std::size_t t = 1; t <= traj.phases(); ++t) {
        if (net.config.rss_combine)
            out.push_back(rss_combine(traj.ubar[t - 1]));
        else
            out.push_back(modulus(op_combine_J(traj.ubar[t - 1], net.bank_for(t).J, net.config.precision)));
    }
    return out;
}

// --------------------------------------------------------------------- VJPs

ComplexTensor final_combine_vjp(const Trajectory& traj, const ComplexTensor& g_v, const NetParams& net,
                                NetParams& grads) {
    const NetConfig& c = net.config;
    const ComplexTensor& last = traj.ubar.at(c.phases - 1);
    if (c.rss_combine) return rss_vjp(last, real_part(g_v));
    const std::size_t bank = net.phases[c.phases - 1].bank;
    return stack_vjp(net.banks[bank].J, traj.final_combine, g_v, grads.banks[bank].J, c.precision);
}

ComplexTensor phase_vjp(const Trajectory& traj, std::size_t t, const ComplexTensor& g_out,
                        const ComplexTensor* g_ubar_extra, const KSpaceData& f, const SamplingMask& mask,
                        const NetParams& net, NetParams& grads) {
    (void)f;
    const NetConfig& c = net.config;
    const Precision p = c.precision;
    const PhaseParams& th = net.phases.at(t - 1);
    const PhaseCache& pc = traj.cache.at(t - 1);
    const MBank& bank = net.banks[th.bank];
    MBank& gbank = grads.banks[th.bank];

    ComplexTensor g_ubar = g_out;
    if (!c.image_only) {
        ConvStack& gK = grads.phases[t - 1].K;
        g_ubar += idft2(stack_vjp(th.K, pc.K, dft2(g_out, p), gK, p), p);
    }
    if (g_ubar_extra) g_ubar += *g_ubar_extra;

    const double alpha = c.image_only ? c.alpha : 0.0;
    ComplexTensor g_b = g_ubar;
    g_b += m_vjp(pc.m, traj.b[t - 1], g_ubar, bank, gbank, c, alpha);

    grads.phases[t - 1].rho += -real_inner(g_b, pc.residual);
    ComplexTensor g_u = g_b;
    g_u.axpy(-th.step(), normal_operator(g_b, mask, p));
    return g_u;
}

void init_vjp(const Trajectory& traj, const ComplexTensor& g_u0, const KSpaceData& f, const NetParams& net,
              NetParams& grads) {
    (void)f;
    if (net.K0.empty()) return;
    const Precision p = net.config.precision;
    stack_vjp(net.K0, traj.init, dft2(g_u0, p), grads.K0, p, false);
}

// --------------------------------------------------------------- kink guard

namespace {

template <class Fn>
void for_each_activation(const Trajectory& traj, double alpha, Fn&& fn) {
    auto stack = [&](const StackCache& s) {
        for (const auto& z : s.pre)
            for (const auto& v : z.values()) {
                fn(v.real(), 0.0);
                fn(v.imag(), 0.0);
            }
    };
    stack(traj.init);
    for (const auto& pc : traj.cache) {
        stack(pc.m.J);
        stack(pc.m.G);
        stack(pc.m.Gt);
        stack(pc.m.Jt);
        stack(pc.K);
        if (alpha > 0.0)
            for (const auto& v : pc.m.features.values()) {
                fn(std::abs(v.real()), alpha);
                fn(std::abs(v.imag()), alpha);
            }
    }
    stack(traj.final_combine);
}

}  // namespace

double activation_margin(const Trajectory& traj, double alpha) {
    double margin = std::numeric_limits<double>::infinity();
    for_each_activation(traj, alpha, [&](double v, double kink) { margin = std::min(margin, std::abs(v - kink)); });
    return margin;
}

std::vector<std::uint8_t> activation_pattern(const Trajectory& traj, double alpha) {
    std::vector<std::uint8_t> bits;
    for_each_activation(traj, alpha, [&](double v, double kink) { bits.push_back(v > kink ? 1 : 0); });
    return bits;
}

// -------------------------------------------------------------- persistence

void save_params(const NetParams& net, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const NetConfig& c = net.config;
    KeyValueFile kv;
    kv.set("format", "1");
    kv.set("T", std::to_string(c.phases));
    kv.set("N_f", std::to_string(c.features));
    kv.set("c", std::to_string(c.channels));
    kv.set("kernel_J", std::to_string(c.kernel_J));
    kv.set("kernel_G", std::to_string(c.kernel_G));
    kv.set("kernel_K", std::to_string(c.kernel_K));
    kv.set("variant", c.variant_string());
    std::ostringstream alpha;
    alpha.precision(17);
    alpha << c.alpha;
    kv.set("alpha", alpha.str());
    kv.set("precision", c.precision == Precision::f32 ? "f32" : "f64");
    for (const auto& ref : param_refs(net)) {
        const std::string file = ref.name + ".ctns";
        kv.set(file, format_shape(ref.shape));
        save_ctns(dir / file, ComplexTensor(ref.shape, std::vector<cplx>(ref.data, ref.data + ref.size)));
    }
    kv.save(dir / "params.txt", "unrolled pMRI network parameters");
}

NetParams load_params(const std::filesystem::path& dir) {
    const auto kv = KeyValueFile::load(dir / "params.txt");
    if (kv.get("format") != "1") throw FormatError((dir / "params.txt").string() + ": unsupported format");
    NetConfig c;
    c.phases = kv.get_size("T");
    c.features = kv.get_size("N_f");
    c.channels = kv.get_size("c");
    c.kernel_J = kv.get_size("kernel_J");
    c.kernel_G = kv.get_size("kernel_G");
    c.kernel_K = kv.get_size("kernel_K");
    c.apply_variant(kv.get("variant"));
    c.alpha = kv.get_double("alpha");
    const auto& prec = kv.get("precision");
    if (prec != "f32" && prec != "f64") throw FormatError("params.txt: bad precision '" + prec + "'");
    c.precision = prec == "f32" ? Precision::f32 : Precision::f64;
    try {
        c.validate();
    } catch (const ContractError& e) {
        throw FormatError((dir / "params.txt").string() + ": " + e.what());
    }
    NetParams net = NetParams::zeros(c);
    for (auto& ref : param_refs(net)) {
        const std::string file = ref.name + ".ctns";
        if (!kv.has(file)) throw FormatError((dir / "params.txt").string() + ": missing entry for " + file);
        const ComplexTensor t = load_ctns(dir / file);
        if (t.shape() != ref.shape)
            throw FormatError(file + ": shape " + shape_str(t.shape()) + " does not match expected " +
                              shape_str(ref.shape));
        std::copy(t.data(), t.data() + ref.size, ref.data);
    }
    return net;
}

}  // namespace pmri
