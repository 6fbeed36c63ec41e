#include "pmri/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "pmri/metrics.hpp"

namespace pmri {

constexpr double kNormEps = 1e-12;

LossKind parse_loss_kind(const std::string& s) {
    if (s == "main") return LossKind::main;
    if (s == "coil") return LossKind::coil;
    if (s == "body") return LossKind::body;
    throw ContractError("unknown loss kind '" + s + "' (expected main, coil or body)");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::main: return "main";
        case LossKind::coil: return "coil";
        case LossKind::body: return "body";
    }
    return "?";
}

LossWeights LossWeights::defaults(LossKind k) {
    if (k == LossKind::main) return {1e-3, 1e-4, 0.0};
    return {1.0, 0.0, 1e-3};
}

void LossWeights::validate() const {
    if (!(gamma >= 0 && eta >= 0 && beta >= 0)) throw ContractError("loss weights must be nonnegative");
}

// ------------------------------------------------------------------ losses

namespace {

// weight * || u_ch - ref_ch || summed over channels
double per_channel_norm(const ComplexTensor& u, const ComplexTensor& ref, double weight, ComplexTensor* g) {
    require_same_shape(u, ref, "loss");
    const std::size_t c = u.dim(2), pixels = u.size() / c;
    double total = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double ss = 0;
        for (std::size_t p = 0; p < pixels; ++p) ss += std::norm(u[p * c + ch] - ref[p * c + ch]);
        const double nrm = std::sqrt(ss);
        total += weight * nrm;
        if (g) {
            const double s = weight / std::max(nrm, kNormEps);
            for (std::size_t p = 0; p < pixels; ++p) (*g)[p * c + ch] += s * (u[p * c + ch] - ref[p * c + ch]);
        }
    }
    return total;
}

// weight * || |v| - r || for a single-channel v
double modulus_norm(const ComplexTensor& v, const RealImage& r, double weight, ComplexTensor* g) {
    if (v.size() != r.size()) throw ShapeError("loss: combined image does not match the reference");
    double ss = 0;
    for (std::size_t p = 0; p < r.size(); ++p) {
        const double d = std::abs(v[p]) - r.data[p];
        ss += d * d;
    }
    const double nrm = std::sqrt(ss);
    if (g) {
        const double s = weight / std::max(nrm, kNormEps);
        for (std::size_t p = 0; p < r.size(); ++p) {
            const double mag = std::abs(v[p]);
            (*g)[p] += s * (mag - r.data[p]) / std::max(mag, kNormEps) * v[p];
        }
    }
    return weight * nrm;
}

// weight * || RSS(u) - r ||
double rss_norm(const ComplexTensor& u, const RealImage& r, double weight, ComplexTensor* g) {
    const RealImage q = rss_combine(u);
    if (q.size() != r.size()) throw ShapeError("loss: RSS image does not match the reference");
    RealImage d(q.rows, q.cols);
    double ss = 0;
    for (std::size_t p = 0; p < q.size(); ++p) {
        d.data[p] = q.data[p] - r.data[p];
        ss += d.data[p] * d.data[p];
    }
    const double nrm = std::sqrt(ss);
    if (g) {
        const double s = weight / std::max(nrm, kNormEps);
        for (auto& x : d.data) x *= s;
        *g += rss_vjp(u, d);
    }
    return weight * nrm;
}

// weight * sum_ch || |u_ch| - |ref_ch| ||
double per_channel_modulus(const ComplexTensor& u, const ComplexTensor& ref, double weight, ComplexTensor* g) {
    require_same_shape(u, ref, "loss");
    const std::size_t c = u.dim(2), pixels = u.size() / c;
    double total = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double ss = 0;
        for (std::size_t p = 0; p < pixels; ++p) {
            const double d = std::abs(u[p * c + ch]) - std::abs(ref[p * c + ch]);
            ss += d * d;
        }
        const double nrm = std::sqrt(ss);
        total += weight * nrm;
        if (g) {
            const double s = weight / std::max(nrm, kNormEps);
            for (std::size_t p = 0; p < pixels; ++p) {
                const cplx z = u[p * c + ch];
                const double mag = std::abs(z);
                (*g)[p * c + ch] += s * (mag - std::abs(ref[p * c + ch])) / std::max(mag, kNormEps) * z;
            }
        }
    }
    return total;
}

ComplexTensor* slot(ComplexTensor& t, const Shape& shape, bool need, double weight) {
    if (!need || weight == 0.0) return nullptr;
    if (t.empty()) t = ComplexTensor(shape);
    return &t;
}

}  // namespace

LossEval evaluate_loss(const Trajectory& traj, const Sample& s, LossKind kind, const LossWeights& w, bool need_grad) {
    w.validate();
    if (traj.phases() == 0 || traj.v_final.empty()) throw ContractError("loss: incomplete trajectory");
    const std::size_t T = traj.phases();
    const ComplexTensor& uT = traj.u[T];
    LossEval out;
    auto g_uT = [&](double wt) { return slot(out.g_uT, uT.shape(), need_grad, wt); };

    if (kind == LossKind::main || kind == LossKind::coil) {
        if (!s.has_u()) throw ContractError("loss " + to_string(kind) + " needs a multi-coil reference u*");
        const RealImage ref = rss_combine(s.u_star);
        out.value += per_channel_norm(uT, s.u_star, w.gamma, g_uT(w.gamma));
        out.value += modulus_norm(traj.v_final, ref, 1.0, slot(out.g_v, traj.v_final.shape(), need_grad, 1.0));
        if (kind == LossKind::main)
            out.value += rss_norm(traj.ubar[T - 1], ref, w.eta, slot(out.g_ubar, uT.shape(), need_grad, w.eta));
        else
            out.value += per_channel_modulus(traj.u[0], s.u_star, w.beta, slot(out.g_u0, uT.shape(), need_grad, w.beta));
    } else {
        if (!s.has_v()) throw ContractError("loss body needs a body-image reference v*");
        out.value += rss_norm(uT, s.v_star, w.gamma, g_uT(w.gamma));
        out.value += modulus_norm(traj.v_final, s.v_star, 1.0, slot(out.g_v, traj.v_final.shape(), need_grad, 1.0));
        out.value += rss_norm(traj.u[0], s.v_star, w.beta, slot(out.g_u0, uT.shape(), need_grad, w.beta));
    }
    return out;
}

namespace {
Sample with_u(const ComplexTensor& u_star) {
    Sample s;
    s.u_star = u_star;
    return s;
}
Sample with_v(const RealImage& v_star) {
    Sample s;
    s.v_star = v_star;
    return s;
}
}  // namespace

double loss_main(const Trajectory& traj, const ComplexTensor& u_star, const LossWeights& w) {
    return evaluate_loss(traj, with_u(u_star), LossKind::main, w, false).value;
}

double loss_coil(const Trajectory& traj, const ComplexTensor& u_star, const LossWeights& w) {
    return evaluate_loss(traj, with_u(u_star), LossKind::coil, w, false).value;
}

double loss_body(const Trajectory& traj, const RealImage& v_star, const LossWeights& w) {
    return evaluate_loss(traj, with_v(v_star), LossKind::body, w, false).value;
}

// ------------------------------------------------------------ costate pass

Backward mlm_backward(const Trajectory& traj, const NetParams& net, const Sample& s, LossKind kind,
                      const LossWeights& w) {
    const NetConfig& c = net.config;
    const std::size_t T = c.phases;
    if (traj.phases() != T || traj.u.size() != T + 1)
        throw ContractError("mlm_backward: trajectory has " + std::to_string(traj.phases()) + " phases, network has " +
                            std::to_string(T));
    const LossEval L = evaluate_loss(traj, s, kind, w, true);
    Backward out;
    out.loss = L.value;
    out.grads = NetParams::zero_grads(c);
    out.costates.lambda.resize(T + 1);

    // loss cotangent at ubar(T): through the final combination plus the RSS term
    ComplexTensor g_ubar = final_combine_vjp(traj, L.g_v, net, out.grads);
    if (!L.g_ubar.empty()) g_ubar += L.g_ubar;

    ComplexTensor g = L.g_uT.empty() ? ComplexTensor(traj.u[T].shape()) : L.g_uT;
    const ComplexTensor* extra = &g_ubar;
    if (c.image_only) {
        // ubar(T) is u(T) itself
        g += g_ubar;
        extra = nullptr;
    }
    out.costates.lambda[T] = -1.0 * g;
    for (std::size_t t = T; t >= 1; --t) {
        g = phase_vjp(traj, t, g, t == T ? extra : nullptr, s.f, s.mask, net, out.grads);
        if (t == 1 && !L.g_u0.empty()) g += L.g_u0;
        out.costates.lambda[t - 1] = -1.0 * g;
    }
    init_vjp(traj, g, s.f, net, out.grads);

    for (auto& ref : param_refs(out.grads))
        if (ref.real_only)
            for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = ref.data[i].real();
    return out;
}

double sample_loss(const NetParams& net, const Sample& s, LossKind kind, const LossWeights& w) {
    return evaluate_loss(forward(s.f, s.mask, net), s, kind, w, false).value;
}

NetParams finite_diff_grad(const Sample& s, const NetParams& net, LossKind kind, const LossWeights& w, double h) {
    if (!(h > 0)) throw ContractError("finite_diff_grad: step must be positive");
    NetParams probe = net;
    NetParams grads = NetParams::zero_grads(net.config);
    auto prefs = param_refs(probe);
    auto grefs = param_refs(grads);
    for (std::size_t b = 0; b < prefs.size(); ++b)
        for (std::size_t i = 0; i < prefs[b].size; ++i)
            for (int part = 0; part < (prefs[b].real_only ? 1 : 2); ++part) {
                const cplx saved = prefs[b].data[i];
                const cplx e = part == 0 ? cplx(h, 0) : cplx(0, h);
                prefs[b].data[i] = saved + e;
                const double lp = sample_loss(probe, s, kind, w);
                prefs[b].data[i] = saved - e;
                const double lm = sample_loss(probe, s, kind, w);
                prefs[b].data[i] = saved;
                const double d = (lp - lm) / (2 * h);
                grefs[b].data[i] += part == 0 ? cplx(d, 0) : cplx(0, d);
            }
    return grads;
}

// ------------------------------------------------- gradient certification

namespace {

double part_of(cplx z, int part) { return part == 0 ? z.real() : z.imag(); }

struct Scalar {
    std::size_t index;
    int part;
};

// argmax of |grad| plus `count` further distinct random scalars of a block
std::vector<Scalar> pick_scalars(const ParamRef& g, std::size_t count, std::mt19937_64& rng) {
    const int parts = g.real_only ? 1 : 2;
    const std::size_t total = g.size * parts;
    std::vector<Scalar> out;
    if (count == 0 || count + 1 >= total) {
        for (std::size_t k = 0; k < total; ++k) out.push_back({k / parts, int(k % parts)});
        return out;
    }
    std::size_t best = 0;
    double best_v = -1;
    for (std::size_t k = 0; k < total; ++k) {
        const double v = std::abs(part_of(g.data[k / parts], int(k % parts)));
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    std::vector<std::size_t> chosen{best};
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    while (chosen.size() < count + 1) {
        const std::size_t k = pick(rng);
        if (std::find(chosen.begin(), chosen.end(), k) == chosen.end()) chosen.push_back(k);
    }
    for (auto k : chosen) out.push_back({k / parts, int(k % parts)});
    return out;
}

}  // namespace

namespace {

struct Difference {
    double value = 0;
    double step = 0;
    double floor = 0;  // round-off resolution of the difference at this step
    bool kink = false;
};

// Central difference that widens its step (up to 100x) while the round-off
// floor eps |L| / h is not small next to the derivative itself. A wider step
// that crosses a kink falls back to the last clean one.
template <class Fn>
Difference adaptive_difference(double h, double loss, Fn&& central) {
    Difference d;
    d.step = h;
    d.value = central(h, d.kink);
    if (d.kink) return d;
    for (double step = 10 * h; step <= 100 * h * (1 + 1e-9); step *= 10) {
        const double floor = 64 * std::numeric_limits<double>::epsilon() * std::abs(loss) / d.step;
        if (floor <= 1e-3 * std::abs(d.value)) break;
        bool kink = false;
        const double v = central(step, kink);
        if (kink) break;
        d.value = v;
        d.step = step;
    }
    d.floor = 64 * std::numeric_limits<double>::epsilon() * std::abs(loss) / d.step;
    return d;
}

}  // namespace

Theorem1Report check_theorem1(const Sample& s, const NetParams& net, LossKind kind, const LossWeights& w,
                              const GradCheckOptions& opt) {
    const double h = opt.h;
    const double alpha = net.config.image_only ? net.config.alpha : 0.0;
    const Trajectory traj = forward(s.f, s.mask, net);
    Backward bw = mlm_backward(traj, net, s, kind, w);

    NetParams oracle = net;
    oracle.config.precision = Precision::f64;
    const Trajectory base = forward(s.f, s.mask, oracle);
    const auto pattern0 = activation_pattern(base, alpha);
    const double base_loss = evaluate_loss(base, s, kind, w, false).value;

    Theorem1Report report;
    report.loss = bw.loss;
    std::mt19937_64 rng(opt.seed);

    auto loss_of = [&](const Trajectory& tr, bool& kink) {
        kink = activation_pattern(tr, alpha) != pattern0;
        return evaluate_loss(tr, s, kind, w, false).value;
    };
    // a block named theta<t>_... first acts in phase t, so u(0 .. t-1) can be reused
    std::size_t first_phase = 0;
    auto loss_at = [&](bool& kink) {
        if (first_phase == 0) return loss_of(forward(s.f, s.mask, oracle), kink);
        return loss_of(forward_from(base, first_phase - 1, base.u[first_phase - 1], s.f, s.mask, oracle), kink);
    };

    auto orefs = param_refs(oracle);
    auto grefs = param_refs(bw.grads);
    for (std::size_t b = 0; b < orefs.size(); ++b) {
        auto& o = orefs[b];
        const auto& g = grefs[b];
        BlockError be;
        be.name = o.name;
        first_phase = std::stoul(o.name.substr(5, o.name.find('_') - 5));

        double g_inf = 0, g_two = 0;
        for (std::size_t i = 0; i < g.size; ++i) {
            g_inf = std::max({g_inf, std::abs(g.data[i].real()), std::abs(g.data[i].imag())});
            g_two += std::norm(g.data[i]);
        }
        g_two = std::sqrt(g_two);

        // a gradient that is zero by structure (rho_1 under init-zf) leaves both sides at round-off,
        // so a block whose analytic and difference values stay under the resolution counts as agreeing
        double worst = 0, scale = g_inf, resolution = 0;
        for (const auto& sc : pick_scalars(g, opt.coords_per_block, rng)) {
            const cplx saved = o.data[sc.index];
            const cplx unit = sc.part == 0 ? cplx(1, 0) : cplx(0, 1);
            const Difference d = adaptive_difference(h, base_loss, [&](double step, bool& kink) {
                bool kp = false, km = false;
                o.data[sc.index] = saved + step * unit;
                const double lp = loss_at(kp);
                o.data[sc.index] = saved - step * unit;
                const double lm = loss_at(km);
                o.data[sc.index] = saved;
                kink = kp || km;
                return (lp - lm) / (2 * step);
            });
            if (d.kink) {
                ++be.discarded;
                continue;
            }
            be.step = std::max(be.step, d.step);
            resolution = std::max(resolution, d.floor);
            worst = std::max(worst, std::abs(d.value - part_of(g.data[sc.index], sc.part)));
            scale = std::max(scale, std::abs(d.value));
            ++be.checked;
        }
        be.rel_err = scale < kNormEps || scale <= resolution ? 0.0 : worst / scale;

        // whole-block directional derivative along a random unit direction
        std::normal_distribution<double> nd;
        std::vector<cplx> dir(o.size);
        double dn = 0;
        for (auto& d : dir) {
            d = cplx(nd(rng), o.real_only ? 0.0 : nd(rng));
            dn += std::norm(d);
        }
        dn = std::sqrt(dn);
        double an = 0;
        for (std::size_t i = 0; i < o.size; ++i) {
            dir[i] /= dn;
            an += dir[i].real() * g.data[i].real() + dir[i].imag() * g.data[i].imag();
        }
        const std::vector<cplx> saved(o.data, o.data + o.size);
        const Difference d = adaptive_difference(h, base_loss, [&](double step, bool& kink) {
            bool kp = false, km = false;
            for (std::size_t i = 0; i < o.size; ++i) o.data[i] = saved[i] + step * dir[i];
            const double lp = loss_at(kp);
            for (std::size_t i = 0; i < o.size; ++i) o.data[i] = saved[i] - step * dir[i];
            const double lm = loss_at(km);
            std::copy(saved.begin(), saved.end(), o.data);
            kink = kp || km;
            return (lp - lm) / (2 * step);
        });
        if (!d.kink) {
            const double denom = std::max(g_two, std::abs(d.value));
            be.directional = denom < kNormEps || denom <= d.floor ? 0.0 : std::abs(d.value - an) / denom;
        }
        report.max_rel_err = std::max({report.max_rel_err, be.rel_err, be.directional});
        report.blocks.push_back(std::move(be));
    }

    // costates: lambda(t) = -d loss / d u(t) by replaying phases t+1 .. T
    for (std::size_t t = 0; t < bw.costates.lambda.size(); ++t) {
        const ComplexTensor& lam = bw.costates.lambda[t];
        double lam_inf = 0;
        for (const auto& v : lam.values()) lam_inf = std::max({lam_inf, std::abs(v.real()), std::abs(v.imag())});
        ComplexTensor lam_ref = lam;
        ParamRef view{"lambda", lam_ref.data(), lam_ref.size(), false, lam_ref.shape()};
        double worst = 0;
        std::size_t checked = 0;
        for (const auto& sc : pick_scalars(view, opt.costate_entries, rng)) {
            for (double hc = opt.costate_h; hc >= opt.costate_h * 1e-2; hc /= 10) {
                const cplx e = sc.part == 0 ? cplx(hc, 0) : cplx(0, hc);
                bool kink = false;
                auto at = [&](double k) {
                    ComplexTensor u = base.u[t];
                    u[sc.index] += k * e;
                    bool kk = false;
                    const double l = loss_of(forward_from(base, t, u, s.f, s.mask, oracle), kk);
                    kink = kink || kk;
                    return l;
                };
                const double fd = (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * hc);
                if (kink) continue;
                worst = std::max(worst, std::abs(fd + part_of(lam[sc.index], sc.part)));
                ++checked;
                break;
            }
        }
        report.costate_checked.push_back(checked);
        const double err = lam_inf < kNormEps ? worst : worst / lam_inf;
        report.costate_errors.push_back(err);
        report.max_costate_err = std::max(report.max_costate_err, err);
    }
    return report;
}

CertInstance make_certification_instance(const NetConfig& config, std::size_t m, std::size_t n, std::uint64_t seed,
                                         double margin) {
    config.validate();
    const double alpha = config.image_only ? config.alpha : 0.0;
    for (std::size_t attempt = 0; attempt < 512; ++attempt) {
        std::mt19937_64 rng(seed * 1000003ULL + attempt);
        std::normal_distribution<double> nd;
        std::uniform_real_distribution<double> ud(-0.05, 0.05), step(0.5, 1.5);

        CertInstance inst;
        inst.redraws = attempt;
        Sample& s = inst.sample;
        s.seed = seed;
        s.u_star = ComplexTensor({m, n, config.channels});
        for (auto& v : s.u_star.values()) v = cplx(nd(rng), nd(rng));
        s.v_star = rss_combine(s.u_star);
        RealImage mask(m, n);
        for (auto& v : mask.data) v = ud(rng) < 0.01 ? 1.0 : 0.0;  // about 60 %
        mask.data[0] = 1.0;
        s.mask = SamplingMask(mask);
        s.f = encode(s.u_star, s.mask);

        inst.net = NetParams::xavier(config, rng());
        for (auto& ref : param_refs(inst.net)) {
            if (ref.name.ends_with("_rho")) {
                ref.data[0] = step(rng);
            } else if (ref.name.ends_with(".b")) {
                for (std::size_t i = 0; i < ref.size; ++i) {
                    const double re = ud(rng);
                    const double im = ref.real_only ? 0.0 : ud(rng);
                    ref.data[i] = cplx(re, im);
                }
            }
        }
        if (activation_margin(forward(s.f, s.mask, inst.net), alpha) >= margin) return inst;
    }
    throw ContractError("make_certification_instance: could not draw a kink-free instance");
}

// ---------------------------------------------------------------- optimizer

double AdamState::current_lr() const { return cfg.lr * std::pow(cfg.decay, double(epoch)); }

void adam_step(NetParams& net, const NetParams& grads, AdamState& st) {
    if (!(net.config == grads.config)) throw ShapeError("adam_step: gradient layout does not match the network");
    auto prefs = param_refs(net);
    auto grefs = param_refs(grads);
    std::size_t scalars = 0;
    for (std::size_t b = 0; b < prefs.size(); ++b) {
        if (prefs[b].shape != grefs[b].shape) throw ShapeError("adam_step: block " + prefs[b].name + " shape mismatch");
        scalars += prefs[b].real_only ? prefs[b].size : 2 * prefs[b].size;
    }
    if (st.m.empty()) {
        st.m.assign(scalars, 0.0);
        st.v.assign(scalars, 0.0);
    }
    if (st.m.size() != scalars) throw ShapeError("adam_step: optimizer state does not match the network");

    ++st.step;
    const auto& c = st.cfg;
    const double lr = st.current_lr();
    const double bc1 = 1.0 - std::pow(c.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(c.beta2, double(st.step));
    std::size_t k = 0;
    auto update = [&](double& theta, double g) {
        double& m = st.m[k];
        double& v = st.v[k];
        ++k;
        m = c.beta1 * m + (1 - c.beta1) * g;
        v = c.beta2 * v + (1 - c.beta2) * g * g;
        theta -= lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
    };
    for (std::size_t b = 0; b < prefs.size(); ++b)
        for (std::size_t i = 0; i < prefs[b].size; ++i) {
            double re = prefs[b].data[i].real(), im = prefs[b].data[i].imag();
            update(re, grefs[b].data[i].real());
            if (!prefs[b].real_only) update(im, grefs[b].data[i].imag());
            prefs[b].data[i] = cplx(re, im);
        }
}

// ----------------------------------------------------------- training loop

std::vector<double> phase_psnr(const NetParams& net, const Sample& s) {
    const RealImage ref = s.has_v() ? s.v_star : rss_combine(s.u_star);
    const Trajectory traj = forward(s.f, s.mask, net);
    std::vector<double> out;
    for (const auto& img : phase_images(traj, net)) out.push_back(psnr(img, ref));
    return out;
}

namespace {

void check_finite(const Backward& bw, const Trajectory& traj, std::size_t epoch, std::size_t batch) {
    const std::string where = " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")";
    for (std::size_t t = 0; t < traj.u.size(); ++t)
        if (!all_finite(traj.u[t])) throw NonFiniteError("non-finite state u(" + std::to_string(t) + ")" + where);
    if (!all_finite(traj.v_final)) throw NonFiniteError("non-finite combined image v_final" + where);
    if (!std::isfinite(bw.loss)) throw NonFiniteError("non-finite loss" + where);
    for (const auto& ref : param_refs(bw.grads))
        for (std::size_t i = 0; i < ref.size; ++i)
            if (!std::isfinite(ref.data[i].real()) || !std::isfinite(ref.data[i].imag()))
                throw NonFiniteError("non-finite gradient in " + ref.name + where);
}

void accumulate(NetParams& acc, const NetParams& g, double scale) {
    auto a = param_refs(acc);
    auto b = param_refs(g);
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size; ++i) a[k].data[i] += scale * b[k].data[i];
}

}  // namespace

TrainResult train(const std::vector<Sample>& dataset, NetParams init, const TrainConfig& cfg) {
    if (dataset.empty()) throw ContractError("train: dataset is empty");
    if (cfg.batch == 0) throw ContractError("train: batch size must be positive");
    cfg.weights.validate();
    for (const auto& s : dataset) {
        s.validate();
        if (s.coils() != init.config.channels)
            throw ShapeError("train: sample has " + std::to_string(s.coils()) + " coils, network expects " +
                             std::to_string(init.config.channels));
    }

    TrainResult res;
    res.net = std::move(init);
    AdamState st(cfg.adam);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t threads = std::max<std::size_t>(1, cfg.threads);

    bool done = false;
    for (std::size_t e = 0; e < cfg.epochs && !done; ++e) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t seen = 0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch, ++batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            std::vector<Backward> parts(count);
            auto work = [&](std::size_t lane) {
                for (std::size_t i = lane; i < count; i += threads) {
                    const Sample& s = dataset[order[start + i]];
                    const Trajectory traj = forward(s.f, s.mask, res.net);
                    parts[i] = mlm_backward(traj, res.net, s, cfg.loss, cfg.weights);
                    check_finite(parts[i], traj, e, batch);
                }
            };
            if (threads == 1 || count == 1) {
                work(0);
            } else {
                std::vector<std::exception_ptr> errors(threads);
                std::vector<std::thread> pool;
                for (std::size_t lane = 0; lane < std::min(threads, count); ++lane)
                    pool.emplace_back([&, lane] {
                        try {
                            work(lane);
                        } catch (...) {
                            errors[lane] = std::current_exception();
                        }
                    });
                for (auto& th : pool) th.join();
                for (auto& err : errors)
                    if (err) std::rethrow_exception(err);
            }
            // ordered reduction keeps the result independent of the thread count
            NetParams mean = NetParams::zero_grads(res.net.config);
            for (const auto& p : parts) {
                accumulate(mean, p.grads, 1.0 / double(count));
                loss_sum += p.loss;
            }
            seen += count;
            adam_step(res.net, mean, st);
            ++res.steps;
            if (cfg.max_steps && res.steps >= cfg.max_steps) {
                done = true;
                break;
            }
        }
        ++st.epoch;
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.loss = loss_sum / double(seen);
        if (cfg.validation) rec.psnr_phase = phase_psnr(res.net, *cfg.validation);
        res.history.push_back(rec);
        if (cfg.on_epoch) cfg.on_epoch(rec, res.net);
        if (cfg.stop && cfg.stop(rec)) done = true;
    }
    return res;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       std::size_t phases) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "epoch,loss";
    for (std::size_t t = 1; t <= phases; ++t) os << ",psnr_phase" << t;
    os << '\n';
    os.precision(10);
    for (const auto& r : history) {
        os << r.epoch << ',' << r.loss;
        for (std::size_t t = 0; t < phases; ++t) {
            os << ',';
            if (t < r.psnr_phase.size()) os << psnr_for_csv(r.psnr_phase[t]);
        }
        os << '\n';
    }
    if (!os) throw FormatError("write failed: " + path.string());
}

}  // namespace pmri
