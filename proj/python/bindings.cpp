#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pmri/app.hpp"
#include "pmri/metrics.hpp"
#include "pmri/ops.hpp"

namespace py = pybind11;
using namespace pmri;

using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

ComplexTensor to_tensor(const CArray& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected a 2-D or 3-D complex array");
    Shape s(a.shape(), a.shape() + a.ndim());
    return ComplexTensor(s, std::vector<cplx>(a.data(), a.data() + a.size()));
}

CArray to_array(const ComplexTensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    CArray out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

RealImage to_image(const RArray& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D real array");
    RealImage img(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

RArray to_array(const RealImage& img) {
    RArray out({py::ssize_t(img.rows), py::ssize_t(img.cols)});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

py::dict sample_dict(const Sample& s) {
    py::dict d;
    d["f"] = to_array(s.f.f);
    d["mask"] = to_array(s.mask.image());
    if (s.has_u()) d["u_star"] = to_array(s.u_star);
    if (s.has_v()) d["v_star"] = to_array(s.v_star);
    d["seed"] = s.seed;
    d["sigma"] = s.sigma;
    return d;
}

Sample sample_from(const CArray& f, const RArray& mask, std::optional<CArray> u_star, std::optional<RArray> v_star) {
    Sample s;
    s.f.f = to_tensor(f);
    s.mask = SamplingMask(to_image(mask));
    if (u_star) s.u_star = to_tensor(*u_star);
    if (v_star) s.v_star = to_image(*v_star);
    s.validate();
    return s;
}

AppConfig config_from(const py::dict& settings) {
    AppConfig cfg;
    for (auto item : settings) cfg.set(py::str(item.first), py::str(item.second));
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "unrolled calibration-free parallel MRI reconstruction";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

    m.def("dft2", [](const CArray& x) { return to_array(dft2(to_tensor(x))); }, "unitary 2-D DFT over the leading axes");
    m.def("idft2", [](const CArray& x) { return to_array(idft2(to_tensor(x))); });

    m.def("phantom", [](std::size_t rows, std::size_t cols) { return to_array(phantom(rows, cols)); });
    m.def("cartesian_mask",
          [](std::size_t rows, std::size_t cols, double ratio, std::optional<std::size_t> acs, const std::string& orient) {
              const auto o = orient == "rows" ? LineOrientation::rows : LineOrientation::columns;
              const std::size_t extent = o == LineOrientation::columns ? cols : rows;
              return to_array(cartesian_mask(rows, cols, ratio, acs.value_or(default_acs_lines(extent)), o).image());
          },
          py::arg("rows"), py::arg("cols"), py::arg("ratio") = 0.3156, py::arg("acs_lines") = py::none(),
          py::arg("orientation") = "columns");

    m.def("make_sample",
          [](const py::dict& settings, std::uint64_t seed) { return sample_dict(make_sample(config_from(settings).sim(), seed)); },
          py::arg("settings") = py::dict(), py::arg("seed") = 0,
          "simulate one sample; settings use the config-file keys (m, n, c, ratio, sigma, ...)");
    m.def("load_sample", [](const std::string& dir) { return sample_dict(load_sample(dir)); });

    m.def("rss", [](const CArray& u) { return to_array(rss_combine(to_tensor(u))); });
    m.def("psnr", [](const RArray& v, const RArray& ref) { return psnr(to_image(v), to_image(ref)); });
    m.def("ssim", [](const RArray& v, const RArray& ref) { return ssim(to_image(v), to_image(ref)); });
    m.def("rmse_image", [](const RArray& v, const RArray& ref) { return rmse_image(to_image(v), to_image(ref)); });
    m.def("rmse_multicoil", [](const CArray& u, const CArray& ref) { return rmse_multicoil(to_tensor(u), to_tensor(ref)); });

    py::class_<NetParams>(m, "Network")
        .def_static("xavier",
                    [](const py::dict& settings, std::uint64_t seed) { return NetParams::xavier(config_from(settings).net(), seed); },
                    py::arg("settings") = py::dict(), py::arg("seed") = 0)
        .def_static("zeros", [](const py::dict& settings) { return NetParams::zeros(config_from(settings).net()); },
                    py::arg("settings") = py::dict())
        .def_static("load", [](const std::string& dir) { return load_params(dir); })
        .def("save", [](const NetParams& n, const std::string& dir) { save_params(n, dir); })
        .def_property_readonly("phases", [](const NetParams& n) { return n.config.phases; })
        .def_property_readonly("variant", [](const NetParams& n) { return n.config.variant_string(); })
        .def_property_readonly("scalar_count", &NetParams::scalar_count)
        .def_property_readonly("unshared_scalar_count",
                               [](const NetParams& n) { return NetParams::unshared_scalar_count(n.config); })
        .def("parameters",
             [](const NetParams& n) {
                 py::dict d;
                 for (const auto& r : param_refs(n))
                     d[py::str(r.name)] = to_array(ComplexTensor(r.shape, std::vector<cplx>(r.data, r.data + r.size)));
                 return d;
             })
        .def("forward",
             [](const NetParams& n, const CArray& f, const RArray& mask) {
                 const Trajectory tr = forward(KSpaceData{to_tensor(f)}, SamplingMask(to_image(mask)), n);
                 py::list u;
                 for (const auto& x : tr.u) u.append(to_array(x));
                 py::list images;
                 for (const auto& img : phase_images(tr, n)) images.append(to_array(img));
                 py::dict d;
                 d["u"] = u;
                 d["phase_images"] = images;
                 d["v_final"] = to_array(tr.v_final);
                 return d;
             },
             py::arg("f"), py::arg("mask"))
        .def("loss",
             [](const NetParams& n, const py::dict& s, const std::string& kind) {
                 const Sample smp = sample_from(s["f"].cast<CArray>(), s["mask"].cast<RArray>(),
                                                s.contains("u_star") ? std::optional(s["u_star"].cast<CArray>()) : std::nullopt,
                                                s.contains("v_star") ? std::optional(s["v_star"].cast<RArray>()) : std::nullopt);
                 const LossKind k = parse_loss_kind(kind);
                 return sample_loss(n, smp, k, LossWeights::defaults(k));
             },
             py::arg("sample"), py::arg("loss") = "main");

    m.def("gradcheck",
          [](const py::dict& settings) {
              const AppConfig cfg = config_from(settings);
              std::size_t rows = 0, cols = 0;
              const NetConfig nc = gradcheck_config(cfg, rows, cols);
              const GradcheckSummary s = run_gradcheck(nc, rows, cols, cfg);
              py::dict d;
              d["passed"] = s.passed;
              d["max_rel_err"] = s.max_rel_err;
              d["max_costate_err"] = s.max_costate_err;
              d["seeds"] = s.reports.size();
              d["seconds"] = s.seconds;
              return d;
          },
          py::arg("settings") = py::dict(), "finite-difference certification of the MLM gradients");
}
