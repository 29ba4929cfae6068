#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "biomark/anova.hpp"
#include "biomark/classifiers.hpp"
#include "biomark/dsp.hpp"
#include "biomark/error.hpp"
#include "biomark/experiment.hpp"
#include "biomark/metrics.hpp"
#include "biomark/relieff.hpp"
#include "biomark/synth.hpp"

namespace py = pybind11;
using namespace biomark;

namespace {

py::dict stats_dict(const StatBlock& s) {
    py::dict d;
    d["acc"] = s.acc;
    d["sens"] = s.sens;
    d["spec"] = s.spec;
    d["auc"] = s.auc;
    return d;
}

dsp::FilterKind filter_kind(const std::string& s) {
    if (s == "lowpass") return dsp::FilterKind::Lowpass;
    if (s == "highpass") return dsp::FilterKind::Highpass;
    if (s == "bandstop") return dsp::FilterKind::Bandstop;
    throw ValidationError("unknown filter kind '" + s + "' (lowpass, highpass or bandstop)");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "biomark core bindings";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", numerical.ptr());

    m.def("roc_auc", [](const std::vector<int>& y, const std::vector<double>& s) { return roc_auc(y, s); },
          py::arg("labels"), py::arg("scores"), "Mann-Whitney AUC with half credit for ties.");

    m.def("compute_metrics",
          [](const std::vector<int>& y, const std::vector<double>& s, double threshold) {
              return stats_dict(compute_metrics(y, s, threshold));
          },
          py::arg("labels"), py::arg("scores"), py::arg("threshold") = 0.5);

    m.def("relieff_rank",
          [](const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t neighbors) {
              relieff::ReliefFConfig cfg;
              cfg.neighbors = neighbors;
              const auto r = relieff::relieff_rank(x, y, cfg);
              return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(r.scores.data(), static_cast<Eigen::Index>(r.scores.size())));
          },
          py::arg("x"), py::arg("y"), py::arg("neighbors") = 10);

    m.def("glmnet_fit_path",
          [](const Eigen::MatrixXd& x, const std::vector<int>& y, double alpha, std::size_t n_lambda, double lambda_min_ratio,
             bool stop_on_saturation) {
              classify::GlmnetOptions o;
              o.alpha = alpha;
              o.n_lambda = n_lambda;
              o.lambda_min_ratio = lambda_min_ratio;
              o.stop_on_saturation = stop_on_saturation;
              const auto p = classify::glmnet_fit_path(x, y, o);
              py::dict d;
              d["lambdas"] = p.lambdas;
              d["intercepts"] = p.intercepts;
              d["betas"] = p.betas;
              d["deviance_ratio"] = p.deviance_ratio;
              d["saturated"] = p.saturated;
              return d;
          },
          py::arg("x"), py::arg("y"), py::arg("alpha") = 1.0, py::arg("n_lambda") = 100, py::arg("lambda_min_ratio") = 1e-4,
          py::arg("stop_on_saturation") = true,
          "Penalized logistic regression path; betas is p x L on the original feature scale.");

    m.def("butterworth_magnitude",
          [](const std::string& kind, int order, const std::vector<double>& cutoffs, double fs, const std::vector<double>& freqs) {
              const auto f = dsp::design_butterworth(filter_kind(kind), order, cutoffs, fs);
              std::vector<double> out;
              for (double v : freqs) out.push_back(f.magnitude(v));
              return out;
          },
          py::arg("kind"), py::arg("order"), py::arg("cutoffs"), py::arg("fs"), py::arg("freqs"));

    m.def("band_relative_power",
          [](const std::vector<double>& signal, double fs, double epoch_seconds) {
              const auto bands = dsp::default_bands();
              const Eigen::MatrixXd rel = dsp::band_relative_power(dsp::epoch_signal(signal, fs, epoch_seconds), bands);
              py::dict d;
              for (std::size_t b = 0; b < bands.size(); ++b) d[py::str(bands[b].name)] = rel(0, static_cast<Eigen::Index>(b));
              return d;
          },
          py::arg("signal"), py::arg("fs"), py::arg("epoch_seconds") = 1.0,
          "Relative power of one channel in the default bands.");

    m.def("studentized_range_cdf", &stats::studentized_range_cdf, py::arg("q"), py::arg("k"), py::arg("df"));
    m.def("studentized_range_critical", &stats::studentized_range_critical, py::arg("alpha"), py::arg("k"), py::arg("df"));

    m.def("write_synth",
          [](const std::filesystem::path& out, std::size_t rows, std::size_t positives, std::size_t informative, std::size_t noise,
             double effect_size, double site_shift, const std::string& modality, std::uint64_t seed) {
              synth::SynthConfig c;
              c.rows = rows;
              c.positives = positives;
              c.informative = informative;
              c.noise = noise;
              c.effect_size = effect_size;
              c.site_shift = site_shift;
              c.modality = parse_modality(modality);
              c.seed = seed;
              const auto r = synth::synth_dataset(c);
              synth::write_synth(r, out);
              return r.truth.informative;
          },
          py::arg("out"), py::arg("rows") = 324, py::arg("positives") = 158, py::arg("informative") = 5, py::arg("noise") = 200,
          py::arg("effect_size") = 1.0, py::arg("site_shift") = 0.0, py::arg("modality") = "MAG", py::arg("seed") = 0,
          "Writes a synthetic dataset and returns the informative column names.");

    m.def("run_experiment",
          [](const std::filesystem::path& manifest, std::optional<std::filesystem::path> output_dir, std::size_t jobs) {
              auto man = experiment::parse_manifest(manifest);
              if (output_dir) man.output_dir = *output_dir;
              if (man.output_dir.empty()) man.output_dir = manifest.parent_path() / "out";
              experiment::GridOutcome o;
              {
                  py::gil_scoped_release release;
                  o = experiment::run_experiment_grid(man, {.jobs = jobs, .stop_after = std::nullopt, .log = {}});
              }
              py::dict d;
              d["computed"] = o.computed;
              d["skipped"] = o.skipped;
              py::dict failures;
              for (const auto& f : o.failures) failures[py::str(f.config_id)] = f.message;
              d["failures"] = failures;
              d["output_dir"] = man.output_dir;
              return d;
          },
          py::arg("manifest"), py::arg("output_dir") = py::none(), py::arg("jobs") = 1);
}
