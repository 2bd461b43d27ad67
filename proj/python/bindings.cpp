#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "clincon/cli.hpp"
#include "clincon/errors.hpp"
#include "clincon/experiments.hpp"
#include "clincon/losses.hpp"
#include "clincon/metrics.hpp"
#include "clincon/pipeline.hpp"
#include "clincon/synthetic.hpp"
#include "clincon/theory.hpp"

namespace py = pybind11;
using namespace clincon;
using nlohmann::json;

namespace {

// Configuration crosses the boundary as JSON text; the Python side dumps dicts.
RunConfig run_config(const std::string& text) { return run_config_from_json(text.empty() ? json::object() : json::parse(text)); }

std::vector<std::size_t> default_twins(Eigen::Index rows) {
  const auto n2 = static_cast<std::size_t>(rows);
  std::vector<std::size_t> t(n2);
  for (std::size_t i = 0; i < n2; ++i) t[i] = i < n2 / 2 ? i + n2 / 2 : i - n2 / 2;
  return t;
}

py::tuple as_tuple(const LossResult& r) { return py::make_tuple(r.value, r.grad); }

// pybind11 holders cannot be pointers to const; the core only ever sees const.
using EncoderPtr = std::shared_ptr<EncoderState>;

EncoderPtr held(std::shared_ptr<const EncoderState> p) { return std::const_pointer_cast<EncoderState>(std::move(p)); }

}  // namespace

PYBIND11_MODULE(_clincon, m) {
  m.doc() = "Clinically supervised contrastive learning core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // --- data -----------------------------------------------------------------
  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("payload_dim", &Dataset::payload_dim)
      .def_property_readonly("ids", [](const Dataset& d) {
        std::vector<std::string> ids;
        for (const auto& s : d.samples()) ids.push_back(s.id);
        return ids;
      })
      .def_property_readonly("eye_ids", [](const Dataset& d) {
        std::vector<std::string> ids;
        for (const auto& s : d.samples()) ids.push_back(s.clinical.eye_id);
        return ids;
      })
      .def_property_readonly("payloads", [](const Dataset& d) { return payload_matrix(d); })
      .def("clinical", [](const Dataset& d, const std::string& key) {
        std::vector<double> out;
        for (const auto& s : d.samples()) {
          const auto v = clinical_value(s.clinical, key);
          if (!v || !std::holds_alternative<double>(*v)) throw DataError("clinical key '" + key + "' is not numeric");
          out.push_back(std::get<double>(*v));
        }
        return out;
      });

  m.def("load_manifest", &load_manifest, py::arg("path"));
  m.def("write_manifest", &write_manifest, py::arg("dataset"), py::arg("directory"));
  m.def(
      "generate_cohort",
      [](const std::string& config_json) {
        Cohort c = generate_cohort(cohort_config_from_json(json::parse(config_json)));
        return py::make_tuple(std::move(c.dataset), to_json(c.truth).dump());
      },
      py::arg("config_json"));
  m.def(
      "split_by_identity",
      [](const Dataset& ds, const std::string& key, std::size_t holdout, std::uint64_t seed) {
        Split s = split_by_identity(ds, parse_identity_key(key), holdout, seed);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      },
      py::arg("dataset"), py::arg("key"), py::arg("holdout"), py::arg("seed"));

  // --- losses ---------------------------------------------------------------
  m.def(
      "normalize", [](const Eigen::MatrixXd& x) { return normalize(x).unit; }, py::arg("x"));
  m.def(
      "info_nce", [](const Eigen::MatrixXd& z, double tau) { return as_tuple(info_nce(z, default_twins(z.rows()), tau)); },
      py::arg("z"), py::arg("tau"));
  m.def(
      "clinical_supcon",
      [](const Eigen::MatrixXd& z, const std::vector<Label>& labels, double tau) {
        return as_tuple(clinical_supcon(z, positive_mask(labels), tau));
      },
      py::arg("z"), py::arg("labels"), py::arg("tau"));
  m.def(
      "combined_clinical",
      [](const Eigen::MatrixXd& z, const std::vector<std::vector<Label>>& labels, const std::vector<double>& weights,
         double tau) {
        if (labels.size() != weights.size()) throw ConfigError("one weight per label vector is required");
        std::vector<WeightedMask> masks;
        for (std::size_t i = 0; i < labels.size(); ++i) masks.push_back({positive_mask(labels[i]), weights[i]});
        return as_tuple(combined_clinical(z, masks, tau));
      },
      py::arg("z"), py::arg("labels"), py::arg("weights"), py::arg("tau"));
  m.def(
      "cross_entropy",
      [](const Eigen::MatrixXd& logits, const std::vector<int>& labels) { return as_tuple(cross_entropy(logits, labels)); },
      py::arg("logits"), py::arg("labels"));
  m.def(
      "bce_multilabel",
      [](const Eigen::MatrixXd& logits, const Eigen::MatrixXd& t) { return as_tuple(bce_multilabel(logits, t)); },
      py::arg("logits"), py::arg("targets"));
  m.def(
      "distillation_loss",
      [](const Eigen::MatrixXd& s, const Eigen::MatrixXd& t, double temperature) {
        return as_tuple(distillation_loss(s, t, temperature));
      },
      py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature"));
  m.def(
      "parse_loss_spec", [](const std::string& text, double tau) { return parse_loss_spec(text, tau).to_string(); },
      py::arg("text"), py::arg("temperature") = 0.07);

  // --- training -------------------------------------------------------------
  py::class_<EncoderState, EncoderPtr>(m, "Encoder")
      .def_property_readonly("checksum", [](const EncoderState& e) { return encoder_checksum(e); })
      .def_property_readonly("input_dim", [](const EncoderState& e) { return e.input_dim; })
      .def_property_readonly("loss", [](const EncoderState& e) { return e.loss; })
      .def("encode", [](const EncoderState& e, const Eigen::MatrixXd& x) { return encode(e, x); })
      .def("project", [](const EncoderState& e, const Eigen::MatrixXd& x) { return project(e, x); })
      .def("save", [](const EncoderState& e, const std::filesystem::path& p) { save_encoder(e, p); });

  py::class_<ClassifierState>(m, "Classifier")
      .def_property_readonly("encoder", [](const ClassifierState& c) { return held(c.encoder); })
      .def_property_readonly("target", [](const ClassifierState& c) { return c.target.to_string(); })
      .def("predict", [](const ClassifierState& c, const Dataset& d) { return predict(c, d); })
      .def("save", [](const ClassifierState& c, const std::filesystem::path& p) { save_classifier(c, p); });

  m.def(
      "init_encoder",
      [](std::size_t input_dim, const std::string& cfg, std::uint64_t seed) {
        return std::make_shared<EncoderState>(init_encoder(input_dim, run_config(cfg).encoder, seed));
      },
      py::arg("input_dim"), py::arg("config_json") = "", py::arg("seed") = 0);
  m.def(
      "load_encoder", [](const std::filesystem::path& p) { return std::make_shared<EncoderState>(load_encoder(p)); },
      py::arg("path"));
  m.def("load_classifier", &load_classifier, py::arg("path"));
  m.def(
      "pretrain",
      [](const Dataset& train, const std::string& loss, const std::string& cfg, std::uint64_t seed) {
        const RunConfig rc = run_config(cfg);
        PretrainOptions po;
        po.augment = rc.augment;
        py::gil_scoped_release release;
        return std::make_shared<EncoderState>(pretrain_contrastive(
            train, parse_loss_spec(loss, rc.hyper.temperature), rc.hyper, rc.encoder, seed, po));
      },
      py::arg("train"), py::arg("loss"), py::arg("config_json") = "", py::arg("seed") = 0);
  m.def(
      "probe",
      [](EncoderPtr enc, const Dataset& labeled, const std::string& target, const std::string& cfg,
         std::uint64_t seed) {
        const RunConfig rc = run_config(cfg);
        py::gil_scoped_release release;
        return train_linear_probe(std::move(enc), labeled, Target::parse(target), rc.hyper, seed);
      },
      py::arg("encoder"), py::arg("labeled"), py::arg("target"), py::arg("config_json") = "", py::arg("seed") = 0);
  m.def(
      "distill",
      [](const ClassifierState& teacher, const Dataset& labeled, const Dataset& unlabeled, double temperature,
         const std::string& cfg, std::uint64_t seed) {
        const RunConfig rc = run_config(cfg);
        py::gil_scoped_release release;
        return distill(teacher, labeled, unlabeled, temperature, rc.hyper, seed);
      },
      py::arg("teacher"), py::arg("labeled"), py::arg("unlabeled"), py::arg("temperature") = 1.0,
      py::arg("config_json") = "", py::arg("seed") = 0);
  m.def(
      "evaluate",
      [](const ClassifierState& model, const Dataset& test, std::uint64_t seed) {
        return to_json(evaluate_classifier(model, test, seed)).dump();
      },
      py::arg("model"), py::arg("test"), py::arg("seed") = 0);

  // --- metrics --------------------------------------------------------------
  m.def(
      "auroc", [](const std::vector<double>& s, const std::vector<int>& y) { return auroc(s, y); }, py::arg("scores"),
      py::arg("labels"));
  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b, double alpha) {
        const TTestResult r = paired_t_test(a, b, alpha);
        py::dict d;
        d["t"] = r.t;
        d["df"] = r.df;
        d["p"] = r.p;
        d["significant"] = r.significant;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 0.05);

  // --- theory ---------------------------------------------------------------
  m.def(
      "collision_probability",
      [](std::size_t classes, double eps) {
        const LatentTask t = sample_latent_task(classes, {}, 2, 0.5, 0);
        return collision_probability(t, make_clinical_proxy(t, eps));
      },
      py::arg("classes"), py::arg("eps"));
  m.def(
      "decompose_loss",
      [](std::size_t classes, double eps, std::size_t dim, double sigma, std::size_t out_dim, std::size_t n_pairs,
         double tau, std::uint64_t seed) {
        const LatentTask t = sample_latent_task(classes, {}, dim, sigma, derive_seed(seed, 1));
        const DecompositionReport r = decompose_loss(random_linear_map(dim, out_dim, derive_seed(seed, 2)), t,
                                                     make_clinical_proxy(t, eps), n_pairs, tau, derive_seed(seed, 3));
        py::dict d;
        d["l_un"] = r.l_un;
        d["l_eq"] = r.l_eq;
        d["l_neq"] = r.l_neq;
        d["tau_coll"] = r.tau_coll;
        d["residual"] = r.residual;
        return d;
      },
      py::arg("classes"), py::arg("eps"), py::arg("dim") = 8, py::arg("sigma") = 0.4, py::arg("out_dim") = 6,
      py::arg("n_pairs") = 2000, py::arg("tau") = 0.5, py::arg("seed") = 0);
  m.def(
      "theory_sweep",
      [](const std::vector<double>& eps, const std::string& cfg, const std::vector<std::uint64_t>& seeds) {
        const SweepConfig sc = run_config(cfg).theory;
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_proxy_sweep(eps, sc, seeds);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["eps"] = r.eps;
          d["kl_marginal"] = r.kl_marginal;
          d["tau_coll"] = r.tau_coll;
          d["probe_accuracy"] = r.probe_accuracy;
          d["seed"] = r.seed;
          out.append(d);
        }
        return out;
      },
      py::arg("eps"), py::arg("config_json") = "", py::arg("seeds") = std::vector<std::uint64_t>{1, 2, 3});
  m.def(
      "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman_correlation(x, y); },
      py::arg("x"), py::arg("y"));

  // --- command line -----------------------------------------------------------
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "clincon");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
