#include "clincon/cli.hpp"

#include <fstream>
#include <iostream>
#include <iterator>

#include <CLI11.hpp>

#include "clincon/data_model.hpp"
#include "clincon/errors.hpp"
#include "clincon/experiments.hpp"
#include "clincon/json_util.hpp"
#include "clincon/metrics.hpp"
#include "clincon/synthetic.hpp"
#include "clincon/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clincon {

namespace {

constexpr const char* kVersion = "0.1.0";

const std::vector<std::string_view> kPathKeys = {"train",   "test",  "labeled", "unlabeled", "manifest",
                                                 "encoder", "model", "teacher", "out",       "cohort"};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  for (const auto& part : split(text, ',')) {
    auto v = parse_number<T>(trim(part));
    if (!v) throw ConfigError(std::string("bad ") + what + " '" + std::string(trim(part)) + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

// "25,50,75,100" and "0.25,0.5" both accepted.
std::vector<double> parse_fractions(const std::string& text) {
  auto v = parse_list<double>(text, "fraction");
  bool percent = false;
  for (double f : v) percent = percent || f > 1.0;
  if (percent) {
    for (double& f : v) f /= 100.0;
  }
  return v;
}

EmbeddingLayer parse_layer(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "representation" || l == "encoder") return EmbeddingLayer::Representation;
  if (l == "projection" || l == "head") return EmbeddingLayer::Projection;
  throw ConfigError("unknown embedding layer '" + s + "' (representation|projection)");
}

json to_json(const EncoderConfig& c) {
  return {{"hidden", c.hidden}, {"projection_hidden", c.projection_hidden}, {"projection_dim", c.projection_dim}};
}

json to_json(const SweepConfig& s) {
  return {{"classes", s.classes},   {"prior", s.prior},   {"dim", s.dim},
          {"sigma", s.sigma},       {"n_train", s.n_train}, {"n_probe", s.n_probe},
          {"n_test", s.n_test},     {"collision_pairs", s.collision_pairs},
          {"hyperparameters", clincon::to_json(s.hyper)}, {"probe_hyperparameters", clincon::to_json(s.probe)},
          {"encoder", to_json(s.encoder)},
          {"augment", {{"noise_sigma", s.augment.noise_sigma}, {"dropout_rate", s.augment.dropout_rate}}}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  require_known_keys(j, {"hidden", "projection_hidden", "projection_dim"}, "encoder");
  EncoderConfig c;
  read_if_present(j, "hidden", c.hidden);
  read_if_present(j, "projection_hidden", c.projection_hidden);
  read_if_present(j, "projection_dim", c.projection_dim);
  c.validate();
  return c;
}

AugmentPolicy augment_from_json(const json& j) {
  require_known_keys(j, {"noise_sigma", "dropout_rate"}, "augment");
  AugmentPolicy a;
  read_if_present(j, "noise_sigma", a.noise_sigma);
  read_if_present(j, "dropout_rate", a.dropout_rate);
  if (!(a.noise_sigma >= 0) || !(a.dropout_rate >= 0 && a.dropout_rate < 1)) {
    throw ConfigError("augment needs noise_sigma >= 0 and dropout_rate in [0, 1)");
  }
  return a;
}

SweepConfig sweep_config_from_json(const json& j) {
  require_known_keys(j,
                     {"classes", "prior", "dim", "sigma", "n_train", "n_probe", "n_test", "collision_pairs",
                      "hyperparameters", "probe_hyperparameters", "encoder", "augment"},
                     "theory");
  SweepConfig s;
  read_if_present(j, "classes", s.classes);
  read_if_present(j, "prior", s.prior);
  read_if_present(j, "dim", s.dim);
  read_if_present(j, "sigma", s.sigma);
  read_if_present(j, "n_train", s.n_train);
  read_if_present(j, "n_probe", s.n_probe);
  read_if_present(j, "n_test", s.n_test);
  read_if_present(j, "collision_pairs", s.collision_pairs);
  // Partial objects override the sweep's own defaults.
  auto merge = [&](const char* key, HyperParams& hp) {
    if (!j.contains(key)) return;
    const json& part = j.at(key);
    require_known_keys(part,
                       {"batch_size", "epochs", "momentum", "lr_pretrain", "weight_decay", "lr_probe", "temperature"},
                       std::string("theory ") + key);
    json merged = clincon::to_json(hp);
    merged.update(part);
    hp = hyper_params_from_json(merged);
  };
  merge("hyperparameters", s.hyper);
  merge("probe_hyperparameters", s.probe);
  if (j.contains("encoder")) s.encoder = encoder_config_from_json(j.at("encoder"));
  if (j.contains("augment")) s.augment = augment_from_json(j.at("augment"));
  return s;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  require_known_keys(j,
                     {"hyperparameters", "encoder", "augment", "loss", "target", "seed", "seeds", "fractions",
                      "distill_temperature", "paths", "theory", "eps_levels"},
                     "run config");
  RunConfig c;
  if (j.contains("hyperparameters")) c.hyper = hyper_params_from_json(j.at("hyperparameters"));
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
  if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
  read_if_present(j, "loss", c.loss);
  read_if_present(j, "target", c.target);
  read_if_present(j, "seed", c.seed);
  read_if_present(j, "seeds", c.seeds);
  read_if_present(j, "fractions", c.fractions);
  read_if_present(j, "distill_temperature", c.distill_temperature);
  read_if_present(j, "eps_levels", c.eps_levels);
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    if (!p.is_object()) throw ConfigError("paths must be a JSON object");
    for (const auto& [k, v] : p.items()) {
      if (std::find(kPathKeys.begin(), kPathKeys.end(), k) == kPathKeys.end()) {
        throw ConfigError("unknown key '" + k + "' in paths");
      }
      if (!v.is_string()) throw ConfigError("path '" + k + "' must be a string");
      c.paths[k] = v.get<std::string>();
    }
  }
  if (j.contains("theory")) c.theory = sweep_config_from_json(j.at("theory"));
  parse_loss_spec(c.loss, c.hyper.temperature);
  Target::parse(c.target);
  return c;
}

json to_json(const RunConfig& c) {
  return {{"hyperparameters", clincon::to_json(c.hyper)},
          {"encoder", to_json(c.encoder)},
          {"augment", {{"noise_sigma", c.augment.noise_sigma}, {"dropout_rate", c.augment.dropout_rate}}},
          {"loss", c.loss},
          {"target", c.target},
          {"seed", c.seed},
          {"seeds", c.seeds},
          {"fractions", c.fractions},
          {"distill_temperature", c.distill_temperature},
          {"paths", c.paths},
          {"theory", to_json(c.theory)},
          {"eps_levels", c.eps_levels}};
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json_file(path)); }

namespace {

// Flag values shared by the subcommands; each is applied on top of the
// config file only when given on the command line.
struct Flags {
  std::string config;
  std::map<std::string, std::string> paths;
  std::uint64_t seed = 0;
  std::string seeds;
  std::string loss;
  double tau = 0;
  std::string target;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0;
  double lr_probe = 0;
  std::string fractions;
  double fraction = 1.0;
  double temperature = 0;
  std::string by = "eye";
  std::size_t holdout = 0;
  std::string balanced;
  std::size_t per_class = 500;
  std::string key;
  std::string layer = "representation";
  std::string eps;
  std::size_t classes = 0;
  std::string runs_a, runs_b;
  std::string metric = "auroc";
  std::string selector;
  double alpha = 0.05;
};

struct Command {
  CLI::App* app = nullptr;
  std::string name;
};

class Runner {
 public:
  Runner(std::vector<std::string> args, std::ostream& out) : args_(std::move(args)), out_(out) {}

  Flags flags;
  // Same flag name may be registered on several subcommands.
  std::map<std::string, std::vector<CLI::Option*>> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    if (it == opts.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(), [](const CLI::Option* o) { return o->count() > 0; });
  }

  RunConfig resolve() {
    RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
    for (const auto& [k, v] : flags.paths) {
      if (given(k)) cfg.paths[k] = v;
    }
    if (given("seed")) cfg.seed = flags.seed;
    if (given("seeds")) cfg.seeds = parse_list<std::uint64_t>(flags.seeds, "seed");
    if (given("epochs")) cfg.hyper.epochs = flags.epochs;
    if (given("batch-size")) cfg.hyper.batch_size = flags.batch_size;
    if (given("lr")) cfg.hyper.lr_pretrain = flags.lr;
    if (given("lr-probe")) cfg.hyper.lr_probe = flags.lr_probe;
    if (given("tau")) cfg.hyper.temperature = flags.tau;
    if (given("loss")) cfg.loss = flags.loss;
    if (given("target")) cfg.target = flags.target;
    if (given("fractions")) cfg.fractions = parse_fractions(flags.fractions);
    if (given("temperature")) cfg.distill_temperature = flags.temperature;
    if (given("eps")) cfg.eps_levels = parse_list<double>(flags.eps, "eps level");
    if (given("classes")) cfg.theory.classes = flags.classes;
    cfg.hyper.validate();
    return cfg;
  }

  std::string path(const RunConfig& cfg, const std::string& key) const {
    auto it = cfg.paths.find(key);
    if (it == cfg.paths.end() || it->second.empty()) throw ConfigError("missing required path --" + key);
    return it->second;
  }

  void record_output(const fs::path& p) { outputs_.push_back(p); }

  // Resolved config, seeds and output checksums; no timestamps.
  void write_run_manifest(const std::string& command, const RunConfig& cfg, const fs::path& manifest_path,
                          const std::vector<std::uint64_t>& seeds) {
    json outputs = json::object();
    for (const auto& p : outputs_) {
      outputs[p.generic_string()] = {{"bytes", fs::file_size(p)}, {"fnv1a64", file_checksum(p)}};
    }
    json m = {{"tool", "clincon"},     {"version", kVersion}, {"command", command}, {"arguments", args_},
              {"config", to_json(cfg)}, {"seeds", seeds},      {"outputs", outputs}};
    write_text(manifest_path, m.dump(2) + "\n");
  }

  std::ostream& out() { return out_; }

 private:
  std::vector<std::string> args_;
  std::ostream& out_;
  std::vector<fs::path> outputs_;
};

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".run.json"); }

// ---------------------------------------------------------------------------

void cmd_gen_synth(Runner& r) {
  RunConfig cfg = r.resolve();
  CohortConfig cohort;
  if (auto it = cfg.paths.find("cohort"); it != cfg.paths.end()) cohort = cohort_config_from_json(read_json_file(it->second));
  if (r.given("seed")) cohort.seed = r.flags.seed;
  const fs::path dir = r.path(cfg, "out");
  const Cohort c = generate_cohort(cohort);
  const fs::path manifest = write_manifest(c.dataset, dir);
  write_text(dir / "truth.json", clincon::to_json(c.truth).dump(2) + "\n");
  r.record_output(manifest);
  r.record_output(dir / "truth.json");
  for (std::size_t i = 0; i < c.dataset.size(); ++i) r.record_output(dir / "payloads" / (c.dataset[i].id + ".f32"));
  r.write_run_manifest("gen-synth", cfg, dir / "run.json", {cohort.seed});
  r.out() << "wrote " << c.dataset.size() << " samples to " << manifest.generic_string() << "\n";
}

void cmd_split(Runner& r) {
  RunConfig cfg = r.resolve();
  const Dataset ds = load_manifest(r.path(cfg, "manifest"));
  const fs::path dir = r.path(cfg, "out");
  const Split s = split_by_identity(ds, parse_identity_key(r.flags.by), r.flags.holdout, cfg.seed);
  Dataset test = s.test;
  if (!r.flags.balanced.empty()) {
    test = balanced_biomarker_testset(s.test, r.flags.balanced, r.flags.per_class, derive_seed(cfg.seed, 0xba1));
  }
  r.record_output(write_manifest(s.train, dir / "train"));
  r.record_output(write_manifest(test, dir / "test"));
  r.write_run_manifest("split", cfg, dir / "run.json", {cfg.seed});
  r.out() << "train " << s.train.size() << " samples, test " << test.size() << " samples\n";
}

void cmd_histogram(Runner& r) {
  RunConfig cfg = r.resolve();
  const Dataset ds = load_manifest(r.path(cfg, "manifest"));
  const Histogram h = label_histogram(ds, r.flags.key);
  std::string csv = "label,images,eyes\n";
  for (const auto& b : h.bins) csv += csv_escape(b.label) + "," + std::to_string(b.images) + "," + std::to_string(b.eyes) + "\n";
  if (cfg.paths.contains("out")) {
    const fs::path out = cfg.paths.at("out");
    write_text(out, csv);
    r.record_output(out);
    r.write_run_manifest("histogram", cfg, sidecar(out), {});
  } else {
    r.out() << csv;
  }
}

void cmd_pretrain(Runner& r) {
  RunConfig cfg = r.resolve();
  const Dataset train = load_manifest(r.path(cfg, "train"));
  const LossSpec spec = parse_loss_spec(cfg.loss, cfg.hyper.temperature);
  PretrainOptions opts;
  opts.augment = cfg.augment;
  std::vector<double> losses;
  opts.loss_log = &losses;
  const EncoderState enc = pretrain_contrastive(train, spec, cfg.hyper, cfg.encoder, cfg.seed, opts);
  const fs::path out = r.path(cfg, "out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_encoder(enc, out);
  r.record_output(out);
  r.write_run_manifest("pretrain", cfg, sidecar(out), {cfg.seed});
  r.out() << "pretrained " << spec.to_string() << " for " << losses.size() << " steps; final loss "
          << (losses.empty() ? std::string("n/a") : format_double(losses.back())) << "\n";
}

void save_model(Runner& r, const RunConfig& cfg, const ClassifierState& model, const std::string& command) {
  const fs::path out = r.path(cfg, "out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_classifier(model, out);
  r.record_output(out);
  r.write_run_manifest(command, cfg, sidecar(out), {cfg.seed});
}

void cmd_probe(Runner& r) {
  RunConfig cfg = r.resolve();
  auto enc = std::make_shared<const EncoderState>(load_encoder(r.path(cfg, "encoder")));
  Dataset labeled = labeled_only(load_manifest(r.path(cfg, "train")));
  if (r.flags.fraction < 1.0) labeled = subsample_fraction(labeled, r.flags.fraction, derive_seed(cfg.seed, 0xacc5));
  const std::uint64_t before = encoder_checksum(*enc);
  const ClassifierState model = train_linear_probe(enc, labeled, Target::parse(cfg.target), cfg.hyper, cfg.seed);
  if (encoder_checksum(*model.encoder) != before) throw NumericError("encoder changed during probe training");
  save_model(r, cfg, model, "probe");
  r.out() << "probe trained on " << labeled.size() << " labeled samples\n";
}

void cmd_baseline(Runner& r) {
  RunConfig cfg = r.resolve();
  const Dataset labeled = labeled_only(load_manifest(r.path(cfg, "train")));
  const ClassifierState model =
      train_supervised_baseline(labeled, Target::parse(cfg.target), cfg.hyper, cfg.encoder, cfg.seed);
  save_model(r, cfg, model, "baseline");
  r.out() << "supervised baseline trained on " << labeled.size() << " labeled samples\n";
}

void cmd_distill(Runner& r) {
  RunConfig cfg = r.resolve();
  const ClassifierState teacher = load_classifier(r.path(cfg, "teacher"));
  const Dataset labeled = load_manifest(r.path(cfg, "labeled"));
  const Dataset unlabeled =
      cfg.paths.contains("unlabeled") ? load_manifest(cfg.paths.at("unlabeled")) : Dataset{};
  const ClassifierState student =
      distill(teacher, labeled, unlabeled, cfg.distill_temperature, cfg.hyper, cfg.seed);
  if (encoder_checksum(*student.encoder) != encoder_checksum(*teacher.encoder)) {
    throw NumericError("encoder changed during distillation");
  }
  save_model(r, cfg, student, "distill");
  r.out() << "student distilled on " << labeled.size() + unlabeled.size() << " samples\n";
}

void cmd_eval(Runner& r) {
  RunConfig cfg = r.resolve();
  const ClassifierState model = load_classifier(r.path(cfg, "model"));
  const Dataset test = load_manifest(r.path(cfg, "test"));
  const MetricReport report = evaluate_classifier(model, test, cfg.seed, r.path(cfg, "model"));
  const std::string text = clincon::to_json(report).dump(2) + "\n";
  if (cfg.paths.contains("out")) {
    const fs::path out = cfg.paths.at("out");
    write_text(out, text);
    r.record_output(out);
    r.write_run_manifest("eval", cfg, sidecar(out), {cfg.seed});
  }
  r.out() << text;
}

void cmd_sweep_access(Runner& r) {
  RunConfig cfg = r.resolve();
  auto enc = std::make_shared<const EncoderState>(load_encoder(r.path(cfg, "encoder")));
  const std::uint64_t before = encoder_checksum(*enc);
  const Dataset labeled = labeled_only(load_manifest(r.path(cfg, "train")));
  const Dataset test = load_manifest(r.path(cfg, "test"));
  const auto rows =
      run_access_sweep(enc, labeled, test, Target::parse(cfg.target), cfg.fractions, cfg.seeds, cfg.hyper);
  if (encoder_checksum(*enc) != before) throw NumericError("encoder changed during access sweep");
  const fs::path out = r.path(cfg, "out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_access_csv(rows, out);
  r.record_output(out);
  r.write_run_manifest("sweep-access", cfg, sidecar(out), cfg.seeds);
  r.out() << "wrote " << rows.size() << " rows to " << out.generic_string() << "\n";
}

void cmd_theory_sweep(Runner& r) {
  RunConfig cfg = r.resolve();
  const auto rows = run_proxy_sweep(cfg.eps_levels, cfg.theory, cfg.seeds);
  const fs::path out = r.path(cfg, "out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_sweep_csv(rows, out);
  r.record_output(out);
  r.write_run_manifest("theory-sweep", cfg, sidecar(out), cfg.seeds);
  const auto avg = average_sweep(rows);
  std::vector<double> eps, acc;
  for (const auto& a : avg) {
    eps.push_back(a.eps);
    acc.push_back(a.probe_accuracy);
    r.out() << "eps " << format_double(a.eps) << ": tau_coll " << format_double(a.tau_coll) << ", probe accuracy "
            << format_double(a.probe_accuracy) << "\n";
  }
  r.out() << "spearman(eps, accuracy) = " << format_double(spearman_correlation(eps, acc)) << "\n";
}

void cmd_export(Runner& r) {
  RunConfig cfg = r.resolve();
  const EncoderState enc = load_encoder(r.path(cfg, "encoder"));
  const Dataset ds = load_manifest(r.path(cfg, "manifest"));
  const fs::path out = r.path(cfg, "out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  export_embeddings(enc, ds, out, parse_layer(r.flags.layer));
  r.record_output(out);
  r.write_run_manifest("export-embeddings", cfg, sidecar(out), {});
}

double select_metric(const MetricReport& rep, const std::string& selector, const std::string& metric,
                     const std::string& file) {
  const BiomarkerMetrics* m = nullptr;
  if (selector.empty() || selector == "multilabel") {
    if (metric != "auroc") throw ConfigError("the multi-label selector only supports auroc");
    if (selector.empty() && !rep.multilabel_auroc) return headline_auroc(rep);
    if (!rep.multilabel_auroc) throw DataError("'" + file + "' has no multi-label AUROC");
    return *rep.multilabel_auroc;
  }
  if (selector == "averaged") {
    if (!rep.averaged) throw DataError("'" + file + "' has no averaged metrics");
    m = &*rep.averaged;
  } else {
    const auto idx = biomarker_index(selector);
    if (!idx) throw ConfigError("unknown biomarker '" + selector + "'");
    auto it = rep.per_biomarker.find(biomarker_name(*idx));
    if (it == rep.per_biomarker.end()) throw DataError("'" + file + "' has no metrics for " + selector);
    m = &it->second;
  }
  if (metric == "auroc") return m->auroc;
  if (metric == "accuracy") return m->accuracy;
  if (metric == "f1") return m->f1;
  if (metric == "precision") return m->precision;
  if (metric == "sensitivity") return m->sensitivity;
  if (metric == "specificity") return m->specificity;
  throw ConfigError("unknown metric '" + metric + "'");
}

void cmd_compare(Runner& r) {
  RunConfig cfg = r.resolve();
  auto load_values = [&](const std::string& list) {
    std::vector<double> v;
    json files = json::array();
    for (const auto& f : split(list, ',')) {
      const std::string file(trim(f));
      v.push_back(select_metric(metric_report_from_json(read_json_file(file)), r.flags.selector, r.flags.metric, file));
      files.push_back(file);
    }
    return std::pair{v, files};
  };
  const auto [a, files_a] = load_values(r.flags.runs_a);
  const auto [b, files_b] = load_values(r.flags.runs_b);
  const TTestResult t = paired_t_test(a, b, r.flags.alpha);
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  json res = {{"test", kSignificanceTest},
              {"metric", r.flags.metric},
              {"selector", r.flags.selector.empty() ? "headline" : r.flags.selector},
              {"a", {{"files", files_a}, {"values", a}, {"mean", mean(a)}}},
              {"b", {{"files", files_b}, {"values", b}, {"mean", mean(b)}}},
              {"t", std::isfinite(t.t) ? json(t.t) : json(format_double(t.t))},
              {"df", t.df},
              {"p", t.p},
              {"alpha", r.flags.alpha},
              {"significant", t.significant}};
  const std::string text = res.dump(2) + "\n";
  if (cfg.paths.contains("out")) {
    const fs::path out = cfg.paths.at("out");
    write_text(out, text);
    r.record_output(out);
    r.write_run_manifest("compare", cfg, sidecar(out), {});
  }
  r.out() << text;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"clincon: clinically supervised contrastive pretraining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  Runner runner(args, out);
  Flags& f = runner.flags;

  using Handler = void (*)(Runner&);
  std::vector<std::pair<CLI::App*, Handler>> commands;

  auto add_path = [&](CLI::App* sub, const std::string& key, const std::string& help) {
    runner.opts[key].push_back(sub->add_option("--" + key, f.paths[key], help));
  };
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "run config JSON")->check(CLI::ExistingFile);
    runner.opts["seed"].push_back(sub->add_option("--seed", f.seed, "seed"));
  };
  auto add_hyper = [&](CLI::App* sub) {
    runner.opts["epochs"].push_back(sub->add_option("--epochs", f.epochs, "training epochs"));
    runner.opts["batch-size"].push_back(sub->add_option("--batch-size", f.batch_size, "mini-batch size"));
    runner.opts["lr-probe"].push_back(sub->add_option("--lr-probe", f.lr_probe, "linear-stage learning rate"));
  };
  auto add_target = [&](CLI::App* sub) {
    runner.opts["target"].push_back(sub->add_option("--target", f.target, "biomarker name, 'multilabel', or 'classes:K'"));
  };

  {
    auto* s = app.add_subcommand("gen-synth", "generate a synthetic cohort");
    add_common(s);
    add_path(s, "out", "output directory");
    runner.opts["cohort"].push_back(s->add_option("--cohort,--cohort-config", f.paths["cohort"], "cohort config JSON"));
    commands.emplace_back(s, cmd_gen_synth);
  }
  // --config on gen-synth names the cohort config, matching the documented usage.
  app.get_subcommand("gen-synth")->get_option("--config")->description("cohort config JSON");

  {
    auto* s = app.add_subcommand("split", "hold out eyes or patients");
    add_common(s);
    add_path(s, "manifest", "input manifest");
    add_path(s, "out", "output directory (train/ and test/)");
    s->add_option("--by", f.by, "eye or patient")->capture_default_str();
    s->add_option("--holdout", f.holdout, "identities held out")->required();
    s->add_option("--balanced", f.balanced, "draw a balanced test set for this biomarker");
    s->add_option("--per-class", f.per_class, "samples per class for --balanced")->capture_default_str();
    commands.emplace_back(s, cmd_split);
  }
  {
    auto* s = app.add_subcommand("histogram", "label histogram of a clinical key");
    add_common(s);
    add_path(s, "manifest", "input manifest");
    add_path(s, "out", "output CSV (stdout when omitted)");
    s->add_option("--key", f.key, "clinical key")->required();
    commands.emplace_back(s, cmd_histogram);
  }
  {
    auto* s = app.add_subcommand("pretrain", "contrastive pretraining");
    add_common(s);
    add_hyper(s);
    add_path(s, "train", "training manifest");
    add_path(s, "out", "encoder checkpoint");
    runner.opts["loss"].push_back(s->add_option("--loss", f.loss, "loss spec, e.g. cst+eye or bcva:1+cst:1, or simclr"));
    runner.opts["tau"].push_back(s->add_option("--tau", f.tau, "temperature"));
    runner.opts["lr"].push_back(s->add_option("--lr", f.lr, "pretraining learning rate"));
    commands.emplace_back(s, cmd_pretrain);
  }
  {
    auto* s = app.add_subcommand("probe", "linear probe on a frozen encoder");
    add_common(s);
    add_hyper(s);
    add_target(s);
    add_path(s, "encoder", "encoder checkpoint");
    add_path(s, "train", "labeled training manifest");
    add_path(s, "out", "classifier checkpoint");
    s->add_option("--fraction", f.fraction, "fraction of labeled samples used")->check(CLI::Range(0.0, 1.0));
    commands.emplace_back(s, cmd_probe);
  }
  {
    auto* s = app.add_subcommand("baseline", "supervised encoder + head from scratch");
    add_common(s);
    add_hyper(s);
    add_target(s);
    add_path(s, "train", "labeled training manifest");
    add_path(s, "out", "classifier checkpoint");
    commands.emplace_back(s, cmd_baseline);
  }
  {
    auto* s = app.add_subcommand("distill", "distill a teacher's soft labels into a student head");
    add_common(s);
    add_hyper(s);
    add_path(s, "teacher", "teacher classifier checkpoint");
    add_path(s, "labeled", "labeled manifest");
    add_path(s, "unlabeled", "unlabeled manifest");
    add_path(s, "out", "student checkpoint");
    runner.opts["temperature"].push_back(s->add_option("--temperature", f.temperature, "softening temperature"));
    commands.emplace_back(s, cmd_distill);
  }
  {
    auto* s = app.add_subcommand("eval", "metrics of a classifier on a test manifest");
    add_common(s);
    add_path(s, "model", "classifier checkpoint");
    add_path(s, "test", "test manifest");
    add_path(s, "out", "metric report JSON");
    commands.emplace_back(s, cmd_eval);
  }
  {
    auto* s = app.add_subcommand("sweep-access", "probe AUROC against labeled fraction");
    add_common(s);
    add_hyper(s);
    add_target(s);
    add_path(s, "encoder", "encoder checkpoint");
    add_path(s, "train", "labeled training manifest");
    add_path(s, "test", "test manifest");
    add_path(s, "out", "output CSV");
    runner.opts["fractions"].push_back(s->add_option("--fractions", f.fractions, "e.g. 25,50,75,100"));
    runner.opts["seeds"].push_back(s->add_option("--seeds", f.seeds, "e.g. 1,2,3"));
    commands.emplace_back(s, cmd_sweep_access);
  }
  {
    auto* s = app.add_subcommand("theory-sweep", "latent-class proxy corruption sweep");
    add_common(s);
    add_path(s, "out", "output CSV");
    runner.opts["eps"].push_back(s->add_option("--eps", f.eps, "corruption levels, e.g. 0,0.2,0.4,0.6,0.8"));
    runner.opts["seeds"].push_back(s->add_option("--seeds", f.seeds, "e.g. 1,2,3"));
    runner.opts["classes"].push_back(s->add_option("--classes", f.classes, "latent class count"));
    commands.emplace_back(s, cmd_theory_sweep);
  }
  {
    auto* s = app.add_subcommand("export-embeddings", "write embeddings as CSV");
    add_common(s);
    add_path(s, "encoder", "encoder checkpoint");
    add_path(s, "manifest", "input manifest");
    add_path(s, "out", "output CSV");
    s->add_option("--layer", f.layer, "representation or projection")->capture_default_str();
    commands.emplace_back(s, cmd_export);
  }
  {
    auto* s = app.add_subcommand("compare", "Welch t-test between two groups of metric reports");
    add_common(s);
    add_path(s, "out", "output JSON");
    s->add_option("--a", f.runs_a, "comma-separated report files")->required();
    s->add_option("--b", f.runs_b, "comma-separated report files")->required();
    s->add_option("--metric", f.metric, "auroc|accuracy|f1|precision|sensitivity|specificity")->capture_default_str();
    s->add_option("--biomarker", f.selector, "biomarker name, 'averaged' or 'multilabel'");
    s->add_option("--alpha", f.alpha, "significance level")->capture_default_str();
    commands.emplace_back(s, cmd_compare);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  // gen-synth's --config is the cohort config, not a run config.
  if (auto* g = app.get_subcommand("gen-synth"); g->parsed() && !f.config.empty()) {
    f.paths["cohort"] = f.config;
    runner.opts["cohort"].push_back(g->get_option("--config"));
    f.config.clear();
  }

  try {
    for (auto& [sub, handler] : commands) {
      if (sub->parsed()) handler(runner);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace clincon
