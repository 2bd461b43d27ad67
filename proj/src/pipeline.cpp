#include "clincon/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "clincon/errors.hpp"
#include "clincon/json_util.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

namespace fs = std::filesystem;

namespace clincon {

void HyperParams::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_pretrain >= 0) || !(lr_probe >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
}

void EncoderConfig::validate() const {
  if (hidden.empty()) throw ConfigError("encoder needs at least one layer");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("encoder layer sizes must be positive");
  }
  if (projection_dim == 0) throw ConfigError("projection_dim must be positive");
}

EncoderState init_encoder(std::size_t input_dim, const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  if (input_dim == 0) throw DataError("payload dimension must be positive");
  EncoderState st;
  st.config = config;
  st.input_dim = input_dim;
  std::vector<std::size_t> enc_sizes = {input_dim};
  enc_sizes.insert(enc_sizes.end(), config.hidden.begin(), config.hidden.end());
  Rng enc_rng(derive_seed(seed, 0xe4c0));
  st.encoder = make_mlp(enc_sizes, true, enc_rng);
  const std::size_t d = config.representation_dim();
  const std::size_t h = config.projection_hidden ? config.projection_hidden : d;
  Rng head_rng(derive_seed(seed, 0x4ead));
  st.head = make_mlp({d, h, config.projection_dim}, false, head_rng);
  st.seed_lineage = {seed};
  return st;
}

std::uint64_t encoder_checksum(const EncoderState& enc) {
  std::vector<unsigned char> bytes;
  append_parameter_bytes(enc.encoder, bytes);
  return fnv1a(bytes);
}

Eigen::MatrixXd encode(const EncoderState& enc, const Eigen::MatrixXd& payloads) {
  return forward(enc.encoder, payloads);
}

Eigen::MatrixXd project(const EncoderState& enc, const Eigen::MatrixXd& payloads) {
  return forward(enc.head, forward(enc.encoder, payloads));
}

Eigen::MatrixXd payload_matrix(const Dataset& ds) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.payload_dim()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t d = 0; d < ds.payload_dim(); ++d) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = ds[i].payload[d];
    }
  }
  return x;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng,
                                                   std::size_t min_batch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < min_batch) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void require_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NumericError("non-finite loss " + format_double(v) + " at " + where);
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1

EncoderState pretrain_contrastive(const Dataset& train, const LossSpec& spec, const HyperParams& hp,
                                  const EncoderConfig& config, std::uint64_t seed, const PretrainOptions& options) {
  spec.validate();
  std::map<std::string, std::vector<Label>> labels;
  for (const auto& term : spec.terms) labels[term.key.name] = encode_labels(train, term.key);
  return pretrain_contrastive(payload_matrix(train), labels, spec, hp, config, seed, options);
}

EncoderState pretrain_contrastive(const Eigen::MatrixXd& payloads,
                                  const std::map<std::string, std::vector<Label>>& labels, const LossSpec& spec,
                                  const HyperParams& hp, const EncoderConfig& config, std::uint64_t seed,
                                  const PretrainOptions& options) {
  spec.validate();
  hp.validate();
  const auto n = static_cast<std::size_t>(payloads.rows());
  if (n < 2) throw DataError("contrastive pretraining needs at least 2 samples");
  for (const auto& term : spec.terms) {
    auto it = labels.find(term.key.name);
    if (it == labels.end()) throw DataError("training data lacks clinical key '" + term.key.name + "'");
    if (it->second.size() != n) throw DataError("label count for '" + term.key.name + "' does not match samples");
  }

  EncoderState st = init_encoder(static_cast<std::size_t>(payloads.cols()), config, seed);
  st.hyper = hp;
  st.loss = spec.to_string();
  st.augment = options.augment;
  st.seed_lineage.push_back(derive_seed(seed, 0x97e7));

  SgdMomentum enc_opt(hp.lr_pretrain, hp.momentum, hp.weight_decay);
  SgdMomentum head_opt(hp.lr_pretrain, hp.momentum, hp.weight_decay);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0xe90c, epoch));
    for (const auto& idx : make_batches(n, hp.batch_size, shuffle_rng, 2)) {
      std::map<std::string, std::vector<Label>> batch_labels;
      for (const auto& term : spec.terms) {
        const auto& all = labels.at(term.key.name);
        auto& dst = batch_labels[term.key.name];
        for (std::size_t i : idx) dst.push_back(all[i]);
      }
      const TwoViewBatch batch =
          build_two_view_batch(gather_rows(payloads, idx), batch_labels, options.augment, derive_seed(seed, 0x57e9, step));

      MlpCache enc_cache, head_cache;
      const Eigen::MatrixXd r = forward(st.encoder, batch.views, &enc_cache);
      const Eigen::MatrixXd p = forward(st.head, r, &head_cache);
      const Normalized z = normalize(p);

      std::vector<WeightedMask> masks;
      LossResult res;
      if (spec.self_supervised) {
        res = info_nce(z.unit, batch.twin_index, spec.temperature, spec.reduction);
      } else {
        for (const auto& term : spec.terms) {
          masks.push_back({positive_mask(batch.labels.at(term.key.name)), term.weight});
        }
        res = combined_clinical(z.unit, masks, spec.temperature, spec.reduction);
      }
      require_finite(res.value, "epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      if (options.loss_log) options.loss_log->push_back(res.value);
      if (options.observer) options.observer({epoch, step, res.value, &batch, &z.unit, &masks});

      MlpGrad head_grad, enc_grad;
      const Eigen::MatrixXd g_r = backward(st.head, head_cache, normalize_backward(z, res.grad), head_grad);
      backward(st.encoder, enc_cache, g_r, enc_grad);
      enc_opt.step(st.encoder, enc_grad);
      head_opt.step(st.head, head_grad);
      ++step;
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Stage 2

Target Target::single(std::string_view biomarker_name) {
  const auto idx = biomarker_index(biomarker_name);
  if (!idx) throw ConfigError("unknown biomarker '" + std::string(biomarker_name) + "'");
  return {TargetKind::Biomarker, *idx, 2};
}

Target Target::parse(std::string_view text) {
  const std::string t(trim(text));
  if (to_lower(t) == "multilabel" || to_lower(t) == "all") return multilabel();
  if (to_lower(t).starts_with("classes:")) {
    auto k = parse_number<std::size_t>(std::string_view(t).substr(8));
    if (!k || *k < 2) throw ConfigError("categorical target needs at least 2 classes");
    return categorical(*k);
  }
  return single(t);
}

std::size_t Target::outputs() const {
  switch (kind) {
    case TargetKind::Biomarker: return 2;
    case TargetKind::MultiLabel: return kStudiedCount;
    case TargetKind::Categorical: return classes;
  }
  return 0;
}

std::string Target::to_string() const {
  switch (kind) {
    case TargetKind::Biomarker: return biomarker_name(biomarker);
    case TargetKind::MultiLabel: return "multilabel";
    case TargetKind::Categorical: return "classes:" + std::to_string(classes);
  }
  return {};
}

Targets targets_from(const Dataset& ds, const Target& target) {
  Targets t;
  if (target.kind == TargetKind::Categorical) {
    throw ConfigError("categorical targets are not stored in datasets");
  }
  if (target.kind == TargetKind::MultiLabel) t.matrix.resize(static_cast<Eigen::Index>(ds.size()), kStudiedCount);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& b = ds[i].biomarkers;
    if (!b) throw DataError("sample '" + ds[i].id + "' has no biomarker labels");
    if (target.kind == TargetKind::Biomarker) {
      t.classes.push_back(b->present(target.biomarker) ? 1 : 0);
    } else {
      for (std::size_t k = 0; k < kStudiedCount; ++k) t.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = b->flags[k];
    }
  }
  return t;
}

namespace {

LossResult head_loss(const Eigen::MatrixXd& out, const Targets& t, const Target& target,
                     const std::vector<std::size_t>& idx) {
  if (target.kind == TargetKind::MultiLabel) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(idx.size()), t.matrix.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = t.matrix.row(static_cast<Eigen::Index>(idx[i]));
    return bce_multilabel(out, sub);
  }
  std::vector<int> sub;
  for (std::size_t i : idx) sub.push_back(t.classes[i]);
  return cross_entropy(out, sub);
}

void check_targets(const Targets& t, const Target& target, std::size_t n) {
  if (target.kind == TargetKind::MultiLabel) {
    if (static_cast<std::size_t>(t.matrix.rows()) != n || t.matrix.cols() != static_cast<Eigen::Index>(kStudiedCount)) {
      throw DataError("multi-label targets must be N x 5");
    }
  } else if (t.classes.size() != n) {
    throw DataError("target count does not match samples");
  } else {
    for (int c : t.classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= target.outputs()) throw DataError("class label out of range");
    }
  }
}

Mlp train_head(const Eigen::MatrixXd& features, const Targets& t, const Target& target, const HyperParams& hp,
               std::uint64_t seed, const LinearTrainOptions& options) {
  const auto n = static_cast<std::size_t>(features.rows());
  Mlp head;
  if (options.init_head) {
    head = *options.init_head;
  } else {
    Rng init_rng(derive_seed(seed, 0x11ea));
    head = make_mlp({static_cast<std::size_t>(features.cols()), target.outputs()}, false, init_rng);
  }
  SgdMomentum opt(hp.lr_probe, hp.momentum, hp.weight_decay);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x9b0e, epoch));
    for (const auto& idx : make_batches(n, hp.batch_size, shuffle_rng, 1)) {
      MlpCache cache;
      const Eigen::MatrixXd out = forward(head, gather_rows(features, idx), &cache);
      const LossResult res = head_loss(out, t, target, idx);
      require_finite(res.value, "linear stage epoch " + std::to_string(epoch));
      if (options.loss_log) options.loss_log->push_back(res.value);
      MlpGrad grad;
      backward(head, cache, res.grad, grad);
      opt.step(head, grad);
    }
  }
  return head;
}

}  // namespace

ClassifierState train_linear_probe(std::shared_ptr<const EncoderState> enc, const Dataset& labeled,
                                   const Target& target, const HyperParams& hp, std::uint64_t seed,
                                   const LinearTrainOptions& options) {
  if (labeled.empty()) throw DataError("linear probe needs labeled samples");
  return train_linear_probe(std::move(enc), payload_matrix(labeled), targets_from(labeled, target), target, hp, seed,
                            options);
}

ClassifierState train_linear_probe(std::shared_ptr<const EncoderState> enc, const Eigen::MatrixXd& payloads,
                                   const Targets& targets, const Target& target, const HyperParams& hp,
                                   std::uint64_t seed, const LinearTrainOptions& options) {
  if (!enc) throw ConfigError("linear probe needs an encoder");
  hp.validate();
  const auto n = static_cast<std::size_t>(payloads.rows());
  if (n == 0) throw DataError("linear probe needs labeled samples");
  check_targets(targets, target, n);
  const Eigen::MatrixXd features = encode(*enc, payloads);
  ClassifierState model;
  model.head = train_head(features, targets, target, hp, seed, options);
  model.encoder = std::move(enc);
  model.target = target;
  return model;
}

ClassifierState train_supervised_baseline(const Dataset& labeled, const Target& target, const HyperParams& hp,
                                          const EncoderConfig& config, std::uint64_t seed,
                                          const LinearTrainOptions& options) {
  hp.validate();
  if (labeled.empty()) throw DataError("supervised baseline needs labeled samples");
  const Targets t = targets_from(labeled, target);
  const Eigen::MatrixXd x = payload_matrix(labeled);
  const auto n = static_cast<std::size_t>(x.rows());

  EncoderState enc = init_encoder(labeled.payload_dim(), config, seed);
  enc.hyper = hp;
  Rng init_rng(derive_seed(seed, 0x11ea));
  Mlp head = make_mlp({config.representation_dim(), target.outputs()}, false, init_rng);
  SgdMomentum enc_opt(hp.lr_probe, hp.momentum, hp.weight_decay);
  SgdMomentum head_opt(hp.lr_probe, hp.momentum, hp.weight_decay);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x9b0e, epoch));
    for (const auto& idx : make_batches(n, hp.batch_size, shuffle_rng, 1)) {
      MlpCache enc_cache, head_cache;
      const Eigen::MatrixXd r = forward(enc.encoder, gather_rows(x, idx), &enc_cache);
      const Eigen::MatrixXd out = forward(head, r, &head_cache);
      const LossResult res = head_loss(out, t, target, idx);
      require_finite(res.value, "supervised epoch " + std::to_string(epoch));
      if (options.loss_log) options.loss_log->push_back(res.value);
      MlpGrad head_grad, enc_grad;
      backward(enc.encoder, enc_cache, backward(head, head_cache, res.grad, head_grad), enc_grad);
      head_opt.step(head, head_grad);
      enc_opt.step(enc.encoder, enc_grad);
    }
  }
  ClassifierState model;
  model.encoder = std::make_shared<const EncoderState>(std::move(enc));
  model.head = std::move(head);
  model.target = target;
  model.encoder_fine_tuned = true;
  return model;
}

ClassifierState distill(const ClassifierState& teacher, const Dataset& labeled, const Dataset& unlabeled,
                        double temperature, const HyperParams& hp, std::uint64_t seed, const DistillOptions& options) {
  hp.validate();
  if (!teacher.encoder) throw ConfigError("teacher has no encoder");
  if (teacher.target.kind == TargetKind::MultiLabel) {
    throw ConfigError("distillation needs a softmax target (single biomarker or categorical)");
  }
  if (!(temperature > 0)) throw ConfigError("distillation temperature must be > 0");
  const std::size_t dim = teacher.encoder->input_dim;
  for (const Dataset* ds : {&labeled, &unlabeled}) {
    if (!ds->empty() && ds->payload_dim() != dim) {
      throw DataError("payload dimension " + std::to_string(ds->payload_dim()) + " does not match teacher input " +
                      std::to_string(dim));
    }
  }
  const auto n = labeled.size() + unlabeled.size();
  if (n == 0) throw DataError("distillation needs samples");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  if (!labeled.empty()) x.topRows(static_cast<Eigen::Index>(labeled.size())) = payload_matrix(labeled);
  if (!unlabeled.empty()) x.bottomRows(static_cast<Eigen::Index>(unlabeled.size())) = payload_matrix(unlabeled);

  const Eigen::MatrixXd features = encode(*teacher.encoder, x);
  const Eigen::MatrixXd soft = forward(teacher.head, features);

  Mlp head;
  if (options.init_from_teacher) {
    head = teacher.head;
  } else {
    Rng init_rng(derive_seed(seed, 0x11ea));
    head = make_mlp({static_cast<std::size_t>(features.cols()), teacher.target.outputs()}, false, init_rng);
  }
  SgdMomentum opt(hp.lr_probe, hp.momentum, hp.weight_decay);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0xd157, epoch));
    for (const auto& idx : make_batches(n, hp.batch_size, shuffle_rng, 1)) {
      MlpCache cache;
      const Eigen::MatrixXd out = forward(head, gather_rows(features, idx), &cache);
      const LossResult res = distillation_loss(out, gather_rows(soft, idx), temperature);
      require_finite(res.value, "distillation epoch " + std::to_string(epoch));
      if (options.loss_log) options.loss_log->push_back(res.value);
      MlpGrad grad;
      backward(head, cache, res.grad, grad);
      opt.step(head, grad);
    }
  }
  ClassifierState student;
  student.encoder = teacher.encoder;
  student.head = std::move(head);
  student.target = teacher.target;
  return student;
}

Eigen::MatrixXd logits(const ClassifierState& model, const Eigen::MatrixXd& payloads) {
  if (static_cast<std::size_t>(payloads.cols()) != model.encoder->input_dim) {
    throw DataError("payload dimension " + std::to_string(payloads.cols()) + " does not match model input " +
                    std::to_string(model.encoder->input_dim));
  }
  return forward(model.head, encode(*model.encoder, payloads));
}

Eigen::MatrixXd predict(const ClassifierState& model, const Eigen::MatrixXd& payloads) {
  const Eigen::MatrixXd z = logits(model, payloads);
  switch (model.target.kind) {
    case TargetKind::Biomarker: {
      // softmax over two logits: P(1) = sigmoid(z1 - z0)
      Eigen::MatrixXd p(z.rows(), 1);
      for (Eigen::Index i = 0; i < z.rows(); ++i) p(i, 0) = 1.0 / (1.0 + std::exp(z(i, 0) - z(i, 1)));
      return p;
    }
    case TargetKind::MultiLabel:
      return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case TargetKind::Categorical: {
      Eigen::MatrixXd p(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const Eigen::ArrayXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
        p.row(i) = (e / e.sum()).matrix().transpose();
      }
      return p;
    }
  }
  return z;
}

Eigen::MatrixXd predict(const ClassifierState& model, const Dataset& samples) {
  if (!samples.empty() && samples.payload_dim() != model.encoder->input_dim) {
    throw DataError("payload dimension " + std::to_string(samples.payload_dim()) + " does not match model input " +
                    std::to_string(model.encoder->input_dim));
  }
  return predict(model, payload_matrix(samples));
}

void export_embeddings(const EncoderState& enc, const Dataset& samples, const fs::path& out, EmbeddingLayer layer) {
  if (!samples.empty() && samples.payload_dim() != enc.input_dim) {
    throw DataError("payload dimension does not match encoder input");
  }
  const Eigen::MatrixXd x = payload_matrix(samples);
  const Eigen::MatrixXd e = layer == EmbeddingLayer::Representation ? encode(enc, x) : project(enc, x);
  const Eigen::Index dims = layer == EmbeddingLayer::Representation
                                ? static_cast<Eigen::Index>(enc.config.representation_dim())
                                : static_cast<Eigen::Index>(enc.config.projection_dim);
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw DataError("cannot write embeddings to '" + out.string() + "'");
  os << "id";
  for (auto name : kStudiedBiomarkers) os << ",b_" << name;
  for (Eigen::Index d = 0; d < dims; ++d) os << ",e" << d;
  os << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    os << csv_escape(samples[i].id);
    for (std::size_t k = 0; k < kStudiedCount; ++k) {
      os << ',';
      if (samples[i].biomarkers) os << static_cast<int>(samples[i].biomarkers->flags[k]);
    }
    for (Eigen::Index d = 0; d < e.cols(); ++d) os << ',' << format_double(e(static_cast<Eigen::Index>(i), d));
    os << '\n';
  }
  if (!os) throw DataError("failed writing embeddings to '" + out.string() + "'");
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json to_json(const HyperParams& hp) {
  return {{"batch_size", hp.batch_size}, {"epochs", hp.epochs},          {"momentum", hp.momentum},
          {"lr_pretrain", hp.lr_pretrain}, {"weight_decay", hp.weight_decay}, {"lr_probe", hp.lr_probe},
          {"temperature", hp.temperature}};
}

HyperParams hyper_params_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"batch_size", "epochs", "momentum", "lr_pretrain", "weight_decay", "lr_probe", "temperature"},
                     "hyperparameters");
  HyperParams hp;
  read_if_present(j, "batch_size", hp.batch_size);
  read_if_present(j, "epochs", hp.epochs);
  read_if_present(j, "momentum", hp.momentum);
  read_if_present(j, "lr_pretrain", hp.lr_pretrain);
  read_if_present(j, "weight_decay", hp.weight_decay);
  read_if_present(j, "lr_probe", hp.lr_probe);
  read_if_present(j, "temperature", hp.temperature);
  hp.validate();
  return hp;
}

namespace {

constexpr const char* kFormat = "clincon-checkpoint";

nlohmann::json loss_json(const std::string& loss, double temperature) {
  nlohmann::json j = {{"spec", loss}, {"terms", nlohmann::json::array()}, {"weights", nlohmann::json::array()},
                      {"bin_widths", nlohmann::json::array()}, {"temperature", temperature}};
  if (loss.empty() || loss == "simclr") return j;
  const LossSpec spec = parse_loss_spec(loss, temperature);
  for (const auto& t : spec.terms) {
    j["terms"].push_back(t.key.name);
    j["weights"].push_back(t.weight);
    j["bin_widths"].push_back(t.key.bin_width);
  }
  return j;
}

nlohmann::json encoder_header(const EncoderState& enc) {
  return {{"input_dim", enc.input_dim},
          {"architecture",
           {{"hidden", enc.config.hidden},
            {"projection_hidden", enc.config.projection_hidden},
            {"projection_dim", enc.config.projection_dim},
            {"activation", "relu"},
            {"projection_head_discardable", true}}},
          {"hyperparameters", to_json(enc.hyper)},
          {"loss", loss_json(enc.loss, enc.hyper.temperature)},
          {"augment", {{"noise_sigma", enc.augment.noise_sigma}, {"dropout_rate", enc.augment.dropout_rate}}},
          {"seeds", enc.seed_lineage},
          {"encoder_checksum", hex64(encoder_checksum(enc))}};
}

EncoderState encoder_from_header(const nlohmann::json& h) {
  EncoderConfig cfg;
  const auto& a = h.at("architecture");
  cfg.hidden = a.at("hidden").get<std::vector<std::size_t>>();
  cfg.projection_hidden = a.at("projection_hidden").get<std::size_t>();
  cfg.projection_dim = a.at("projection_dim").get<std::size_t>();
  EncoderState st = init_encoder(h.at("input_dim").get<std::size_t>(), cfg, 0);
  st.hyper = hyper_params_from_json(h.at("hyperparameters"));
  st.loss = h.at("loss").at("spec").get<std::string>();
  st.augment.noise_sigma = h.at("augment").at("noise_sigma").get<double>();
  st.augment.dropout_rate = h.at("augment").at("dropout_rate").get<double>();
  st.seed_lineage = h.at("seeds").get<std::vector<std::uint64_t>>();
  return st;
}

void write_checkpoint(const fs::path& path, nlohmann::json header, const std::vector<unsigned char>& blob) {
  header["format"] = kFormat;
  header["version"] = 1;
  header["blob_bytes"] = blob.size();
  header["blob_checksum"] = hex64(fnv1a(blob));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  const std::string line = header.dump() + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

std::pair<nlohmann::json, std::vector<unsigned char>> read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' has a malformed header: " + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kFormat) {
    throw DataError("'" + path.string() + "' is not a clincon checkpoint");
  }
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != header.at("blob_bytes").get<std::size_t>() ||
      hex64(fnv1a(blob)) != header.at("blob_checksum").get<std::string>()) {
    throw DataError("checkpoint '" + path.string() + "' parameter blob is corrupt");
  }
  return {std::move(header), std::move(blob)};
}

}  // namespace

void save_encoder(const EncoderState& enc, const fs::path& path) {
  nlohmann::json header = encoder_header(enc);
  header["kind"] = "encoder";
  std::vector<unsigned char> blob;
  append_parameter_bytes(enc.encoder, blob);
  append_parameter_bytes(enc.head, blob);
  write_checkpoint(path, std::move(header), blob);
}

EncoderState load_encoder(const fs::path& path) {
  auto [header, blob] = read_checkpoint(path);
  if (header.at("kind") != "encoder") throw DataError("'" + path.string() + "' is not an encoder checkpoint");
  try {
    EncoderState st = encoder_from_header(header);
    std::size_t off = read_parameter_bytes(st.encoder, blob.data(), blob.size());
    off += read_parameter_bytes(st.head, blob.data() + off, blob.size() - off);
    if (off != blob.size()) throw DataError("checkpoint parameter blob has trailing bytes");
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' header is incomplete: " + e.what());
  }
}

void save_classifier(const ClassifierState& model, const fs::path& path) {
  nlohmann::json header = {{"kind", "classifier"},
                           {"encoder", encoder_header(*model.encoder)},
                           {"target", model.target.to_string()},
                           {"encoder_fine_tuned", model.encoder_fine_tuned}};
  std::vector<unsigned char> blob;
  append_parameter_bytes(model.encoder->encoder, blob);
  append_parameter_bytes(model.encoder->head, blob);
  append_parameter_bytes(model.head, blob);
  write_checkpoint(path, std::move(header), blob);
}

ClassifierState load_classifier(const fs::path& path) {
  auto [header, blob] = read_checkpoint(path);
  if (header.at("kind") != "classifier") throw DataError("'" + path.string() + "' is not a classifier checkpoint");
  try {
    EncoderState enc = encoder_from_header(header.at("encoder"));
    ClassifierState model;
    model.target = Target::parse(header.at("target").get<std::string>());
    model.encoder_fine_tuned = header.at("encoder_fine_tuned").get<bool>();
    Rng unused(0);
    model.head = make_mlp({enc.config.representation_dim(), model.target.outputs()}, false, unused);
    std::size_t off = read_parameter_bytes(enc.encoder, blob.data(), blob.size());
    off += read_parameter_bytes(enc.head, blob.data() + off, blob.size() - off);
    off += read_parameter_bytes(model.head, blob.data() + off, blob.size() - off);
    if (off != blob.size()) throw DataError("checkpoint parameter blob has trailing bytes");
    model.encoder = std::make_shared<const EncoderState>(std::move(enc));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' header is incomplete: " + e.what());
  }
}

nlohmann::json read_checkpoint_header(const fs::path& path) { return read_checkpoint(path).first; }

}  // namespace clincon
