#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "clincon/data_model.hpp"
#include "clincon/losses.hpp"
#include "clincon/nn.hpp"
#include "clincon/pair_selection.hpp"

namespace clincon {

/// Training defaults follow the reference protocol: batch 128, 25 epochs,
/// SGD momentum 0.9, lr 0.05 for pretraining and 0.001 for the linear
/// stage, weight decay 1e-4, temperature 0.07.
struct HyperParams {
  std::size_t batch_size = 128;
  std::size_t epochs = 25;
  double momentum = 0.9;
  double lr_pretrain = 0.05;
  double weight_decay = 1e-4;
  double lr_probe = 0.001;
  double temperature = 0.07;

  void validate() const;
  bool operator==(const HyperParams&) const = default;
};

/// Encoder: payload -> hidden[0] -> ... -> hidden.back() (= representation D),
/// ReLU after every layer. Projection head: D -> projection_hidden -> 128.
struct EncoderConfig {
  std::vector<std::size_t> hidden = {256, 64};
  std::size_t projection_hidden = 0;  // 0 means "same as D"
  std::size_t projection_dim = 128;

  std::size_t representation_dim() const { return hidden.back(); }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderState {
  EncoderConfig config;
  std::size_t input_dim = 0;
  Mlp encoder;
  Mlp head;  // kept for reproducibility; not used downstream
  HyperParams hyper;
  std::string loss;  // LossSpec::to_string() of the objective, empty if untrained
  AugmentPolicy augment;
  std::vector<std::uint64_t> seed_lineage;

  bool operator==(const EncoderState&) const = default;
};

/// Fresh encoder + head with seeded initialization (also the "random frozen
/// encoder" baseline).
EncoderState init_encoder(std::size_t input_dim, const EncoderConfig& config, std::uint64_t seed);

/// FNV-1a over the encoder's float32 parameter bytes (head excluded).
std::uint64_t encoder_checksum(const EncoderState& enc);

/// Representations r = f(x), one row per input row.
Eigen::MatrixXd encode(const EncoderState& enc, const Eigen::MatrixXd& payloads);

/// Projection-head outputs G(f(x)) (not normalized).
Eigen::MatrixXd project(const EncoderState& enc, const Eigen::MatrixXd& payloads);

Eigen::MatrixXd payload_matrix(const Dataset& ds);

// ---------------------------------------------------------------------------
// Stage 1

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global step index
  double loss = 0.0;
  const TwoViewBatch* batch = nullptr;
  const Eigen::MatrixXd* embeddings = nullptr;  // unit-norm, 2N x projection_dim
  const std::vector<WeightedMask>* masks = nullptr;  // empty for InfoNCE
};

struct PretrainOptions {
  AugmentPolicy augment;
  std::function<void(const StepRecord&)> observer;
  std::vector<double>* loss_log = nullptr;
};

/// Contrastive pretraining of encoder + projection head. Each step takes a
/// shuffled mini-batch, builds one two-view batch shared by every loss term,
/// and applies momentum SGD. Throws NumericError on a non-finite loss.
EncoderState pretrain_contrastive(const Dataset& train, const LossSpec& spec, const HyperParams& hp,
                                  const EncoderConfig& config, std::uint64_t seed,
                                  const PretrainOptions& options = {});

/// Same loop over an explicit payload matrix and per-key label codes.
EncoderState pretrain_contrastive(const Eigen::MatrixXd& payloads,
                                  const std::map<std::string, std::vector<Label>>& labels, const LossSpec& spec,
                                  const HyperParams& hp, const EncoderConfig& config, std::uint64_t seed,
                                  const PretrainOptions& options = {});

// ---------------------------------------------------------------------------
// Stage 2

enum class TargetKind { Biomarker, MultiLabel, Categorical };

struct Target {
  TargetKind kind = TargetKind::Biomarker;
  std::size_t biomarker = 0;  // index, for TargetKind::Biomarker
  std::size_t classes = 2;    // for TargetKind::Categorical

  static Target single(std::string_view biomarker_name);
  static Target multilabel() { return {TargetKind::MultiLabel, 0, kStudiedCount}; }
  static Target categorical(std::size_t k) { return {TargetKind::Categorical, 0, k}; }
  /// "IRF", "multilabel", or "classes:K"
  static Target parse(std::string_view text);

  std::size_t outputs() const;
  std::string to_string() const;
  bool operator==(const Target&) const = default;
};

/// Supervision for a linear stage: integer classes (single/categorical) or
/// a 0/1 matrix (multi-label), one row per sample.
struct Targets {
  std::vector<int> classes;
  Eigen::MatrixXd matrix;
};

/// Extracts targets from biomarker labels; throws DataError if a sample lacks them.
Targets targets_from(const Dataset& ds, const Target& target);

struct ClassifierState {
  std::shared_ptr<const EncoderState> encoder;
  Mlp head;  // one linear layer D -> outputs
  Target target;
  bool encoder_fine_tuned = false;  // true for the from-scratch baseline

  bool operator==(const ClassifierState& o) const {
    return *encoder == *o.encoder && head == o.head && target == o.target &&
           encoder_fine_tuned == o.encoder_fine_tuned;
  }
};

struct LinearTrainOptions {
  std::vector<double>* loss_log = nullptr;
  /// Initial head weights; seeded random initialization when absent.
  const Mlp* init_head = nullptr;
};

/// Linear probe on frozen representations, trained with cross-entropy
/// (single biomarker / categorical) or multi-label BCE at lr_probe.
ClassifierState train_linear_probe(std::shared_ptr<const EncoderState> enc, const Dataset& labeled,
                                   const Target& target, const HyperParams& hp, std::uint64_t seed = 0,
                                   const LinearTrainOptions& options = {});

/// Probe over explicit features-to-be (payload rows) and targets.
ClassifierState train_linear_probe(std::shared_ptr<const EncoderState> enc, const Eigen::MatrixXd& payloads,
                                   const Targets& targets, const Target& target, const HyperParams& hp,
                                   std::uint64_t seed = 0, const LinearTrainOptions& options = {});

/// Encoder + linear head trained end-to-end from scratch with the same
/// classification loss (lr_probe, momentum, weight decay, epochs).
ClassifierState train_supervised_baseline(const Dataset& labeled, const Target& target, const HyperParams& hp,
                                          const EncoderConfig& config, std::uint64_t seed,
                                          const LinearTrainOptions& options = {});

struct DistillOptions {
  bool init_from_teacher = false;
  std::vector<double>* loss_log = nullptr;
};

/// Student linear head on the teacher's frozen encoder, trained against the
/// teacher's softened logits over labeled and unlabeled samples.
ClassifierState distill(const ClassifierState& teacher, const Dataset& labeled, const Dataset& unlabeled,
                        double temperature, const HyperParams& hp, std::uint64_t seed,
                        const DistillOptions& options = {});

/// Raw head outputs, N x outputs.
Eigen::MatrixXd logits(const ClassifierState& model, const Eigen::MatrixXd& payloads);

/// Probabilities in [0,1]: positive-class softmax (single, N x 1), per-label
/// sigmoid (multi-label, N x 5), or class softmax (categorical, N x K).
Eigen::MatrixXd predict(const ClassifierState& model, const Eigen::MatrixXd& payloads);
Eigen::MatrixXd predict(const ClassifierState& model, const Dataset& samples);

enum class EmbeddingLayer { Representation, Projection };

/// CSV: id, the five studied biomarker flags (empty if unlabeled), then
/// the embedding coordinates e0..e{d-1}.
void export_embeddings(const EncoderState& enc, const Dataset& samples, const std::filesystem::path& out,
                       EmbeddingLayer layer);

// ---------------------------------------------------------------------------
// Checkpoints: one line of JSON header, then little-endian float32 parameters.

nlohmann::json to_json(const HyperParams& hp);
HyperParams hyper_params_from_json(const nlohmann::json& j);

void save_encoder(const EncoderState& enc, const std::filesystem::path& path);
EncoderState load_encoder(const std::filesystem::path& path);
void save_classifier(const ClassifierState& model, const std::filesystem::path& path);
ClassifierState load_classifier(const std::filesystem::path& path);

/// Header JSON of a checkpoint file.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace clincon
