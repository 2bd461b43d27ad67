#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "clincon/pair_selection.hpp"
#include "clincon/pipeline.hpp"
#include "clincon/rng.hpp"

namespace clincon {

/// K latent classes with prior rho; class c emits mu_c + N(0, sigma^2 I_m).
struct LatentTask {
  std::size_t classes = 0;
  std::vector<double> rho;
  Eigen::MatrixXd means;  // K x m, unit rows
  double sigma = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
  /// Draws n points of class c, one per row.
  Eigen::MatrixXd sample(std::size_t c, std::size_t n, Rng& rng) const;
  void validate() const;
};

/// Empty prior means uniform. Throws ConfigError on a non-simplex prior.
LatentTask sample_latent_task(std::size_t classes, std::span<const double> prior, std::size_t dim, double sigma,
                              std::uint64_t seed);

/// q(pseudo | true): K x K row-stochastic; rho_clin = rho^T q.
struct ClinicalProxy {
  Eigen::MatrixXd q;
  double eps = 0.0;
  std::vector<double> rho_clin;

  /// Pseudo label for a sample of true class c.
  std::size_t corrupt(std::size_t c, Rng& rng) const;
};

/// Symmetric corruption: (1 - eps) on the diagonal, eps / (K - 1) elsewhere.
ClinicalProxy make_clinical_proxy(const LatentTask& task, double eps);

/// Arbitrary row-stochastic table (eps recorded as the mean off-diagonal mass per row).
ClinicalProxy clinical_proxy_from_table(const LatentTask& task, const Eigen::MatrixXd& q);

/// sum p ln(p / q), with 0 ln 0 = 0. Throws if q = 0 where p > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// posterior(pseudo, c) = P(true = c | pseudo); rows for unused pseudo labels are zero.
Eigen::MatrixXd proxy_posterior(const LatentTask& task, const ClinicalProxy& proxy);

/// Monte-Carlo fraction of positive pairs (two samples sharing a pseudo
/// label) whose true classes coincide.
double collision_rate(const LatentTask& task, const ClinicalProxy& proxy, std::size_t n_pairs, std::uint64_t seed);

/// Exact collision probability: sum_pseudo rho_clin * sum_c posterior^2.
double collision_probability(const LatentTask& task, const ClinicalProxy& proxy);

/// Maps rows of R^m to unit-norm rows.
using Embedding = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// x -> Wx / |Wx| with W ~ N(0, 1/m), out_dim x m.
Embedding random_linear_map(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);

/// Normalized projection-head output of an encoder.
Embedding encoder_embedding(std::shared_ptr<const EncoderState> enc);

struct DecompositionReport {
  double l_un = 0;
  std::optional<double> l_eq;
  std::optional<double> l_neq;
  double tau_coll = 0;
  std::optional<double> residual;  // only when both partitions are nonempty
  std::size_t n_eq = 0;
  std::size_t n_neq = 0;
};

/// Samples (anchor, positive, k negatives) triples: the anchor and positive
/// share a pseudo label, negatives come from the true marginal. Per-sample
/// InfoNCE terms are split by whether the positive pair's true classes match.
DecompositionReport decompose_loss(const Embedding& f, const LatentTask& task, const ClinicalProxy& proxy,
                                   std::size_t n_pairs, double tau, std::uint64_t seed, std::size_t negatives = 8);

struct SweepConfig {
  std::size_t classes = 4;
  std::vector<double> prior;  // empty = uniform
  std::size_t dim = 32;
  double sigma = 0.35;
  std::size_t n_train = 768;
  std::size_t n_probe = 48;
  std::size_t n_test = 1200;
  std::size_t collision_pairs = 20000;
  HyperParams hyper = pretrain_defaults();  // pretraining
  HyperParams probe = probe_defaults();     // linear stage
  EncoderConfig encoder = {{64, 32}, 32, 32};
  AugmentPolicy augment = {0.05, 0.0};

  static HyperParams pretrain_defaults() {
    HyperParams hp;
    hp.epochs = 12;
    return hp;
  }
  static HyperParams probe_defaults() {
    HyperParams hp;
    hp.epochs = 200;
    hp.batch_size = 64;
    hp.lr_probe = 0.05;
    return hp;
  }
};

struct SweepRow {
  double eps = 0;
  double kl_marginal = 0;
  double tau_coll = 0;
  double probe_accuracy = 0;
  std::uint64_t seed = 0;

  bool operator==(const SweepRow&) const = default;
};

/// One row per (eps, seed), ordered by eps level then seed. Cells run in
/// parallel up to CLINCON_THREADS and are individually deterministic.
std::vector<SweepRow> run_proxy_sweep(std::span<const double> eps_levels, const SweepConfig& config,
                                      std::span<const std::uint64_t> seeds);

/// Mean over seeds for each eps level, in first-appearance order.
std::vector<SweepRow> average_sweep(std::span<const SweepRow> rows);

/// Spearman rank correlation with average ranks for ties.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

/// CSV with header eps,kl_marginal,tau_coll,probe_accuracy,seed.
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

}  // namespace clincon
