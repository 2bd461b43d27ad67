#include "clincon/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "clincon/errors.hpp"
#include "clincon/losses.hpp"
#include "clincon/parallel.hpp"
#include "clincon/text.hpp"

namespace clincon {

namespace {

void check_simplex(std::span<const double> p, const char* what) {
  double sum = 0;
  for (double v : p) {
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-12) throw ConfigError(std::string(what) + " sums to " + format_double(sum) + ", not 1");
}

}  // namespace

void LatentTask::validate() const {
  if (classes < 2) throw ConfigError("a latent task needs at least 2 classes");
  if (rho.size() != classes) throw ConfigError("class prior has the wrong length");
  check_simplex(rho, "class prior");
  if (static_cast<std::size_t>(means.rows()) != classes || means.cols() == 0) {
    throw ConfigError("class means do not match the class count");
  }
  if (!(sigma >= 0)) throw ConfigError("sigma must be >= 0");
}

Eigen::MatrixXd LatentTask::sample(std::size_t c, std::size_t n, Rng& rng) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), means.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index d = 0; d < x.cols(); ++d) x(i, d) = means(static_cast<Eigen::Index>(c), d) + sigma * rng.normal();
  }
  return x;
}

LatentTask sample_latent_task(std::size_t classes, std::span<const double> prior, std::size_t dim, double sigma,
                              std::uint64_t seed) {
  if (classes < 2) throw ConfigError("a latent task needs at least 2 classes");
  if (dim == 0) throw ConfigError("latent dimension must be positive");
  LatentTask task;
  task.classes = classes;
  task.sigma = sigma;
  if (prior.empty()) {
    task.rho.assign(classes, 1.0 / static_cast<double>(classes));
  } else {
    if (prior.size() != classes) throw ConfigError("class prior has the wrong length");
    check_simplex(prior, "class prior");
    task.rho.assign(prior.begin(), prior.end());
  }
  Rng rng(derive_seed(seed, 0x1a7e));
  task.means.resize(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < task.means.rows(); ++c) {
    double norm = 0;
    do {
      for (Eigen::Index d = 0; d < task.means.cols(); ++d) task.means(c, d) = rng.normal();
      norm = task.means.row(c).norm();
    } while (norm < 1e-12);
    task.means.row(c) /= norm;
  }
  task.validate();
  return task;
}

std::size_t ClinicalProxy::corrupt(std::size_t c, Rng& rng) const {
  const Eigen::VectorXd row = q.row(static_cast<Eigen::Index>(c)).transpose();
  return rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
}

namespace {

std::vector<double> marginal(const LatentTask& task, const Eigen::MatrixXd& q) {
  std::vector<double> out(task.classes, 0.0);
  for (std::size_t c = 0; c < task.classes; ++c) {
    for (std::size_t h = 0; h < task.classes; ++h) {
      out[h] += task.rho[c] * q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(h));
    }
  }
  return out;
}

}  // namespace

ClinicalProxy make_clinical_proxy(const LatentTask& task, double eps) {
  task.validate();
  if (!(eps >= 0 && eps < 1)) throw ConfigError("corruption eps must lie in [0, 1)");
  const auto k = static_cast<Eigen::Index>(task.classes);
  ClinicalProxy p;
  p.eps = eps;
  p.q = Eigen::MatrixXd::Constant(k, k, eps / static_cast<double>(k - 1));
  p.q.diagonal().setConstant(1.0 - eps);
  p.rho_clin = marginal(task, p.q);
  return p;
}

ClinicalProxy clinical_proxy_from_table(const LatentTask& task, const Eigen::MatrixXd& q) {
  task.validate();
  const auto k = static_cast<Eigen::Index>(task.classes);
  if (q.rows() != k || q.cols() != k) throw ConfigError("proxy table must be K x K");
  for (Eigen::Index r = 0; r < k; ++r) {
    Eigen::VectorXd rv = q.row(r).transpose();
    check_simplex(std::span<const double>(rv.data(), static_cast<std::size_t>(k)), "proxy table row");
  }
  ClinicalProxy p;
  p.q = q;
  p.eps = 1.0 - q.diagonal().mean();
  p.rho_clin = marginal(task, q);
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("KL arguments differ in length");
  check_simplex(p, "KL argument p");
  check_simplex(q, "KL argument q");
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0) continue;
    if (q[i] == 0) throw ConfigError("KL undefined: q is zero where p is positive at index " + std::to_string(i));
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, kl);
}

Eigen::MatrixXd proxy_posterior(const LatentTask& task, const ClinicalProxy& proxy) {
  const auto k = static_cast<Eigen::Index>(task.classes);
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index h = 0; h < k; ++h) {
    double z = 0;
    for (Eigen::Index c = 0; c < k; ++c) z += task.rho[static_cast<std::size_t>(c)] * proxy.q(c, h);
    if (z <= 0) continue;
    for (Eigen::Index c = 0; c < k; ++c) post(h, c) = task.rho[static_cast<std::size_t>(c)] * proxy.q(c, h) / z;
  }
  return post;
}

double collision_probability(const LatentTask& task, const ClinicalProxy& proxy) {
  const Eigen::MatrixXd post = proxy_posterior(task, proxy);
  double total = 0;
  for (Eigen::Index h = 0; h < post.rows(); ++h) total += proxy.rho_clin[static_cast<std::size_t>(h)] * post.row(h).squaredNorm();
  return total;
}

namespace {

struct PairSampler {
  std::vector<double> rho_clin;
  Eigen::MatrixXd post;

  // Returns the two true classes of a pseudo-label-matched pair.
  std::pair<std::size_t, std::size_t> draw(Rng& rng) const {
    const std::size_t h = rng.categorical(rho_clin);
    const Eigen::VectorXd row = post.row(static_cast<Eigen::Index>(h)).transpose();
    const std::span<const double> w(row.data(), static_cast<std::size_t>(row.size()));
    const std::size_t a = rng.categorical(w);
    const std::size_t b = rng.categorical(w);
    return {a, b};
  }
};

}  // namespace

double collision_rate(const LatentTask& task, const ClinicalProxy& proxy, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw ConfigError("collision_rate needs at least one pair");
  const PairSampler sampler{proxy.rho_clin, proxy_posterior(task, proxy)};
  Rng rng(derive_seed(seed, 0xc011));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto [a, b] = sampler.draw(rng);
    hits += a == b;
  }
  return static_cast<double>(hits) / static_cast<double>(n_pairs);
}

Embedding random_linear_map(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("linear map dimensions must be positive");
  Rng rng(derive_seed(seed, 0x11a9));
  Eigen::MatrixXd w(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = s * rng.normal();
  }
  return [w](const Eigen::MatrixXd& x) {
    if (x.cols() != w.cols()) throw DataError("input dimension does not match linear map");
    return normalize(x * w.transpose()).unit;
  };
}

Embedding encoder_embedding(std::shared_ptr<const EncoderState> enc) {
  if (!enc) throw ConfigError("encoder_embedding needs an encoder");
  return [enc](const Eigen::MatrixXd& x) { return normalize(project(*enc, x)).unit; };
}

DecompositionReport decompose_loss(const Embedding& f, const LatentTask& task, const ClinicalProxy& proxy,
                                   std::size_t n_pairs, double tau, std::uint64_t seed, std::size_t negatives) {
  task.validate();
  if (n_pairs == 0) throw ConfigError("decompose_loss needs at least one sample");
  if (negatives == 0) throw ConfigError("decompose_loss needs at least one negative");
  if (!(tau > 0)) throw ConfigError("temperature must be > 0");

  const PairSampler sampler{proxy.rho_clin, proxy_posterior(task, proxy)};
  Rng rng(derive_seed(seed, 0xdec0));
  const std::size_t per = negatives + 2;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n_pairs * per), static_cast<Eigen::Index>(task.dim()));
  std::vector<bool> same(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto [a, b] = sampler.draw(rng);
    same[i] = a == b;
    const auto base = static_cast<Eigen::Index>(i * per);
    x.row(base) = task.sample(a, 1, rng);
    x.row(base + 1) = task.sample(b, 1, rng);
    for (std::size_t k = 0; k < negatives; ++k) {
      x.row(base + 2 + static_cast<Eigen::Index>(k)) = task.sample(rng.categorical(task.rho), 1, rng);
    }
  }
  const Eigen::MatrixXd z = f(x);
  if (z.rows() != x.rows()) throw ConfigError("embedding changed the number of rows");
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (std::fabs(z.row(r).norm() - 1.0) > 1e-9) throw ConfigError("embedding outputs must have unit norm");
  }

  double sum_all = 0, sum_eq = 0, sum_neq = 0;
  DecompositionReport rep;
  std::vector<double> s(per - 1);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto base = static_cast<Eigen::Index>(i * per);
    for (std::size_t j = 1; j < per; ++j) s[j - 1] = z.row(base).dot(z.row(base + static_cast<Eigen::Index>(j))) / tau;
    const double m = *std::max_element(s.begin(), s.end());
    double acc = 0;
    for (double v : s) acc += std::exp(v - m);
    const double term = m + std::log(acc) - s[0];
    sum_all += term;
    if (same[i]) {
      sum_eq += term;
      ++rep.n_eq;
    } else {
      sum_neq += term;
      ++rep.n_neq;
    }
  }
  const double n = static_cast<double>(n_pairs);
  rep.l_un = sum_all / n;
  rep.tau_coll = static_cast<double>(rep.n_eq) / n;
  if (rep.n_eq) rep.l_eq = sum_eq / static_cast<double>(rep.n_eq);
  if (rep.n_neq) rep.l_neq = sum_neq / static_cast<double>(rep.n_neq);
  if (rep.l_eq && rep.l_neq) {
    rep.residual = std::fabs(rep.l_un - ((1.0 - rep.tau_coll) * *rep.l_neq + rep.tau_coll * *rep.l_eq));
  }
  return rep;
}

namespace {

struct LatentSample {
  Eigen::MatrixXd x;
  std::vector<std::size_t> classes;
};

LatentSample draw_labeled(const LatentTask& task, std::size_t n, Rng& rng) {
  LatentSample out{Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(task.dim())), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.categorical(task.rho);
    out.classes.push_back(c);
    out.x.row(static_cast<Eigen::Index>(i)) = task.sample(c, 1, rng);
  }
  return out;
}

SweepRow run_cell(double eps, const SweepConfig& cfg, std::uint64_t seed) {
  const LatentTask task = sample_latent_task(cfg.classes, cfg.prior, cfg.dim, cfg.sigma, derive_seed(seed, 0x7a5c));
  const ClinicalProxy proxy = make_clinical_proxy(task, eps);

  Rng data_rng(derive_seed(seed, 0xda7a));
  const LatentSample train = draw_labeled(task, cfg.n_train, data_rng);
  const LatentSample probe = draw_labeled(task, cfg.n_probe, data_rng);
  const LatentSample test = draw_labeled(task, cfg.n_test, data_rng);

  // One uniform and one offset per sample, shared across eps levels, so the
  // corrupted sets are nested as eps grows.
  Rng flip_rng(derive_seed(seed, 0xf119));
  std::vector<Label> pseudo(cfg.n_train);
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    const double u = flip_rng.uniform();
    const std::size_t offset = 1 + flip_rng.index(cfg.classes - 1);
    const std::size_t c = train.classes[i];
    pseudo[i] = static_cast<Label>(u < eps ? (c + offset) % cfg.classes : c);
  }

  LossSpec spec;
  spec.temperature = cfg.hyper.temperature;
  spec.terms.push_back({ClinicalKey{"pseudo", 1.0}, 1.0});
  PretrainOptions opts;
  opts.augment = cfg.augment;
  auto enc = std::make_shared<const EncoderState>(pretrain_contrastive(
      train.x, {{"pseudo", pseudo}}, spec, cfg.hyper, cfg.encoder, derive_seed(seed, 0x9e7), opts));

  Targets targets;
  for (auto c : probe.classes) targets.classes.push_back(static_cast<int>(c));
  const Target target = Target::categorical(cfg.classes);
  const ClassifierState model =
      train_linear_probe(enc, probe.x, targets, target, cfg.probe, derive_seed(seed, 0x9b0b));
  const Eigen::MatrixXd scores = logits(model, test.x);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    correct += static_cast<std::size_t>(best) == test.classes[static_cast<std::size_t>(i)];
  }

  SweepRow row;
  row.eps = eps;
  row.kl_marginal = kl_divergence(proxy.rho_clin, task.rho);
  row.tau_coll = collision_rate(task, proxy, cfg.collision_pairs, derive_seed(seed, 0xc011));
  row.probe_accuracy = static_cast<double>(correct) / static_cast<double>(cfg.n_test);
  row.seed = seed;
  return row;
}

}  // namespace

std::vector<SweepRow> run_proxy_sweep(std::span<const double> eps_levels, const SweepConfig& config,
                                      std::span<const std::uint64_t> seeds) {
  if (eps_levels.size() < 3) throw ConfigError("a proxy sweep needs at least 3 eps levels");
  if (seeds.empty()) throw ConfigError("a proxy sweep needs at least one seed");
  if (config.n_train < 2 || config.n_probe == 0 || config.n_test == 0) {
    throw ConfigError("sweep sample counts must be positive");
  }
  std::vector<SweepRow> rows(eps_levels.size() * seeds.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    rows[i] = run_cell(eps_levels[i / seeds.size()], config, seeds[i % seeds.size()]);
  });
  return rows;
}

std::vector<SweepRow> average_sweep(std::span<const SweepRow> rows) {
  std::vector<SweepRow> out;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SweepRow& o) { return o.eps == r.eps; });
    if (it == out.end()) {
      out.push_back({r.eps, 0, 0, 0, 0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - out.begin());
    it->kl_marginal += r.kl_marginal;
    it->tau_coll += r.tau_coll;
    it->probe_accuracy += r.probe_accuracy;
    ++counts[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double n = static_cast<double>(counts[k]);
    out[k].kl_marginal /= n;
    out[k].tau_coll /= n;
    out[k].probe_accuracy /= n;
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two equal-length series of length >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double den = da.norm() * db.norm();
  if (den == 0) throw ConfigError("spearman undefined for a constant series");
  return da.dot(db) / den;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "eps,kl_marginal,tau_coll,probe_accuracy,seed\n";
  for (const auto& r : rows) {
    out << format_double(r.eps) << ',' << format_double(r.kl_marginal) << ',' << format_double(r.tau_coll) << ','
        << format_double(r.probe_accuracy) << ',' << r.seed << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace clincon
