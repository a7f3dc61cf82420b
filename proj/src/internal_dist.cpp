#include "mas3/internal_dist.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "mas3/error.hpp"
#include "mas3/eval.hpp"
#include "mas3/tensor_io.hpp"

namespace mas3 {
namespace {

using json = nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Params {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

Eigen::MatrixXd floor_covariance(Eigen::MatrixXd cov, double floor) {
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.eigenvalues().minCoeff() >= floor) return cov;
  const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// Log density of every row of x under each component; n x T.
Eigen::MatrixXd component_log_densities(const ConstRowMap& x, const Params& p) {
  const auto n = x.rows();
  const auto dim = static_cast<double>(x.cols());
  const auto t_count = static_cast<Eigen::Index>(p.weights.size());
  Eigen::MatrixXd out(n, t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const Eigen::LLT<Eigen::MatrixXd> llt(p.covs[static_cast<std::size_t>(t)]);
    if (llt.info() != Eigen::Success) throw Error("EM: covariance lost positive definiteness");
    const Eigen::MatrixXd centered =
        (x.rowwise() - p.means[static_cast<std::size_t>(t)].transpose()).transpose();
    const Eigen::MatrixXd solved = llt.matrixL().solve(centered);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.col(t) = (-0.5 * (dim * kLog2Pi + log_det) - 0.5 * solved.colwise().squaredNorm().array())
                     .matrix()
                     .transpose();
  }
  return out;
}

// Fills resp (n x T) with posterior responsibilities; returns the mean
// log-likelihood.
double e_step(const ConstRowMap& x, const Params& p, Eigen::MatrixXd& resp) {
  resp = component_log_densities(x, p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    for (Eigen::Index t = 0; t < resp.cols(); ++t) {
      resp(i, t) += std::log(p.weights[static_cast<std::size_t>(t)]);
    }
    const double mx = resp.row(i).maxCoeff();
    const double lse = mx + std::log((resp.row(i).array() - mx).exp().sum());
    resp.row(i) = (resp.row(i).array() - lse).exp();
    total += lse;
  }
  return total / static_cast<double>(x.rows());
}

Params m_step(const ConstRowMap& x, const Eigen::MatrixXd& resp, double floor) {
  const auto n = static_cast<double>(x.rows());
  Params p;
  for (Eigen::Index t = 0; t < resp.cols(); ++t) {
    const Eigen::VectorXd r = resp.col(t);
    const double nk = r.sum();
    // Components with no mass contribute nothing to the likelihood.
    if (nk <= 1e-12 * n) continue;
    const Eigen::VectorXd mean = (x.transpose() * r) / nk;
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov =
        (centered.transpose() * (centered.array().colwise() * r.array()).matrix()) / nk;
    p.weights.push_back(nk / n);
    p.means.push_back(mean);
    p.covs.push_back(floor_covariance(cov, floor));
  }
  return p;
}

std::vector<Eigen::Index> kmeanspp_centers(const ConstRowMap& x, std::size_t count, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<Eigen::Index> centers = {static_cast<Eigen::Index>(rng.uniform_index(n))};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = (x.row(static_cast<Eigen::Index>(i)) - x.row(centers[0])).squaredNorm();
  }
  while (centers.size() < count) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    // All remaining points coincide with a center.
    if (!(total > 0.0)) break;
    const auto c = static_cast<Eigen::Index>(rng.categorical(d2));
    centers.push_back(c);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - x.row(c)).squaredNorm());
    }
  }
  return centers;
}

Params initial_params(const ConstRowMap& x, std::size_t count, double floor, Rng& rng) {
  const auto centers = kmeanspp_centers(x, count, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(centers.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = (x.row(i) - x.row(centers[c])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<Eigen::Index>(c);
      }
    }
    resp(i, best) = 1.0;
  }
  return m_step(x, resp, floor);
}

ClassMixture to_mixture(const Params& p, std::size_t dim) {
  ClassMixture m;
  for (std::size_t t = 0; t < p.weights.size(); ++t) {
    m.weights.push_back(p.weights[t]);
    Tensor mean({dim});
    Tensor cov({dim, dim});
    Eigen::Map<Eigen::VectorXd>(mean.raw(), static_cast<Eigen::Index>(dim)) = p.means[t];
    Eigen::Map<RowMatrix>(cov.raw(), static_cast<Eigen::Index>(dim),
                          static_cast<Eigen::Index>(dim)) = p.covs[t];
    m.means.push_back(std::move(mean));
    m.covariances.push_back(std::move(cov));
  }
  return m;
}

std::size_t argmax_lowest(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

std::vector<std::size_t> ConfidentPool::counts() const {
  std::vector<std::size_t> out;
  for (const auto& p : points) out.push_back(p.rows());
  return out;
}

ConfidentPool collect_confident_embeddings(const SegNetwork& network,
                                           const LabeledDataset& source, double tau,
                                           double subsample_rate, std::uint64_t seed) {
  source.validate();
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in [0, 1)");
  if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
    throw InvalidInput("subsample rate must lie in (0, 1]");
  }
  if (source.num_classes != network.arch.num_classes) {
    throw InvalidInput("dataset and network disagree on the class count");
  }
  const std::size_t k_count = network.arch.num_classes;
  const std::size_t dim = network.arch.embedding_dim;
  const ForwardResult fw = forward(network, source.images);
  std::vector<std::vector<double>> rows(k_count);
  Rng rng(seed);
  for (std::size_t p = 0; p < source.labels.size(); ++p) {
    const bool sampled = subsample_rate >= 1.0 || rng.uniform() < subsample_rate;
    const int label = source.labels[p];
    if (!sampled || label == kIgnoreLabel) continue;
    const auto k = static_cast<std::size_t>(label);
    if (!(fw.probs[p * k_count + k] > tau)) continue;
    const double* z = fw.embeddings.raw() + p * dim;
    rows[k].insert(rows[k].end(), z, z + dim);
  }
  ConfidentPool pool;
  pool.num_classes = k_count;
  pool.dim = dim;
  pool.tau = tau;
  for (auto& r : rows) {
    const std::size_t n = r.size() / dim;
    pool.points.emplace_back(Tensor::Shape{n, dim}, std::move(r));
  }
  return pool;
}

ClassMixture fit_mixture_em(const Tensor& points, const EmConfig& cfg, Rng& rng) {
  if (points.rank() != 2 || points.rows() == 0) {
    throw InvalidInput("fit_mixture_em: needs a non-empty n x dim matrix");
  }
  if (!points.all_finite()) throw InvalidInput("fit_mixture_em: non-finite points");
  if (cfg.components == 0 || cfg.restarts == 0) {
    throw InvalidInput("fit_mixture_em: components and restarts must be >= 1");
  }
  if (!(cfg.covariance_floor > 0.0)) throw InvalidInput("covariance floor must be > 0");
  const ConstRowMap x(points.raw(), static_cast<Eigen::Index>(points.rows()),
                      static_cast<Eigen::Index>(points.cols()));
  const std::size_t n = points.rows();
  const std::size_t count = std::min(cfg.components, n);

  Params best;
  std::vector<double> best_trace;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Rng init_rng = rng.fork(restart);
    Params p = initial_params(x, count, cfg.covariance_floor, init_rng);
    Eigen::MatrixXd resp;
    double ll = e_step(x, p, resp);
    std::vector<double> trace = {ll};
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      Params next = m_step(x, resp, cfg.covariance_floor);
      Eigen::MatrixXd next_resp;
      const double next_ll = e_step(x, next, next_resp);
      trace.push_back(next_ll);
      p = std::move(next);
      resp = std::move(next_resp);
      const bool converged = next_ll - ll < cfg.tolerance;
      ll = next_ll;
      if (converged) break;
    }
    if (ll > best_ll || best.weights.empty()) {
      best_ll = ll;
      best = std::move(p);
      best_trace = std::move(trace);
    }
  }
  ClassMixture m = to_mixture(best, points.cols());
  m.pool_size = n;
  m.degenerate = n < cfg.components;
  m.log_likelihood_trace = std::move(best_trace);
  return m;
}

GmmModel fit_gmm_em(const ConfidentPool& pool, const EmConfig& cfg,
                    std::vector<double> label_distribution) {
  if (pool.points.size() != pool.num_classes) throw InvalidInput("malformed confident pool");
  const Rng root(cfg.seed);
  std::vector<ClassMixture> classes;
  for (std::size_t k = 0; k < pool.num_classes; ++k) {
    if (pool.count(k) == 0) {
      ClassMixture empty;
      empty.excluded = true;
      empty.degenerate = true;
      classes.push_back(std::move(empty));
      continue;
    }
    Rng rng = root.fork(k);
    classes.push_back(fit_mixture_em(pool.points[k], cfg, rng));
  }
  return GmmModel(pool.dim, std::move(classes), cfg.covariance_floor, pool.tau,
                  std::move(label_distribution));
}

GmmModel::GmmModel(std::size_t dim, std::vector<ClassMixture> classes, double covariance_floor,
                   double tau, std::vector<double> label_distribution)
    : dim_(dim),
      classes_(std::move(classes)),
      floor_(covariance_floor),
      tau_(tau),
      label_distribution_(std::move(label_distribution)) {
  if (label_distribution_.size() != classes_.size()) {
    throw InvalidInput("label distribution has " + std::to_string(label_distribution_.size()) +
                       " entries for " + std::to_string(classes_.size()) + " classes");
  }
  validate();
  factorize();
}

std::size_t GmmModel::max_components() const {
  std::size_t t = 0;
  for (const auto& c : classes_) t = std::max(t, c.components());
  return t;
}

std::vector<std::size_t> GmmModel::excluded_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (classes_[k].excluded) out.push_back(k);
  }
  return out;
}

void GmmModel::validate() const {
  const auto d = static_cast<Eigen::Index>(dim_);
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    const auto& c = classes_[k];
    const std::string where = "GMM class " + std::to_string(k);
    if (c.excluded) {
      if (c.components() != 0) throw ValidationError(where + ": excluded class has components");
      continue;
    }
    if (c.components() == 0) throw ValidationError(where + ": no components");
    if (c.means.size() != c.components() || c.covariances.size() != c.components()) {
      throw ValidationError(where + ": component arrays disagree in length");
    }
    double total = 0.0;
    for (double w : c.weights) {
      if (!(w >= 0.0)) throw ValidationError(where + ": negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError(where + ": weights do not sum to 1");
    for (std::size_t t = 0; t < c.components(); ++t) {
      if (c.means[t].shape() != Tensor::Shape{dim_} ||
          c.covariances[t].shape() != Tensor::Shape{dim_, dim_}) {
        throw ValidationError(where + ": component shape mismatch");
      }
      const Eigen::Map<const RowMatrix> cov(c.covariances[t].raw(), d, d);
      if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError(where + ": covariance not symmetric");
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
      // Reconstruction after flooring may land a few ulps below the floor.
      if (es.eigenvalues().minCoeff() < floor_ * (1.0 - 1e-9)) {
        throw ValidationError(where + ": covariance eigenvalue below the floor");
      }
    }
  }
}

void GmmModel::factorize() {
  const auto d = static_cast<Eigen::Index>(dim_);
  chol_.assign(classes_.size(), {});
  log_det_.assign(classes_.size(), {});
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    for (const auto& cov_t : classes_[k].covariances) {
      const Eigen::Map<const RowMatrix> cov(cov_t.raw(), d, d);
      const Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(cov)};
      if (llt.info() != Eigen::Success) throw ValidationError("GMM covariance is not positive definite");
      Tensor l({dim_, dim_});
      Eigen::Map<RowMatrix>(l.raw(), d, d) = llt.matrixL().toDenseMatrix();
      chol_[k].push_back(std::move(l));
      log_det_[k].push_back(2.0 * llt.matrixLLT().diagonal().array().log().sum());
    }
  }
}

double GmmModel::log_likelihood(std::size_t k, std::span<const double> x) const {
  if (k >= classes_.size()) throw InvalidInput("class index out of range");
  if (classes_[k].excluded) {
    throw DegenerateClass("class " + std::to_string(k) + " has no fitted components");
  }
  if (x.size() != dim_) throw InvalidInput("log_likelihood: dimension mismatch");
  const auto d = static_cast<Eigen::Index>(dim_);
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
  const auto& c = classes_[k];
  std::vector<double> terms;
  for (std::size_t t = 0; t < c.components(); ++t) {
    const Eigen::Map<const RowMatrix> l(chol_[k][t].raw(), d, d);
    const Eigen::Map<const Eigen::VectorXd> mu(c.means[t].raw(), d);
    const Eigen::VectorXd y =
        l.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(xv - mu));
    terms.push_back(std::log(c.weights[t]) - 0.5 * (static_cast<double>(dim_) * kLog2Pi +
                                                    log_det_[k][t] + y.squaredNorm()));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s);
}

void GmmModel::sample_component(std::size_t k, std::size_t t, Rng& rng,
                                std::span<double> out) const {
  const auto& c = classes_.at(k);
  if (t >= c.components()) throw InvalidInput("component index out of range");
  const std::size_t d = dim_;
  std::vector<double> eps(d);
  for (auto& e : eps) e = rng.normal();
  const Tensor& l = chol_[k][t];
  for (std::size_t i = 0; i < d; ++i) {
    double v = c.means[t][i];
    for (std::size_t j = 0; j <= i; ++j) v += l[i * d + j] * eps[j];
    out[i] = v;
  }
}

double gmm_log_likelihood(const GmmModel& model, std::size_t k, std::span<const double> x) {
  return model.log_likelihood(k, x);
}

BatchClassifier classifier_of(const AffineLayer& classifier) {
  return [classifier](const Tensor& z) {
    const auto f = static_cast<Eigen::Index>(classifier.weight.extent(0));
    const auto k = static_cast<Eigen::Index>(classifier.weight.extent(1));
    if (z.cols() != static_cast<std::size_t>(f)) throw InvalidInput("classifier: embedding size mismatch");
    Tensor logits({z.rows(), static_cast<std::size_t>(k)});
    const ConstRowMap zm(z.raw(), static_cast<Eigen::Index>(z.rows()), f);
    const ConstRowMap w(classifier.weight.raw(), f, k);
    const Eigen::Map<const Eigen::RowVectorXd> b(classifier.bias.raw(), k);
    Eigen::Map<RowMatrix>(logits.raw(), static_cast<Eigen::Index>(z.rows()), k) =
        (zm * w).rowwise() + b;
    return softmax(logits);
  };
}

PseudoDataset sample_pseudo_dataset(const GmmModel& model, const BatchClassifier& classifier,
                                    std::span<const double> label_dist, std::size_t n,
                                    double tau, Rng& rng, std::size_t retry_factor) {
  const std::size_t k_count = model.num_classes();
  const std::size_t dim = model.dim();
  if (n == 0) throw InvalidInput("sample_pseudo_dataset: n must be >= 1");
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in [0, 1)");
  if (label_dist.size() != k_count) throw InvalidInput("label distribution size mismatch");
  double total = 0.0;
  for (double p : label_dist) {
    if (!(p >= 0.0)) throw InvalidInput("label distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InvalidInput("label distribution does not sum to 1");
  std::vector<double> class_weights(label_dist.begin(), label_dist.end());
  for (std::size_t k : model.excluded_classes()) class_weights[k] = 0.0;
  if (!(std::accumulate(class_weights.begin(), class_weights.end(), 0.0) > 0.0)) {
    throw SamplingStarvation("no sampleable class carries label mass", -1);
  }

  PseudoDataset out;
  out.draws_per_class.assign(k_count, 0);
  out.kept_per_class.assign(k_count, 0);
  std::vector<double> kept_rows;
  kept_rows.reserve(n * dim);
  const std::size_t budget = retry_factor * n;
  constexpr std::size_t kMinChunk = 256;
  while (out.labels.size() < n && out.draws < budget) {
    const std::size_t chunk =
        std::min(std::max(n - out.labels.size(), kMinChunk), budget - out.draws);
    Tensor z({chunk, dim});
    std::vector<std::size_t> cls(chunk);
    for (std::size_t i = 0; i < chunk; ++i) {
      const std::size_t k = rng.categorical(class_weights);
      const std::size_t t = rng.categorical(model.mixture(k).weights);
      model.sample_component(k, t, rng, z.row(i));
      cls[i] = k;
    }
    const Tensor probs = classifier(z);
    for (std::size_t i = 0; i < chunk && out.labels.size() < n; ++i) {
      const std::size_t k = cls[i];
      ++out.draws;
      ++out.draws_per_class[k];
      const auto row = probs.row(i);
      if (argmax_lowest(row) == k && row[k] > tau) {
        ++out.kept_per_class[k];
        out.labels.push_back(static_cast<int>(k));
        kept_rows.insert(kept_rows.end(), z.row(i).begin(), z.row(i).end());
      }
    }
  }
  if (2 * out.labels.size() < n) {
    int worst = -1;
    double worst_rate = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      if (out.draws_per_class[k] == 0) continue;
      const double rate = static_cast<double>(out.kept_per_class[k]) /
                          static_cast<double>(out.draws_per_class[k]);
      if (rate < worst_rate) {
        worst_rate = rate;
        worst = static_cast<int>(k);
      }
    }
    throw SamplingStarvation("pseudo-dataset sampling kept " + std::to_string(out.labels.size()) +
                                 " of " + std::to_string(n) + " samples after " +
                                 std::to_string(out.draws) + " draws at tau " +
                                 std::to_string(tau) + "; worst class " + std::to_string(worst) +
                                 " accepted " + std::to_string(worst_rate),
                             worst);
  }
  const std::size_t kept = out.labels.size();
  out.embeddings = Tensor({kept, dim}, std::move(kept_rows));
  return out;
}

void save_gmm(const std::filesystem::path& dir, const GmmModel& model) {
  std::filesystem::create_directories(dir);
  const std::size_t k_count = model.num_classes(), t_max = model.max_components(),
                    d = model.dim();
  Tensor weights({k_count, t_max});
  Tensor means({k_count, t_max, d});
  Tensor covs({k_count, t_max, d, d});
  json classes = json::array();
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& c = model.mixture(k);
    for (std::size_t t = 0; t < c.components(); ++t) {
      weights[k * t_max + t] = c.weights[t];
      std::copy(c.means[t].data().begin(), c.means[t].data().end(),
                means.data().begin() + static_cast<std::ptrdiff_t>((k * t_max + t) * d));
      std::copy(c.covariances[t].data().begin(), c.covariances[t].data().end(),
                covs.data().begin() + static_cast<std::ptrdiff_t>((k * t_max + t) * d * d));
    }
    classes.push_back({{"components", c.components()},
                       {"pool_size", c.pool_size},
                       {"degenerate", c.degenerate},
                       {"excluded", c.excluded},
                       {"log_likelihood_trace", c.log_likelihood_trace}});
  }
  const json manifest = {{"schema", 1},
                         {"kind", "mas3-gmm"},
                         {"num_classes", k_count},
                         {"max_components", t_max},
                         {"dim", d},
                         {"covariance_floor", model.covariance_floor()},
                         {"tau", model.tau()},
                         {"label_distribution", model.label_distribution()},
                         {"classes", classes}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  save_tensor(dir / "weights.tnsr", weights);
  save_tensor(dir / "means.tnsr", means);
  save_tensor(dir / "covariances.tnsr", covs);
}

GmmModel load_gmm(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CorruptFile("missing GMM manifest in " + dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptFile("unreadable GMM manifest in " + dir.string() + ": " + e.what());
  }
  if (m.value("kind", "") != "mas3-gmm") throw CorruptFile(dir.string() + " is not a GMM directory");
  try {
    const auto k_count = m.at("num_classes").get<std::size_t>();
    const auto t_max = m.at("max_components").get<std::size_t>();
    const auto d = m.at("dim").get<std::size_t>();
    const Tensor weights = load_tensor(dir / "weights.tnsr");
    const Tensor means = load_tensor(dir / "means.tnsr");
    const Tensor covs = load_tensor(dir / "covariances.tnsr");
    if (weights.shape() != Tensor::Shape{k_count, t_max} ||
        means.shape() != Tensor::Shape{k_count, t_max, d} ||
        covs.shape() != Tensor::Shape{k_count, t_max, d, d} ||
        m.at("classes").size() != k_count) {
      throw CorruptFile("GMM tensors in " + dir.string() + " disagree with the manifest");
    }
    std::vector<ClassMixture> classes;
    for (std::size_t k = 0; k < k_count; ++k) {
      const json& cj = m.at("classes")[k];
      ClassMixture c;
      const auto t_count = cj.at("components").get<std::size_t>();
      if (t_count > t_max) throw CorruptFile("GMM class component count exceeds the maximum");
      c.pool_size = cj.at("pool_size").get<std::size_t>();
      c.degenerate = cj.at("degenerate").get<bool>();
      c.excluded = cj.at("excluded").get<bool>();
      c.log_likelihood_trace = cj.at("log_likelihood_trace").get<std::vector<double>>();
      for (std::size_t t = 0; t < t_count; ++t) {
        c.weights.push_back(weights[k * t_max + t]);
        const auto mb = means.data().begin() + static_cast<std::ptrdiff_t>((k * t_max + t) * d);
        c.means.emplace_back(Tensor::Shape{d}, std::vector<double>(mb, mb + static_cast<std::ptrdiff_t>(d)));
        const auto cb = covs.data().begin() + static_cast<std::ptrdiff_t>((k * t_max + t) * d * d);
        c.covariances.emplace_back(Tensor::Shape{d, d},
                                   std::vector<double>(cb, cb + static_cast<std::ptrdiff_t>(d * d)));
      }
      classes.push_back(std::move(c));
    }
    return GmmModel(d, std::move(classes), m.at("covariance_floor").get<double>(),
                    m.at("tau").get<double>(),
                    m.at("label_distribution").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw CorruptFile("malformed GMM manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace mas3
