#pragma once

// Class-conditional Gaussian mixture over the embedding space, fitted to
// confidently classified source pixels, and the confidence-filtered sampler
// that turns it into a labeled pseudo-dataset.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mas3/dataset.hpp"
#include "mas3/rng.hpp"
#include "mas3/segmodel.hpp"

namespace mas3 {

// S_k: per-class embedding vectors that passed the confidence filter.
struct ConfidentPool {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<Tensor> points;  // per class: count x dim (0 x dim when empty)
  double tau = 0.0;

  std::size_t count(std::size_t k) const { return points[k].rows(); }
  std::vector<std::size_t> counts() const;
};

// A pixel enters S_k iff its label is k and the classifier probability of k
// exceeds tau. Each pixel is additionally kept with probability
// `subsample_rate`, drawn from `seed` independently of tau.
ConfidentPool collect_confident_embeddings(const SegNetwork& network,
                                           const LabeledDataset& source, double tau,
                                           double subsample_rate = 1.0,
                                           std::uint64_t seed = 0);

struct ClassMixture {
  std::vector<double> weights;     // T'
  std::vector<Tensor> means;       // T' x (dim)
  std::vector<Tensor> covariances; // T' x (dim x dim)
  std::size_t pool_size = 0;
  // Fewer pool points than requested components; fitted with fewer.
  bool degenerate = false;
  // Empty pool; never sampled.
  bool excluded = false;
  // Mean per-point log-likelihood after initialization and after each EM
  // iteration of the retained restart.
  std::vector<double> log_likelihood_trace;

  std::size_t components() const { return weights.size(); }
};

struct EmConfig {
  std::size_t components = 3;  // T
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // on the mean log-likelihood improvement
  double covariance_floor = 1e-6;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
};

class GmmModel {
 public:
  GmmModel() = default;
  GmmModel(std::size_t dim, std::vector<ClassMixture> classes, double covariance_floor,
           double tau, std::vector<double> label_distribution);

  std::size_t num_classes() const { return classes_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t max_components() const;
  double covariance_floor() const { return floor_; }
  double tau() const { return tau_; }
  const ClassMixture& mixture(std::size_t k) const { return classes_.at(k); }
  const std::vector<ClassMixture>& classes() const { return classes_; }
  // Source empirical label frequencies recorded at fit time.
  const std::vector<double>& label_distribution() const { return label_distribution_; }
  std::vector<std::size_t> excluded_classes() const;

  // log sum_t alpha_t N(x | mu_t, Sigma_t); throws DegenerateClass for an
  // excluded class.
  double log_likelihood(std::size_t k, std::span<const double> x) const;
  // One draw from component t of class k.
  void sample_component(std::size_t k, std::size_t t, Rng& rng, std::span<double> out) const;

  // Checks weights, symmetry and the eigenvalue floor; throws ValidationError.
  void validate() const;

 private:
  void factorize();

  std::size_t dim_ = 0;
  std::vector<ClassMixture> classes_;
  double floor_ = 1e-6;
  double tau_ = 0.0;
  std::vector<double> label_distribution_;
  // Per class and component: lower Cholesky factor and log-determinant.
  std::vector<std::vector<Tensor>> chol_;
  std::vector<std::vector<double>> log_det_;
};

// EM on one point cloud from k-means++ seeding. `points` must hold at least
// one row; fewer rows than components reduces the component count.
ClassMixture fit_mixture_em(const Tensor& points, const EmConfig& cfg, Rng& rng);

GmmModel fit_gmm_em(const ConfidentPool& pool, const EmConfig& cfg,
                    std::vector<double> label_distribution);

double gmm_log_likelihood(const GmmModel& model, std::size_t k, std::span<const double> x);

// Class probabilities for every row of an embedding matrix.
using BatchClassifier = std::function<Tensor(const Tensor& embeddings)>;

BatchClassifier classifier_of(const AffineLayer& classifier);

struct PseudoDataset {
  Tensor embeddings;        // n x dim
  std::vector<int> labels;  // n
  std::size_t draws = 0;
  std::vector<std::size_t> draws_per_class;
  std::vector<std::size_t> kept_per_class;

  std::size_t size() const { return labels.size(); }
  double acceptance_rate() const {
    return draws == 0 ? 0.0 : static_cast<double>(labels.size()) / static_cast<double>(draws);
  }
};

// Draw k ~ label_dist (renormalized over non-excluded classes), t ~ alpha_k,
// z ~ N(mu_kt, Sigma_kt); keep (z, k) iff the classifier's argmax on z is k
// with probability > tau. Stops after n kept samples or retry_factor * n
// draws; throws SamplingStarvation if fewer than n / 2 were kept.
PseudoDataset sample_pseudo_dataset(const GmmModel& model, const BatchClassifier& classifier,
                                    std::span<const double> label_dist, std::size_t n,
                                    double tau, Rng& rng, std::size_t retry_factor = 50);

// GMM directory: manifest.json + weights.tnsr (K x T) + means.tnsr
// (K x T x dim) + covariances.tnsr (K x T x dim x dim), zero padded past each
// class's component count.
void save_gmm(const std::filesystem::path& dir, const GmmModel& model);
GmmModel load_gmm(const std::filesystem::path& dir);

}  // namespace mas3
