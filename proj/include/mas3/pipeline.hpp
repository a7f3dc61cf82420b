#pragma once

// Source training, internal-distribution estimation, source-free adaptation
// and evaluation, individually and end to end.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mas3/datagen.hpp"
#include "mas3/distances.hpp"
#include "mas3/eval.hpp"
#include "mas3/internal_dist.hpp"
#include "mas3/segmodel.hpp"

namespace mas3 {

enum class LabelDistMode { kSourceEmpirical, kOracle, kPseudo };

std::string to_string(LabelDistMode mode);
LabelDistMode label_dist_mode_from_string(const std::string& s);

struct AdaptConfig {
  double lambda = 0.5;
  double tau = 0.95;
  SwdConfig swd{100, 2, 0};
  std::size_t iterations = 2000;
  std::size_t batch_size = 16;         // target images per step
  std::size_t pixels_per_image = 64;   // 0 keeps every pixel
  std::size_t pseudo_batch = 0;        // 0 matches the target points per step
  LabelDistMode label_dist = LabelDistMode::kSourceEmpirical;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;

  void validate() const;
};

struct AdaptReport {
  std::vector<double> ce_curve;
  std::vector<double> swd_curve;
  std::vector<double> acceptance_curve;
  std::size_t iterations_executed = 0;
  // "ok", or "diverged" when a non-finite loss forced a restore.
  std::string status = "ok";
  std::size_t restored_iteration = 0;
  // Pseudo samples that fail the tau rule when re-checked after drawing.
  std::size_t pseudo_violations = 0;
  std::size_t pseudo_samples = 0;
};

struct AdaptResult {
  SegNetwork network;
  AdaptReport report;
};

// Minimizes CE(h on pseudo samples) + lambda * SWD(target embeddings, pseudo
// embeddings). The SWD term trains the encoder and decoder, the CE term trains
// the classifier. Pseudo samples are filtered by the classifier of `network`
// as given. `oracle_label_dist` is read only in oracle mode.
AdaptResult adapt(const SegNetwork& network, const GmmModel& gmm, const Tensor& target_images,
                  const AdaptConfig& cfg, std::span<const double> oracle_label_dist = {});

struct SegMetrics {
  double miou = 0.0;
  std::vector<std::optional<double>> per_class;
  double pixel_accuracy = 0.0;
  ConfusionMatrix confusion{1};
};

SegMetrics evaluate_segmentation(const SegNetwork& network, const LabeledDataset& data);

// Every pixel embedding of `images`, one row each.
Tensor pixel_embeddings(const SegNetwork& network, const Tensor& images);

struct BoundSummary {
  BoundTerms mean;  // term-wise average over the evaluated triples
  std::size_t triples = 0;
  std::size_t triangle_violations = 0;
  double min_triangle_slack = 0.0;
  std::size_t points = 0;
};

struct BoundConfig {
  std::size_t points = 64;
  std::size_t repeats = 8;
  DistanceMode mode = DistanceMode::kExact;
  int order = 2;
  std::size_t projections = 100;
  std::uint64_t seed = 0;
};

// Draws `repeats` triples of equal-size subsamples (source embeddings, GMM
// pseudo samples filtered by `filter` at tau, target embeddings) and
// evaluates the bound terms on each.
BoundSummary evaluate_bound(const Tensor& source_embeddings, const GmmModel& gmm,
                            const AffineLayer& filter, double tau,
                            const Tensor& target_embeddings, double source_risk,
                            const BoundConfig& cfg);

struct RunConfig {
  // Data.
  DomainSpec spec = DomainSpec::shift3();
  std::size_t n_source = 60;
  std::size_t n_target = 60;
  // Model and source training.
  Architecture arch;
  TrainConfig train;
  // Internal distribution.
  EmConfig em;
  double pool_rate = 0.25;
  std::size_t source_embedding_sample = 4096;
  // Adaptation.
  AdaptConfig adapt;
  BoundConfig bound;
  std::uint64_t seed = 0;

  // Fills the per-stage seeds from `seed` and copies shared fields.
  void derive();
  void validate() const;
};

struct SourceStage {
  SegNetwork network;
  std::vector<double> loss_curve;
  SegMetrics source_metrics;
};

struct InternalDistStage {
  GmmModel gmm;
  // Frozen source classifier that filters pseudo samples.
  AffineLayer filter;
  Tensor source_embeddings;  // sample of source pixel embeddings
  double source_risk = 0.0;  // 0-1 pixel error of the source model on the source domain
  std::vector<std::size_t> pool_counts;
};

SourceStage train_source_stage(const RunConfig& cfg, const LabeledDataset& source);
InternalDistStage internal_dist_stage(const RunConfig& cfg, const SegNetwork& network,
                                      const LabeledDataset& source);

struct RunReport {
  std::string status = "ok";
  double source_miou = 0.0;
  double source_risk = 0.0;  // 0-1 pixel error on the source domain
  SegMetrics pre;            // source-only model on target
  SegMetrics post;           // adapted model on target
  std::vector<std::size_t> pool_counts;
  std::vector<double> source_loss_curve;
  AdaptReport adapt;
  BoundSummary bound_pre;
  BoundSummary bound_post;
  std::vector<std::string> warnings;
};

// Runs every stage in order. When `out_dir` is set each stage's artifact is
// written there: source/, target/, source_model/, gmm/, adapted_model/,
// run_report.json, loss_curve.csv. The adapt stage sees only the checkpoint,
// the GMM and the target images.
RunReport run_mas3(const RunConfig& cfg,
                   const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Continues from a trained source model; used by sweeps that share it.
RunReport run_from_source(const RunConfig& cfg, const DomainPair& data, const SourceStage& source,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace mas3
