#include "mas3/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mas3/error.hpp"
#include "mas3/report.hpp"
#include "mas3/sampling.hpp"

namespace mas3 {
namespace {

// Independent streams derived from one seed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kTrainStream,
  kPoolStream,
  kEmStream,
  kAdaptStream,
  kBoundStream,
  kSourceSampleStream,
};

std::uint64_t derive_seed(std::uint64_t seed, Stream s) { return Rng(seed).fork(s).next_u64(); }

// Pixel indices of one image: all of them, or `count` drawn without
// replacement.
void pick_pixels(std::size_t pixels, std::size_t count, Rng& rng, std::vector<std::size_t>& out) {
  out.resize(pixels);
  std::iota(out.begin(), out.end(), std::size_t{0});
  if (count == 0 || count >= pixels) return;
  for (std::size_t i = 0; i < count; ++i) std::swap(out[i], out[i + rng.uniform_index(pixels - i)]);
  out.resize(count);
}

std::vector<double> predicted_frequencies(const Tensor& probs, std::size_t k) {
  const auto pred = argmax_rows(probs);
  return label_frequencies(pred, k);
}

// Falls back to `fallback` when `dist` puts no mass on a sampleable class.
std::vector<double> usable_distribution(std::vector<double> dist, const GmmModel& gmm,
                                        const std::vector<double>& fallback) {
  double mass = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (!gmm.mixture(k).excluded) mass += dist[k];
  }
  return mass > 0.0 ? dist : fallback;
}

}  // namespace

std::string to_string(LabelDistMode mode) {
  switch (mode) {
    case LabelDistMode::kSourceEmpirical: return "source";
    case LabelDistMode::kOracle: return "oracle";
    case LabelDistMode::kPseudo: return "pseudo";
  }
  return "source";
}

LabelDistMode label_dist_mode_from_string(const std::string& s) {
  if (s == "source") return LabelDistMode::kSourceEmpirical;
  if (s == "oracle") return LabelDistMode::kOracle;
  if (s == "pseudo") return LabelDistMode::kPseudo;
  throw InvalidInput("unknown label distribution mode '" + s + "' (source, oracle, pseudo)");
}

void AdaptConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be >= 0");
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in [0, 1)");
  if (swd.projections == 0) throw InvalidInput("projections must be >= 1");
  if (swd.order < 1) throw InvalidInput("SWD order must be >= 1");
  if (batch_size == 0) throw InvalidInput("adapt batch size must be >= 1");
  if (checkpoint_every == 0) throw InvalidInput("checkpoint interval must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw InvalidInput("adapt learning rate must be > 0");
}

AdaptResult adapt(const SegNetwork& network, const GmmModel& gmm, const Tensor& target_images,
                  const AdaptConfig& cfg, std::span<const double> oracle_label_dist) {
  cfg.validate();
  const Architecture& arch = network.arch;
  if (gmm.dim() != arch.embedding_dim || gmm.num_classes() != arch.num_classes) {
    throw InvalidInput("GMM does not match the network's embedding space");
  }
  if (target_images.rank() != 4 || target_images.extent(0) == 0) {
    throw InvalidInput("adapt needs a non-empty N x W x H x C target image tensor");
  }
  std::vector<double> fixed_dist = gmm.label_distribution();
  if (cfg.label_dist == LabelDistMode::kOracle) {
    if (oracle_label_dist.size() != arch.num_classes) {
      throw InvalidInput("oracle label distribution mode needs target label frequencies");
    }
    fixed_dist.assign(oracle_label_dist.begin(), oracle_label_dist.end());
  }
  fixed_dist = usable_distribution(fixed_dist, gmm, gmm.label_distribution());

  const Tensor features = patch_features(target_images, arch);
  const std::size_t pix = arch.width * arch.height;
  const std::size_t pf = arch.patch_features();
  const std::size_t n_images = target_images.extent(0);
  const BatchClassifier filter = classifier_of(network.classifier);
  const unsigned groups = kClassifier | (cfg.lambda > 0.0 ? kEncoder | kDecoder : 0u);

  AdaptResult result{network, {}};
  AdaptReport& rep = result.report;
  SegNetwork last_good = network;
  Adam adam(cfg.adam);
  const Rng root(cfg.seed);
  Rng batch_rng = root.fork(0);
  Rng pseudo_rng = root.fork(1);
  const Rng direction_root = Rng(cfg.swd.seed);
  std::vector<std::size_t> chosen;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<double> rows;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t img = batch_rng.uniform_index(n_images);
      pick_pixels(pix, cfg.pixels_per_image, batch_rng, chosen);
      for (std::size_t p : chosen) {
        const double* src = features.raw() + (img * pix + p) * pf;
        rows.insert(rows.end(), src, src + pf);
      }
    }
    const std::size_t n_rows = rows.size() / pf;

    ad::Tape tape;
    const BoundNetwork bound = bind(tape, result.network, groups);
    const auto z_target = embed(bound, tape.constant(Tensor({n_rows, pf}, std::move(rows))));

    std::vector<double> dist = fixed_dist;
    if (cfg.label_dist == LabelDistMode::kPseudo) {
      const Tensor probs = classifier_of(result.network.classifier)(z_target.value());
      dist = usable_distribution(predicted_frequencies(probs, arch.num_classes), gmm, fixed_dist);
    }
    const std::size_t n_pseudo = cfg.pseudo_batch == 0 ? n_rows : cfg.pseudo_batch;
    const PseudoDataset pseudo =
        sample_pseudo_dataset(gmm, filter, dist, n_pseudo, cfg.tau, pseudo_rng);

    // Re-check the tau rule on what was kept.
    const Tensor check = filter(pseudo.embeddings);
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      const auto row = check.row(i);
      const auto k = static_cast<std::size_t>(pseudo.labels[i]);
      const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (top != k || !(row[k] > cfg.tau)) ++rep.pseudo_violations;
    }
    rep.pseudo_samples += pseudo.size();

    const auto ce = classifier_ce_on_pseudo(bound.classifier, pseudo.embeddings, pseudo.labels);
    const Tensor directions =
        sample_unit_directions(cfg.swd.projections, arch.embedding_dim, direction_root.fork(it));
    const auto swd = sliced_wasserstein(z_target, tape.constant(pseudo.embeddings), directions,
                                        cfg.swd.order);
    const auto loss = ad::add(ce, ad::scale(swd, cfg.lambda));
    const double ce_v = ce.value().item(), swd_v = swd.value().item();
    const double loss_v = loss.value().item();
    if (!std::isfinite(loss_v) || !std::isfinite(swd_v)) {
      result.network = last_good;
      rep.status = "diverged";
      break;
    }
    rep.ce_curve.push_back(ce_v);
    rep.swd_curve.push_back(swd_v);
    rep.acceptance_curve.push_back(pseudo.acceptance_rate());
    tape.backward(loss);
    adam.next_step();
    apply_adam(adam, result.network, bound, groups);
    rep.iterations_executed = it + 1;
    if ((it + 1) % cfg.checkpoint_every == 0) {
      last_good = result.network;
      rep.restored_iteration = it + 1;
    }
  }
  if (rep.status == "ok") rep.restored_iteration = rep.iterations_executed;
  return result;
}

Tensor pixel_embeddings(const SegNetwork& network, const Tensor& images) {
  const ForwardResult fw = forward(network, images);
  const std::size_t f = network.arch.embedding_dim;
  return fw.embeddings.reshaped({fw.embeddings.size() / f, f});
}

SegMetrics evaluate_segmentation(const SegNetwork& network, const LabeledDataset& data) {
  data.validate();
  if (data.num_classes != network.arch.num_classes) {
    throw InvalidInput("dataset and network disagree on the class count");
  }
  const ForwardResult fw = forward(network, data.images);
  const std::size_t k = network.arch.num_classes;
  const auto pred = argmax_rows(fw.probs.reshaped({fw.probs.size() / k, k}));
  SegMetrics m;
  m.confusion = ConfusionMatrix(k);
  m.confusion.accumulate(data.labels, pred);
  const MiouResult r = miou(m.confusion);
  m.miou = r.mean;
  m.per_class = r.per_class;
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < k; ++i) correct += m.confusion.at(i, i);
  m.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(m.confusion.total());
  return m;
}

BoundSummary evaluate_bound(const Tensor& source_embeddings, const GmmModel& gmm,
                            const AffineLayer& filter, double tau,
                            const Tensor& target_embeddings, double source_risk,
                            const BoundConfig& cfg) {
  if (cfg.points == 0 || cfg.repeats == 0) throw InvalidInput("bound: points and repeats must be >= 1");
  if (cfg.mode == DistanceMode::kExact && cfg.points > kExactWassersteinMaxPoints) {
    throw UnsupportedInstance("exact bound terms need at most " +
                              std::to_string(kExactWassersteinMaxPoints) + " points");
  }
  const std::size_t n = std::min({cfg.points, source_embeddings.rows(), target_embeddings.rows()});
  if (n == 0) throw InvalidInput("bound: empty embedding set");
  Rng rng(cfg.seed);
  const BatchClassifier h = classifier_of(filter);
  BoundSummary out;
  out.points = n;
  out.min_triangle_slack = INFINITY;
  out.mean.mode = cfg.mode;
  const SwdConfig swd{cfg.projections, cfg.order, derive_seed(cfg.seed, kBoundStream)};
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const PointSet s(subsample_rows(source_embeddings, n, rng));
    const PointSet t(subsample_rows(target_embeddings, n, rng));
    const PseudoDataset z =
        sample_pseudo_dataset(gmm, h, gmm.label_distribution(), n, tau, rng);
    if (z.size() != n) {
      throw SamplingStarvation("bound: pseudo sampling kept " + std::to_string(z.size()) + " of " +
                                   std::to_string(n) + " points",
                               -1);
    }
    BoundTerms b;
    try {
      b = bound_terms(s, PointSet(z.embeddings), t, cfg.order, cfg.mode, swd, source_risk);
    } catch (const ValidationError&) {
      throw;
    } catch (const Error&) {
      // Exact-mode triangle violation: count it rather than abort the report.
      ++out.triangle_violations;
      continue;
    }
    if (!b.triangle_holds) ++out.triangle_violations;
    out.min_triangle_slack = std::min(out.min_triangle_slack, b.triangle_slack);
    out.mean.w_sz += b.w_sz;
    out.mean.w_zt += b.w_zt;
    out.mean.w_st += b.w_st;
    ++out.triples;
  }
  if (out.triples > 0) {
    const auto c = static_cast<double>(out.triples);
    out.mean.w_sz /= c;
    out.mean.w_zt /= c;
    out.mean.w_st /= c;
    out.mean.triangle_slack = out.mean.w_sz + out.mean.w_zt - out.mean.w_st;
  }
  out.mean.triangle_holds = out.triangle_violations == 0;
  out.mean.source_risk = source_risk;
  out.mean.n_s = source_embeddings.rows();
  out.mean.n_t = target_embeddings.rows();
  return out;
}

void RunConfig::derive() {
  arch.width = spec.width;
  arch.height = spec.height;
  arch.channels = 3;
  arch.num_classes = spec.num_classes;
  train.seed = derive_seed(seed, kTrainStream);
  em.seed = derive_seed(seed, kEmStream);
  adapt.seed = derive_seed(seed, kAdaptStream);
  adapt.swd.seed = derive_seed(adapt.seed, kAdaptStream);
  bound.seed = derive_seed(seed, kBoundStream);
  bound.order = adapt.swd.order;
  bound.projections = adapt.swd.projections;
}

void RunConfig::validate() const {
  spec.validate();
  arch.validate();
  adapt.validate();
  if (n_source == 0 || n_target == 0) throw InvalidInput("dataset sizes must be >= 1");
  if (train.batch_size == 0) throw InvalidInput("train batch size must be >= 1");
  if (!(train.adam.learning_rate > 0.0)) throw InvalidInput("train learning rate must be > 0");
  if (em.components == 0) throw InvalidInput("GMM components must be >= 1");
  if (!(em.covariance_floor > 0.0)) throw InvalidInput("covariance floor must be > 0");
  if (!(pool_rate > 0.0 && pool_rate <= 1.0)) throw InvalidInput("pool rate must lie in (0, 1]");
  if (bound.points == 0 || bound.repeats == 0) throw InvalidInput("bound points/repeats must be >= 1");
}

SourceStage train_source_stage(const RunConfig& cfg, const LabeledDataset& source) {
  SourceStage out;
  auto trained = train_source(SegNetwork::initialize(cfg.arch, derive_seed(cfg.seed, kInitStream)),
                              source, cfg.train);
  out.network = std::move(trained.network);
  out.loss_curve = std::move(trained.loss_curve);
  out.source_metrics = evaluate_segmentation(out.network, source);
  return out;
}

InternalDistStage internal_dist_stage(const RunConfig& cfg, const SegNetwork& network,
                                      const LabeledDataset& source) {
  InternalDistStage out;
  const ConfidentPool pool = collect_confident_embeddings(
      network, source, cfg.adapt.tau, cfg.pool_rate, derive_seed(cfg.seed, kPoolStream));
  out.pool_counts = pool.counts();
  out.gmm = fit_gmm_em(pool, cfg.em, label_frequencies(source.labels, source.num_classes));
  out.filter = network.classifier;
  const ForwardResult fw = forward(network, source.images);
  const std::size_t f = network.arch.embedding_dim, k = network.arch.num_classes;
  Rng rng(derive_seed(cfg.seed, kSourceSampleStream));
  out.source_embeddings = subsample_rows(fw.embeddings.reshaped({fw.embeddings.size() / f, f}),
                                         cfg.source_embedding_sample, rng);
  const auto pred = argmax_rows(fw.probs.reshaped({fw.probs.size() / k, k}));
  std::size_t wrong = 0, counted = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (source.labels[i] == kIgnoreLabel) continue;
    ++counted;
    if (pred[i] != source.labels[i]) ++wrong;
  }
  out.source_risk = counted ? static_cast<double>(wrong) / static_cast<double>(counted) : 0.0;
  return out;
}

RunReport run_from_source(const RunConfig& cfg, const DomainPair& data, const SourceStage& source,
                          const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  RunReport rep;
  rep.warnings = data.warnings;
  rep.source_miou = source.source_metrics.miou;
  rep.source_risk = 1.0 - source.source_metrics.pixel_accuracy;
  rep.source_loss_curve = source.loss_curve;

  InternalDistStage dist = internal_dist_stage(cfg, source.network, data.source);
  rep.pool_counts = dist.pool_counts;
  for (std::size_t k : dist.gmm.excluded_classes()) {
    rep.warnings.push_back("class " + std::to_string(k) +
                           " has no confident source pixels and is never sampled");
  }
  if (out_dir) save_internal_dist(*out_dir / "gmm", dist);

  rep.pre = evaluate_segmentation(source.network, data.target);
  rep.bound_pre = evaluate_bound(dist.source_embeddings, dist.gmm, dist.filter,
                                 cfg.adapt.tau, pixel_embeddings(source.network, data.target.images),
                                 rep.source_risk, cfg.bound);

  // Source-free from here on: checkpoint, GMM and target images only. Target
  // labels reach the sampler only in oracle mode.
  const std::vector<double> oracle =
      cfg.adapt.label_dist == LabelDistMode::kOracle
          ? label_frequencies(data.target.labels, data.target.num_classes)
          : std::vector<double>{};
  AdaptResult adapted = adapt(source.network, dist.gmm, data.target.images, cfg.adapt, oracle);
  rep.adapt = adapted.report;
  rep.status = adapted.report.status;

  rep.post = evaluate_segmentation(adapted.network, data.target);
  BoundConfig post_cfg = cfg.bound;
  rep.bound_post = evaluate_bound(dist.source_embeddings, dist.gmm, dist.filter,
                                  cfg.adapt.tau,
                                  pixel_embeddings(adapted.network, data.target.images),
                                  rep.source_risk, post_cfg);
  if (out_dir) {
    save_network(*out_dir / "adapted_model", adapted.network, metrics_json(rep.post));
    write_run_artifacts(*out_dir, cfg, rep);
  }
  return rep;
}

RunReport run_mas3(const RunConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  DomainPair data = generate_domain_pair(cfg.spec, cfg.n_source, cfg.n_target);
  if (out_dir) {
    save_dataset(*out_dir / "source", data.source, "source");
    save_dataset(*out_dir / "target", data.target, "target");
  }
  SourceStage source = train_source_stage(cfg, data.source);
  if (out_dir) {
    save_network(*out_dir / "source_model", source.network, metrics_json(source.source_metrics));
  }
  return run_from_source(cfg, data, source, out_dir);
}

}  // namespace mas3
