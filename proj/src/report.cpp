#include "mas3/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "mas3/error.hpp"
#include "mas3/tensor_io.hpp"

namespace mas3 {
namespace {

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidInput(std::string("config key '") + key + "' has the wrong type");
  }
}

Json optional_array(const std::vector<std::optional<double>>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(x ? Json(*x) : Json(nullptr));
  return a;
}

}  // namespace

const std::set<std::string>& run_config_keys() {
  static const std::set<std::string> keys = {
      "seed", "data_seed", "layout", "width", "height", "hue_degrees", "brightness",
      "noise_scale", "warp", "n_source", "n_target", "embedding_dim", "encoder_width",
      "decoder_width", "patch_radius", "train_iterations", "train_batch_size", "train_lr",
      "components", "em_max_iterations", "em_tolerance", "covariance_floor", "em_restarts",
      "pool_rate", "source_embedding_sample", "lambda", "tau", "projections", "order",
      "adapt_iterations", "adapt_batch_size", "pixels_per_image", "pseudo_batch", "label_dist",
      "adapt_lr", "checkpoint_every", "bound_points", "bound_repeats", "bound_mode"};
  return keys;
}

RunConfig run_config_from_json(const Json& flat, const std::set<std::string>& extra_keys) {
  if (!flat.is_object()) throw InvalidInput("config must be a flat JSON object");
  for (const auto& [key, value] : flat.items()) {
    if (!run_config_keys().contains(key) && !extra_keys.contains(key)) {
      throw InvalidInput("unknown config key '" + key + "'");
    }
    if (value.is_object() || value.is_array()) {
      throw InvalidInput("config key '" + key + "' must be a scalar");
    }
  }
  RunConfig c;
  std::uint64_t data_seed = c.spec.seed;
  read(flat, "data_seed", data_seed);
  c.spec = DomainSpec::shift3(data_seed);
  std::string layout = to_string(c.spec.layout);
  read(flat, "layout", layout);
  c.spec.layout = layout_from_string(layout);
  read(flat, "width", c.spec.width);
  read(flat, "height", c.spec.height);
  read(flat, "hue_degrees", c.spec.shift.hue_degrees);
  read(flat, "brightness", c.spec.shift.brightness);
  read(flat, "noise_scale", c.spec.shift.noise_scale);
  read(flat, "warp", c.spec.shift.warp);
  read(flat, "n_source", c.n_source);
  read(flat, "n_target", c.n_target);

  read(flat, "embedding_dim", c.arch.embedding_dim);
  read(flat, "encoder_width", c.arch.encoder_width);
  read(flat, "decoder_width", c.arch.decoder_width);
  read(flat, "patch_radius", c.arch.patch_radius);
  read(flat, "train_iterations", c.train.iterations);
  read(flat, "train_batch_size", c.train.batch_size);
  read(flat, "train_lr", c.train.adam.learning_rate);

  read(flat, "components", c.em.components);
  read(flat, "em_max_iterations", c.em.max_iterations);
  read(flat, "em_tolerance", c.em.tolerance);
  read(flat, "covariance_floor", c.em.covariance_floor);
  read(flat, "em_restarts", c.em.restarts);
  read(flat, "pool_rate", c.pool_rate);
  read(flat, "source_embedding_sample", c.source_embedding_sample);

  read(flat, "lambda", c.adapt.lambda);
  read(flat, "tau", c.adapt.tau);
  read(flat, "projections", c.adapt.swd.projections);
  read(flat, "order", c.adapt.swd.order);
  read(flat, "adapt_iterations", c.adapt.iterations);
  read(flat, "adapt_batch_size", c.adapt.batch_size);
  read(flat, "pixels_per_image", c.adapt.pixels_per_image);
  read(flat, "pseudo_batch", c.adapt.pseudo_batch);
  std::string label_dist = to_string(c.adapt.label_dist);
  read(flat, "label_dist", label_dist);
  c.adapt.label_dist = label_dist_mode_from_string(label_dist);
  read(flat, "adapt_lr", c.adapt.adam.learning_rate);
  read(flat, "checkpoint_every", c.adapt.checkpoint_every);

  read(flat, "bound_points", c.bound.points);
  read(flat, "bound_repeats", c.bound.repeats);
  std::string bound_mode = to_string(c.bound.mode);
  read(flat, "bound_mode", bound_mode);
  c.bound.mode = distance_mode_from_string(bound_mode);

  read(flat, "seed", c.seed);
  c.derive();
  c.validate();
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"data_seed", c.spec.seed},
          {"layout", to_string(c.spec.layout)},
          {"width", c.spec.width},
          {"height", c.spec.height},
          {"hue_degrees", c.spec.shift.hue_degrees},
          {"brightness", c.spec.shift.brightness},
          {"noise_scale", c.spec.shift.noise_scale},
          {"warp", c.spec.shift.warp},
          {"n_source", c.n_source},
          {"n_target", c.n_target},
          {"embedding_dim", c.arch.embedding_dim},
          {"encoder_width", c.arch.encoder_width},
          {"decoder_width", c.arch.decoder_width},
          {"patch_radius", c.arch.patch_radius},
          {"train_iterations", c.train.iterations},
          {"train_batch_size", c.train.batch_size},
          {"train_lr", c.train.adam.learning_rate},
          {"components", c.em.components},
          {"em_max_iterations", c.em.max_iterations},
          {"em_tolerance", c.em.tolerance},
          {"covariance_floor", c.em.covariance_floor},
          {"em_restarts", c.em.restarts},
          {"pool_rate", c.pool_rate},
          {"source_embedding_sample", c.source_embedding_sample},
          {"lambda", c.adapt.lambda},
          {"tau", c.adapt.tau},
          {"projections", c.adapt.swd.projections},
          {"order", c.adapt.swd.order},
          {"adapt_iterations", c.adapt.iterations},
          {"adapt_batch_size", c.adapt.batch_size},
          {"pixels_per_image", c.adapt.pixels_per_image},
          {"pseudo_batch", c.adapt.pseudo_batch},
          {"label_dist", to_string(c.adapt.label_dist)},
          {"adapt_lr", c.adapt.adam.learning_rate},
          {"checkpoint_every", c.adapt.checkpoint_every},
          {"bound_points", c.bound.points},
          {"bound_repeats", c.bound.repeats},
          {"bound_mode", to_string(c.bound.mode)}};
}

Json to_json(const SegMetrics& m) {
  Json confusion = Json::array();
  const std::size_t k = m.confusion.num_classes();
  for (std::size_t r = 0; r < k; ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < k; ++c) row.push_back(m.confusion.at(r, c));
    confusion.push_back(row);
  }
  return {{"miou", m.miou},
          {"per_class_iou", optional_array(m.per_class)},
          {"pixel_accuracy", m.pixel_accuracy},
          {"confusion", confusion}};
}

Json to_json(const BoundTerms& b) {
  return {{"w_sz", b.w_sz},
          {"w_zt", b.w_zt},
          {"w_st", b.w_st},
          {"source_risk", b.source_risk},
          {"n_s", b.n_s},
          {"n_t", b.n_t},
          {"mode", to_string(b.mode)},
          {"triangle_slack", b.triangle_slack},
          {"triangle_holds", b.triangle_holds},
          // Terms with unobservable constants, reported symbolically.
          {"symbolic_terms",
           {"sqrt(2 log(1/xi) / zeta) * (sqrt(1/n_s) + sqrt(1/n_t))", "e_C(h*)", "1 - tau"}}};
}

Json to_json(const BoundSummary& b) {
  return {{"mean", to_json(b.mean)},
          {"triples", b.triples},
          {"triangle_violations", b.triangle_violations},
          {"min_triangle_slack", b.triples ? Json(b.min_triangle_slack) : Json(nullptr)},
          {"points", b.points}};
}

Json to_json(const AdaptReport& r) {
  return {{"status", r.status},
          {"iterations_executed", r.iterations_executed},
          {"restored_iteration", r.restored_iteration},
          {"pseudo_samples", r.pseudo_samples},
          {"pseudo_violations", r.pseudo_violations},
          {"ce_term", r.ce_curve},
          {"swd_term", r.swd_curve},
          {"acceptance", r.acceptance_curve}};
}

Json to_json(const RunReport& r) {
  return {{"schema", kReportSchema},
          {"status", r.status},
          {"source_miou", r.source_miou},
          {"source_risk", r.source_risk},
          {"pre", to_json(r.pre)},
          {"post", to_json(r.post)},
          {"miou_gain", r.post.miou - r.pre.miou},
          {"pool_counts", r.pool_counts},
          {"source_loss", r.source_loss_curve},
          {"adapt", to_json(r.adapt)},
          {"bound_pre", to_json(r.bound_pre)},
          {"bound_post", to_json(r.bound_post)},
          {"warnings", r.warnings}};
}

std::string metrics_json(const SegMetrics& m) { return to_json(m).dump(); }

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
  if (!out) throw Error("failed writing " + file.string());
}

void write_loss_curve_csv(const std::filesystem::path& file, const AdaptReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "iteration,ce_term,swd_term,acceptance\n";
  for (std::size_t i = 0; i < r.swd_curve.size(); ++i) {
    out << i << ',' << r.ce_curve[i] << ',' << r.swd_curve[i] << ',' << r.acceptance_curve[i]
        << '\n';
  }
  write_text(file, out.str());
}

void write_run_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                         const RunReport& r) {
  Json j = to_json(r);
  j["config"] = run_config_to_json(cfg);
  write_text(dir / "run_report.json", j.dump(2) + "\n");
  write_loss_curve_csv(dir / "loss_curve.csv", r.adapt);
}

void save_internal_dist(const std::filesystem::path& dir, const InternalDistStage& stage) {
  save_gmm(dir, stage.gmm);
  save_tensor(dir / "filter_weight.tnsr", stage.filter.weight);
  save_tensor(dir / "filter_bias.tnsr", stage.filter.bias);
  save_tensor(dir / "source_embeddings.tnsr", stage.source_embeddings);
  const Json extra = {{"schema", kReportSchema},
                      {"source_risk", stage.source_risk},
                      {"pool_counts", stage.pool_counts}};
  write_text(dir / "stage.json", extra.dump(2) + "\n");
}

InternalDistStage load_internal_dist(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw InvalidInput("missing GMM artifact: " + (dir / "manifest.json").string());
  }
  InternalDistStage out;
  out.gmm = load_gmm(dir);
  for (const auto& c : out.gmm.classes()) out.pool_counts.push_back(c.pool_size);
  out.filter.weight = load_tensor(dir / "filter_weight.tnsr");
  out.filter.bias = load_tensor(dir / "filter_bias.tnsr");
  if (out.filter.weight.shape() != Tensor::Shape{out.gmm.dim(), out.gmm.num_classes()} ||
      out.filter.bias.shape() != Tensor::Shape{out.gmm.num_classes()}) {
    throw CorruptFile("filter classifier in " + dir.string() + " does not match the GMM");
  }
  out.source_embeddings = load_tensor(dir / "source_embeddings.tnsr");
  if (out.source_embeddings.rank() != 2 || out.source_embeddings.cols() != out.gmm.dim()) {
    throw CorruptFile("source embedding sample in " + dir.string() +
                      " does not match the GMM dimension");
  }
  std::ifstream in(dir / "stage.json");
  try {
    out.source_risk = Json::parse(in).at("source_risk").get<double>();
  } catch (const Json::exception& e) {
    throw CorruptFile("unreadable stage.json in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace mas3
