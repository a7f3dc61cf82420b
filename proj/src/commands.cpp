#include "mas3/commands.hpp"

#include <iomanip>
#include <sstream>

#include "mas3/error.hpp"

namespace mas3 {

namespace fs = std::filesystem;

const std::vector<CommandInfo>& command_table() {
  static const std::vector<CommandInfo> table = {
      {"gen-data", "Generate the source/target domain pair", {}},
      {"train-source", "Train the segmentation network on the source domain", {"source_dir"}},
      {"fit-gmm", "Fit the class-conditional GMM on confident source embeddings",
       {"source_dir", "model_dir"}},
      {"adapt", "Adapt a source model to target images without source data",
       {"model_dir", "gmm_dir", "target_dir", "assert_source_free"}},
      {"evaluate", "Segmentation metrics of a checkpoint on a labeled dataset",
       {"model_dir", "target_dir"}},
      {"bound-check", "Bound terms and triangle check for (source, pseudo, target) embeddings",
       {"model_dir", "gmm_dir", "target_dir", "mode"}},
      {"sweep", "Run the pipeline for several values of tau or projections", {"param", "values"}},
      {"report", "Run every stage and write metrics, loss curves and bound terms", {}},
  };
  return table;
}

const std::set<std::string>& command_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"out_dir"};
    for (const auto& c : command_table()) k.insert(c.keys.begin(), c.keys.end());
    return k;
  }();
  return keys;
}

Json scalar_from_text(const std::string& text) {
  try {
    Json j = Json::parse(text);
    if (j.is_primitive() && !j.is_null()) return j;
  } catch (const Json::exception&) {
  }
  return text;
}

std::vector<fs::path> source_datasets_in(const fs::path& dir) {
  std::vector<fs::path> found;
  if (!fs::is_directory(dir)) return found;
  auto check = [&](const fs::path& d) {
    if (fs::exists(d / "manifest.json")) {
      try {
        if (dataset_role(d) == "source") found.push_back(d);
      } catch (const Error&) {
      }
    }
  };
  check(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) check(entry.path());
  }
  return found;
}

namespace {

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

std::string get_string(const Json& flat, const std::string& key, const std::string& fallback = "") {
  if (!flat.contains(key)) return fallback;
  const Json& v = flat.at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

fs::path required_dir(const Json& flat, const std::string& key, const std::string& what) {
  const std::string dir = get_string(flat, key);
  if (dir.empty()) {
    throw InvalidInput("missing " + what + ": pass " + flag_name(key) + " or set '" + key +
                             "' in the config");
  }
  if (!fs::is_directory(dir)) throw InvalidInput("missing " + what + ": " + dir + " not found");
  return dir;
}

Json summary(const std::string& command) {
  return {{"schema", kReportSchema}, {"command", command}, {"status", "ok"}};
}

Json cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  const auto pair = generate_domain_pair(cfg.spec, cfg.n_source, cfg.n_target);
  save_dataset(out / "source", pair.source, "source");
  save_dataset(out / "target", pair.target, "target");
  Json s = summary("gen-data");
  s["source_dir"] = (out / "source").string();
  s["target_dir"] = (out / "target").string();
  s["n_source"] = cfg.n_source;
  s["n_target"] = cfg.n_target;
  s["separability"] = pair.separability;
  s["warnings"] = pair.warnings;
  return s;
}

Json cmd_train_source(const RunConfig& cfg, const Json& flat, const fs::path& out) {
  const auto source = load_dataset(required_dir(flat, "source_dir", "source dataset"));
  if (source.num_classes != cfg.arch.num_classes || source.width() != cfg.arch.width ||
      source.height() != cfg.arch.height) {
    throw InvalidInput("source dataset does not match the configured image size/classes");
  }
  const auto stage = train_source_stage(cfg, source);
  save_network(out / "source_model", stage.network, metrics_json(stage.source_metrics));
  Json s = summary("train-source");
  s["model_dir"] = (out / "source_model").string();
  s["iterations"] = stage.loss_curve.size();
  s["final_loss"] = stage.loss_curve.empty() ? Json(nullptr) : Json(stage.loss_curve.back());
  s["source_miou"] = stage.source_metrics.miou;
  return s;
}

Json cmd_fit_gmm(const RunConfig& cfg, const Json& flat, const fs::path& out) {
  const auto source = load_dataset(required_dir(flat, "source_dir", "source dataset"));
  const auto network = load_network(required_dir(flat, "model_dir", "model checkpoint"));
  const auto stage = internal_dist_stage(cfg, network, source);
  save_internal_dist(out / "gmm", stage);
  Json s = summary("fit-gmm");
  s["gmm_dir"] = (out / "gmm").string();
  s["pool_counts"] = stage.pool_counts;
  s["excluded_classes"] = stage.gmm.excluded_classes();
  s["components"] = cfg.em.components;
  s["tau"] = cfg.adapt.tau;
  return s;
}

Json cmd_adapt(const RunConfig& cfg, const Json& flat, const fs::path& out, int& exit_code) {
  const fs::path model_dir = required_dir(flat, "model_dir", "model checkpoint");
  const fs::path gmm_dir = required_dir(flat, "gmm_dir", "GMM artifact");
  const fs::path target_dir = required_dir(flat, "target_dir", "target dataset");
  if (flat.value("assert_source_free", false)) {
    for (const fs::path& dir : {target_dir, out, model_dir, gmm_dir}) {
      const auto found = source_datasets_in(dir);
      if (!found.empty()) {
        throw ValidationError("--assert-source-free: source data still present at " +
                                    found.front().string());
      }
    }
  }
  const auto network = load_network(model_dir);
  const auto dist = load_internal_dist(gmm_dir);
  const Tensor images = load_dataset_images(target_dir);
  std::vector<double> oracle;
  if (cfg.adapt.label_dist == LabelDistMode::kOracle) {
    const auto target = load_dataset(target_dir);
    oracle = label_frequencies(target.labels, target.num_classes);
  }
  const auto result = adapt(network, dist.gmm, images, cfg.adapt, oracle);
  save_network(out / "adapted_model", result.network);
  Json rep = to_json(result.report);
  rep["schema"] = kReportSchema;
  rep["config"] = run_config_to_json(cfg);
  write_text(out / "adapt_report.json", rep.dump(2) + "\n");
  write_loss_curve_csv(out / "loss_curve.csv", result.report);
  Json s = summary("adapt");
  s["status"] = result.report.status;
  s["model_dir"] = (out / "adapted_model").string();
  s["iterations"] = result.report.iterations_executed;
  const auto& swd = result.report.swd_curve;
  s["swd_initial"] = swd.empty() ? Json(nullptr) : Json(swd.front());
  s["swd_final"] = swd.empty() ? Json(nullptr) : Json(swd.back());
  if (result.report.status != "ok") exit_code = 2;
  return s;
}

Json cmd_evaluate(const Json& flat, const fs::path& out) {
  const auto network = load_network(required_dir(flat, "model_dir", "model checkpoint"));
  const auto target = load_dataset(required_dir(flat, "target_dir", "target dataset"));
  const auto m = evaluate_segmentation(network, target);
  Json j = to_json(m);
  j["schema"] = kReportSchema;
  write_text(out / "metrics.json", j.dump(2) + "\n");
  Json s = summary("evaluate");
  s["miou"] = m.miou;
  s["pixel_accuracy"] = m.pixel_accuracy;
  s["metrics"] = (out / "metrics.json").string();
  return s;
}

Json cmd_bound_check(const RunConfig& cfg, const Json& flat, const fs::path& out,
                     int& exit_code) {
  const auto network = load_network(required_dir(flat, "model_dir", "model checkpoint"));
  const auto dist = load_internal_dist(required_dir(flat, "gmm_dir", "GMM artifact"));
  const Tensor images = load_dataset_images(required_dir(flat, "target_dir", "target dataset"));
  BoundConfig bc = cfg.bound;
  if (flat.contains("mode")) bc.mode = distance_mode_from_string(get_string(flat, "mode"));
  const auto b = evaluate_bound(dist.source_embeddings, dist.gmm, dist.filter,
                                      cfg.adapt.tau, pixel_embeddings(network, images),
                                      dist.source_risk, bc);
  Json j = to_json(b);
  j["schema"] = kReportSchema;
  j["one_minus_tau"] = 1.0 - cfg.adapt.tau;
  write_text(out / "bound_terms.json", j.dump(2) + "\n");
  Json s = summary("bound-check");
  s["w_sz"] = b.mean.w_sz;
  s["w_zt"] = b.mean.w_zt;
  s["w_st"] = b.mean.w_st;
  s["triples"] = b.triples;
  s["triangle_violations"] = b.triangle_violations;
  s["bound_terms"] = (out / "bound_terms.json").string();
  if (b.mean.mode == DistanceMode::kExact && b.triangle_violations > 0) {
    s["status"] = "triangle-violation";
    exit_code = 2;
  }
  return s;
}

Json run_summary(const std::string& command, const RunReport& r, const fs::path& out) {
  Json s = summary(command);
  s["status"] = r.status;
  s["out_dir"] = out.string();
  s["pre_miou"] = r.pre.miou;
  s["post_miou"] = r.post.miou;
  s["swd_initial"] = r.adapt.swd_curve.empty() ? Json(nullptr) : Json(r.adapt.swd_curve.front());
  s["swd_final"] = r.adapt.swd_curve.empty() ? Json(nullptr) : Json(r.adapt.swd_curve.back());
  return s;
}

void write_report_extras(const fs::path& out, const RunConfig& cfg, const RunReport& r) {
  Json bounds = {{"schema", kReportSchema},
                 {"pre", to_json(r.bound_pre)},
                 {"post", to_json(r.bound_post)},
                 {"one_minus_tau", 1.0 - cfg.adapt.tau}};
  write_text(out / "bound_terms.json", bounds.dump(2) + "\n");
  Json metrics = {{"schema", kReportSchema},
                  {"pre", to_json(r.pre)},
                  {"post", to_json(r.post)}};
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
}

Json cmd_report(const RunConfig& cfg, const fs::path& out, int& exit_code) {
  const auto r = run_mas3(cfg, out);
  write_report_extras(out, cfg, r);
  if (r.status != "ok") exit_code = 2;
  Json s = run_summary("report", r, out);
  s["report"] = (out / "run_report.json").string();
  s["loss_curve"] = (out / "loss_curve.csv").string();
  s["bound_terms"] = (out / "bound_terms.json").string();
  return s;
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Json cmd_sweep(const RunConfig& cfg, const Json& flat, const fs::path& out, int& exit_code) {
  const std::string param = get_string(flat, "param", "tau");
  std::string values = get_string(flat, "values");
  if (param == "tau") {
    if (values.empty()) values = "0,0.8,0.97";
  } else if (param == "projections") {
    if (values.empty()) values = "5,20,50,100,200";
  } else {
    throw InvalidInput("sweep --param must be 'tau' or 'projections'");
  }
  const auto list = split_values(values);
  if (list.empty()) throw InvalidInput("sweep needs at least one value");
  std::vector<RunConfig> configs;
  for (const auto& v : list) {
    Json point = flat;
    point[param] = scalar_from_text(v);
    configs.push_back(run_config_from_json(point, command_keys()));
  }
  // The source stage does not depend on the swept parameter; train it once.
  const auto data = generate_domain_pair(cfg.spec, cfg.n_source, cfg.n_target);
  const auto source = train_source_stage(cfg, data.source);
  save_network(out / "source_model", source.network, metrics_json(source.source_metrics));

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "param,value,pre_miou,post_miou,miou_gain,swd_initial,swd_final,status,report\n";
  Json runs = Json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const fs::path dir = out / (param + "_" + list[i]);
    const auto r = run_from_source(configs[i], data, source, dir);
    write_report_extras(dir, configs[i], r);
    if (r.status != "ok") exit_code = 2;
    const double swd0 = r.adapt.swd_curve.empty() ? 0.0 : r.adapt.swd_curve.front();
    const double swd1 = r.adapt.swd_curve.empty() ? 0.0 : r.adapt.swd_curve.back();
    csv << param << ',' << list[i] << ',' << r.pre.miou << ',' << r.post.miou << ','
        << r.post.miou - r.pre.miou << ',' << swd0 << ',' << swd1 << ',' << r.status << ','
        << (dir / "run_report.json").string() << '\n';
    runs.push_back({{"value", scalar_from_text(list[i])},
                    {"pre_miou", r.pre.miou},
                    {"post_miou", r.post.miou},
                    {"status", r.status},
                    {"report", (dir / "run_report.json").string()}});
  }
  write_text(out / ("sweep_" + param + ".csv"), csv.str());
  Json s = summary("sweep");
  s["param"] = param;
  s["runs"] = runs;
  s["csv"] = (out / ("sweep_" + param + ".csv")).string();
  return s;
}


}  // namespace

CommandResult run_command(const std::string& name, const Json& flat_in, const fs::path& out) {
  if (!flat_in.is_object()) throw InvalidInput("config must be a flat JSON object");
  bool known = false;
  for (const auto& c : command_table()) known = known || c.name == name;
  if (!known) throw InvalidInput("unknown command '" + name + "'");
  Json flat = flat_in;
  flat["out_dir"] = out.string();
  const RunConfig cfg = run_config_from_json(flat, command_keys());
  fs::create_directories(out);
  CommandResult r;
  int& code = r.exit_code;
  if (name == "gen-data") r.summary = cmd_gen_data(cfg, out);
  else if (name == "train-source") r.summary = cmd_train_source(cfg, flat, out);
  else if (name == "fit-gmm") r.summary = cmd_fit_gmm(cfg, flat, out);
  else if (name == "adapt") r.summary = cmd_adapt(cfg, flat, out, code);
  else if (name == "evaluate") r.summary = cmd_evaluate(flat, out);
  else if (name == "bound-check") r.summary = cmd_bound_check(cfg, flat, out, code);
  else if (name == "sweep") r.summary = cmd_sweep(cfg, flat, out, code);
  else r.summary = cmd_report(cfg, out, code);
  return r;
}

}  // namespace mas3
