// mas3 command line: one subcommand per pipeline stage plus sweeps and
// reports. Every flag also reads from the flat JSON --config file; flags win.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "mas3/commands.hpp"
#include "mas3/error.hpp"

namespace fs = std::filesystem;
using mas3::Json;

namespace {

constexpr const char* kOutDirEnv = "MAS3_OUT_DIR";

struct Invocation {
  std::string command;
  std::string config_path;
  std::map<std::string, std::string> flags;  // config key -> raw flag text
  bool assert_source_free = false;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

Json load_flat_config(const Invocation& inv) {
  Json flat = Json::object();
  if (!inv.config_path.empty()) {
    std::ifstream in(inv.config_path);
    if (!in) throw mas3::InvalidInput("cannot open config file " + inv.config_path);
    try {
      flat = Json::parse(in);
    } catch (const Json::exception& e) {
      throw mas3::InvalidInput("config file " + inv.config_path + " is not valid JSON: " + e.what());
    }
    if (!flat.is_object()) throw mas3::InvalidInput("config file must hold a flat JSON object");
  }
  for (const auto& [key, text] : inv.flags) flat[key] = mas3::scalar_from_text(text);
  if (inv.assert_source_free) flat["assert_source_free"] = true;
  return flat;
}

// --out-dir, then MAS3_OUT_DIR, then the config file's out_dir.
fs::path out_dir_of(const Invocation& inv, const Json& flat) {
  if (inv.flags.contains("out_dir")) return inv.flags.at("out_dir");
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  if (flat.contains("out_dir") && flat["out_dir"].is_string()) {
    return flat["out_dir"].get<std::string>();
  }
  return "mas3_out";
}

void print_failure(const std::string& command, int code, const std::string& message) {
  std::cerr << "mas3 " << command << ": " << message << '\n';
  const Json s = {{"schema", mas3::kReportSchema},
                  {"command", command},
                  {"status", "error"},
                  {"exit_code", code},
                  {"error", message}};
  std::cout << s.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mas3: source-free domain adaptation for segmentation at desk scale"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Invocation inv;
  for (const auto& spec : mas3::command_table()) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    sub->add_option("--config", inv.config_path, "Flat JSON config file");
    sub->add_option_function<std::string>(
        "--out-dir", [&inv](const std::string& v) { inv.flags["out_dir"] = v; },
        std::string("Output directory (env ") + kOutDirEnv + " applies when absent)");
    for (const auto& key : spec.keys) {
      if (key == "assert_source_free") {
        sub->add_flag("--assert-source-free", inv.assert_source_free,
                      "Fail if source dataset files are reachable from the inputs or out-dir");
        continue;
      }
      sub->add_option_function<std::string>(
          flag_name(key), [&inv, key](const std::string& v) { inv.flags[key] = v; }, key);
    }
    for (const auto& key : mas3::run_config_keys()) {
      sub->add_option_function<std::string>(
          flag_name(key), [&inv, key](const std::string& v) { inv.flags[key] = v; }, key);
    }
    sub->callback([&inv, name = spec.name] { inv.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const Json flat = load_flat_config(inv);
    const auto result = mas3::run_command(inv.command, flat, out_dir_of(inv, flat));
    if (result.summary.contains("warnings")) {
      for (const auto& w : result.summary["warnings"]) {
        std::cerr << "warning: " << w.get<std::string>() << '\n';
      }
    }
    std::cout << result.summary.dump() << std::endl;
    return result.exit_code;
  } catch (const mas3::ValidationError& e) {
    print_failure(inv.command, 1, e.what());
    return 1;
  } catch (const std::exception& e) {
    print_failure(inv.command, 2, e.what());
    return 2;
  }
}
