// Command-line front end: deterministic experiment runs with JSON reports
// and optional CSV curve dumps.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <string>

#include "nsg/nsg.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& out_path,
                const std::string& csv_path) {
  using nsg::harness::json;
  json config;
  nsg::harness::Report report;
  try {
    config = nsg::harness::load_config(config_path);
    report = nsg::harness::run(config);
  } catch (const nsg::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  json doc = nsg::harness::report_to_json(report);
  std::string report_path = out_path;
  if (report_path.empty() && config.contains("output") &&
      config["output"].contains("report"))
    report_path = config["output"]["report"].get<std::string>();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) {
      std::cerr << "cannot write report to " << report_path << "\n";
      return 2;
    }
    out << doc.dump(2) << "\n";
  } else {
    std::cout << doc.dump(2) << "\n";
  }

  std::string curves_path = csv_path;
  if (curves_path.empty() && config.contains("output") &&
      config["output"].contains("csv"))
    curves_path = config["output"]["csv"].get<std::string>();
  if (!curves_path.empty()) {
    std::ofstream out(curves_path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write csv to " << curves_path << "\n";
      return 2;
    }
    out << nsg::harness::report_to_csv(report);
  }

  for (const auto& rec : report.checks) {
    std::cerr << (rec.error.empty() ? (rec.satisfied ? "ok   " : "FAIL ") : "ERROR ")
              << rec.name;
    if (!rec.error.empty()) std::cerr << " (" << rec.error << ")";
    std::cerr << "\n";
  }
  return nsg::harness::exit_code_for(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsg - nonsmooth-analysis toolkit for model manifolds and sphere maps"};
  app.require_subcommand(1);

  std::string config_path, out_path, csv_path;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_path, "report output path (default: from config or stdout)");
  run->add_option("--csv", csv_path, "curve CSV output path");

  CLI::App* list = app.add_subcommand("list", "list available experiments");
  CLI::App* version = app.add_subcommand("version", "print the tool version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return run_command(config_path, out_path, csv_path);
  if (list->parsed()) {
    std::cout << nsg::harness::list_experiments();
    return 0;
  }
  if (version->parsed()) {
    std::cout << "nsg " << nsg::kVersion << "\n";
    return 0;
  }
  return 2;
}
