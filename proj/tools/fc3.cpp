#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fc3/runner.hpp"
#include "fc3/serve.hpp"

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int) { stop_requested = true; }

void configure_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fc3"));
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("FC3_LOG")) {
    const auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only "off" itself should silence logging.
    if (parsed == spdlog::level::off && std::string(level) != "off")
      spdlog::warn("FC3_LOG='{}' is not a log level (trace, debug, info, warn, error, critical, off)", level);
    else
      spdlog::set_level(parsed);
  }
}

/// A path, or the name of a bundled scenario.
fc3::Scenario load(const std::string& what) {
  if (!std::filesystem::exists(what) && std::filesystem::exists(fc3::bundled_scenario_path(what)))
    return fc3::build_scenario(what);
  return fc3::load_scenario(what);
}

int report(const fc3::ScenarioError& e) {
  for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Feasibility-based controller-chain coordination: batch runs, live sessions, scenario checks."};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run trials and write one CSV row per trial");
  std::vector<std::string> run_scenarios;
  std::vector<std::string> systems{"fc3"};
  std::vector<std::string> interferences;
  int trials = 5;
  std::uint64_t seed = 0;
  std::string out = "-";
  bool table = false;
  run->add_option("--scenario", run_scenarios, "Scenario file or bundled name (repeatable)")->required();
  run->add_option("--system", systems, "fc3, rgds or linear (repeatable)")
      ->check(CLI::IsMember({"fc3", "rgds", "linear"}));
  run->add_option("--interference", interferences, "I<k> (repeatable; default: all of the scenario)");
  run->add_option("--trials", trials, "Trials per cell")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Base seed");
  run->add_option("--out", out, "CSV path, '-' for stdout");
  run->add_flag("--table", table, "Print the mean success time per cell");

  auto* serve = app.add_subcommand("serve", "Serve a live session over a websocket");
  std::string serve_scenario;
  unsigned short port = 8080;
  std::string serve_system = "fc3";
  std::string serve_interference = "I0";
  double speed = 1.0;
  serve->add_option("--scenario", serve_scenario, "Scenario file or bundled name")->required();
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--system", serve_system, "Initial system")->check(CLI::IsMember({"fc3", "rgds", "linear"}));
  serve->add_option("--interference", serve_interference, "Initial interference");
  serve->add_option("--seed", seed, "Seed");
  serve->add_option("--speed", speed, "Sim seconds per wall second")->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("check", "Load and validate a scenario file");
  std::string check_scenario;
  check->add_option("--scenario", check_scenario, "Scenario file or bundled name")->required();

  auto* dump = app.add_subcommand("dump", "Print a scenario in canonical form");
  std::string dump_scenario;
  dump->add_option("--scenario", dump_scenario, "Scenario file or bundled name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      std::vector<fc3::Scenario> loaded;
      loaded.reserve(run_scenarios.size());
      for (const auto& s : run_scenarios) loaded.push_back(load(s));
      fc3::BatchSpec spec;
      for (const auto& s : loaded) {
        spec.scenarios.push_back(&s);
        for (const auto& id : interferences) s.interference(id);  // fail before running anything
      }
      for (const auto& s : systems) spec.systems.push_back(fc3::parse_system(s));
      spec.interferences = interferences;
      spec.trials = trials;
      spec.seed = seed;
      const auto rows = fc3::run_batch(spec, [](const fc3::ResultRow& r) {
        spdlog::info("{} {} {} #{}: {} at {:.2f} s ({} switches)", r.scenario, r.system, r.interference, r.trial,
                     r.outcome, r.sim_time_s, r.chain_switches);
      });
      if (out == "-") {
        fc3::write_csv(std::cout, rows);
      } else {
        std::ofstream file(out);
        if (!file) throw std::runtime_error("cannot write " + out);
        fc3::write_csv(file, rows);
        if (!file) throw std::runtime_error("failed writing " + out);
        spdlog::info("wrote {} rows to {}", rows.size(), out);
      }
      if (table) (out == "-" ? std::cerr : std::cout) << fc3::format_aggregate(fc3::aggregate(rows));
    } else if (*serve) {
      fc3::Session session(load(serve_scenario), {seed, fc3::parse_system(serve_system), serve_interference});
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      fc3::ServeOptions options;
      options.port = port;
      options.speed = speed;
      fc3::serve(session, options, stop_requested);
    } else if (*check) {
      const auto s = load(check_scenario);
      std::cout << s.spec.name << ": ok (" << s.scene.frame_count() << " frames, " << s.domain.actions().size()
                << " ground actions, " << s.interference_ids().size() << " interferences)\n";
    } else if (*dump) {
      const auto s = load(dump_scenario);
      std::cout << fc3::dump_scenario(s.spec) << '\n';
    }
  } catch (const fc3::ScenarioError& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
