// prebim command-line front end: simulate, discover, estimate, bench.
//
// Exit codes: 0 success, 1 input or usage error, 2 no valid IV set found.

#include "prebim/prebim.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitEmpty = 2;

struct CommonOptions {
  double alpha = 0.05;
  std::size_t max_set_size = 0;
  bool merge_same_direction = true;
  bool uncorrected_pct = false;
  bool per_set_majority = false;
  bool trace = false;
  bool no_center = false;
};

struct Options {
  CommonOptions common;
  std::string input;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::size_t> scenario;
  std::vector<std::size_t> sizes;
  bool one_directional = false;
  bool correlated_valid = false;
  bool motivating_example = false;
  std::string params_path;
  double identifiability_margin = prebim::ScenarioSpec{}.identifiability_margin;
  std::string specs;
  std::size_t reps = 0;
  std::size_t threads = 0;
  double missing_penalty = 0.0;
  bool plot_data = false;
  bool quiet = false;
};

void add_search_flags(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--alpha", c.alpha, "significance level of the correlation tests")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("-W,--max-set-size", c.max_set_size, "maximum size of a valid IV set (default min(g,10))");
  cmd->add_option("--merge-same-direction", c.merge_same_direction,
                  "merge a new set into the kept one when their union passes")
      ->capture_default_str();
  cmd->add_flag("--uncorrected-pct", c.uncorrected_pct,
                "use the plain Fisher z statistic without the slope-estimation correction");
  cmd->add_flag("--per-set-majority", c.per_set_majority, "assign each set wholesale by majority vote");
}

prebim::DiscoveryConfig discovery_config(const CommonOptions& c) {
  prebim::DiscoveryConfig config;
  config.alpha = c.alpha;
  config.max_set_size = c.max_set_size;
  config.merge_same_direction = c.merge_same_direction;
  config.slope_correction = !c.uncorrected_pct;
  config.validate();
  return config;
}

prebim::ScenarioSpec scenario_from(const Options& o, std::size_t n) {
  if (o.scenario.size() != 3) throw prebim::InvalidInput("--scenario expects a,b,g");
  prebim::ScenarioSpec s;
  s.n_valid_xy = o.scenario[0];
  s.n_valid_yx = o.scenario[1];
  s.n_total = o.scenario[2];
  s.sample_size = n;
  s.bidirectional = !o.one_directional;
  s.correlated_valid = o.correlated_valid;
  s.seed = o.seed;
  s.identifiability_margin = o.identifiability_margin;
  s.validate();
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw prebim::InvalidInput("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw prebim::InvalidInput("write to '" + path + "' failed");
}

int cmd_simulate(const Options& o) {
  if (o.out.empty()) throw prebim::InvalidInput("simulate needs --out PREFIX");
  const std::size_t n = o.sizes.empty() ? prebim::ScenarioSpec{}.sample_size : o.sizes.front();
  prebim::Rng rng(prebim::derive_seed(o.seed, 0, 0));

  prebim::ScenarioSpec spec;
  prebim::ScenarioDraw draw;
  if (o.motivating_example || !o.params_path.empty()) {
    if (o.motivating_example) {
      draw.params = prebim::motivating_example_params();
      draw.labels.valid_for_xy = {0, 2};
    } else {
      std::ifstream in(o.params_path);
      if (!in) throw prebim::InvalidInput("cannot open '" + o.params_path + "'");
      const auto j = prebim::io::Json::parse(in);
      draw.params = prebim::io::model_params_from_json(j.contains("params") ? j.at("params") : j);
      if (j.contains("labels")) {
        draw.labels.valid_for_xy = j["labels"].value("valid_for_xy", prebim::IndexSet{});
        draw.labels.valid_for_yx = j["labels"].value("valid_for_yx", prebim::IndexSet{});
      }
    }
    spec.n_valid_xy = draw.labels.valid_for_xy.size();
    spec.n_valid_yx = draw.labels.valid_for_yx.size();
    spec.n_total = draw.params.variants();
    spec.sample_size = n;
    spec.bidirectional = draw.params.beta_yx != 0.0;
    spec.seed = o.seed;
  } else {
    spec = scenario_from(o, n);
    draw = prebim::draw_scenario_params(spec, rng);
  }

  const auto sim = prebim::simulate(draw.params, n, rng);
  std::ostringstream csv;
  prebim::io::write_simulation_csv(csv, sim);
  write_text(o.out + ".csv", csv.str());
  write_text(o.out + ".truth.json", prebim::io::ground_truth_json(spec, draw).dump(2) + "\n");
  if (!o.quiet) std::cout << "wrote " << o.out << ".csv and " << o.out << ".truth.json\n";
  return kExitOk;
}

int cmd_discover(const Options& o, bool estimate) {
  if (o.input.empty()) throw prebim::InvalidInput("--in is required");
  const auto data = prebim::io::read_dataset_csv(o.input, !o.common.no_center);
  const auto config = discovery_config(o.common);
  prebim::DirectionOptions direction;
  direction.per_set_majority = o.common.per_set_majority;

  prebim::PipelineResult result;
  result.discovery = prebim::find_valid_iv_sets(data, config);
  if (estimate) result.effects = prebim::infer_direction_effects(data, result.discovery.collection, direction);

  auto j = prebim::io::to_json(result, data, config, o.common.trace);
  if (!estimate) {
    for (const char* key : {"assigned_xy", "assigned_yx", "beta_hat_xy", "beta_hat_yx", "dropped", "split_sets"})
      j.erase(key);
  }
  const auto text = j.dump(2) + "\n";
  if (!o.out.empty()) write_text(o.out, text);
  if (!o.quiet) std::cout << text;
  if (!result.effects.split_sets.empty())
    std::cerr << "warning: direction votes disagree inside " << result.effects.split_sets.size() << " set(s)\n";
  if (!result.effects.dropped.empty())
    std::cerr << "warning: " << result.effects.dropped.size() << " variant(s) dropped as irrelevant to X\n";
  return result.discovery.collection.empty() ? kExitEmpty : kExitOk;
}

int cmd_bench(const Options& o) {
  std::vector<prebim::ScenarioSpec> specs;
  std::size_t reps = 100;
  std::uint64_t seed = o.seed;
  if (!o.specs.empty()) {
    const auto list = prebim::io::read_spec_list(o.specs);
    specs = list.specs;
    if (list.reps) reps = *list.reps;
    if (list.seed) seed = *list.seed;
  } else {
    if (o.scenario.empty()) throw prebim::InvalidInput("bench needs --specs FILE or --scenario a,b,g");
    const auto sizes = o.sizes.empty() ? std::vector<std::size_t>{prebim::ScenarioSpec{}.sample_size} : o.sizes;
    for (auto n : sizes) specs.push_back(scenario_from(o, n));
  }
  if (o.reps != 0) reps = o.reps;
  const auto config = discovery_config(o.common);
  prebim::BenchmarkOptions options;
  options.threads = o.threads;
  options.missing_penalty = o.missing_penalty;

  std::vector<prebim::BenchmarkReport> reports;
  for (const auto& s : specs) {
    reports.push_back(prebim::run_scenario(s, reps, config, seed, options));
    if (!o.quiet)
      std::cerr << s.name() << " n=" << s.sample_size << " done in " << reports.back().wall_time << " s\n";
  }

  if (!o.quiet) prebim::io::print_report_table(std::cout, reports);
  if (!o.out.empty()) {
    write_text(o.out + ".json", prebim::io::reports_json(reports, seed, config, options).dump(2) + "\n");
    std::ostringstream csv;
    prebim::io::write_reports_csv(csv, reports);
    write_text(o.out + ".csv", csv.str());
    if (o.common.trace) std::cerr << "note: --trace has no effect on bench\n";
  }
  if (o.plot_data) {
    std::ostringstream plot;
    prebim::io::write_plot_data_csv(plot, reports);
    if (o.out.empty())
      std::cout << plot.str();
    else
      write_text(o.out + ".plot.csv", plot.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Valid IV set discovery and bi-directional effect estimation"};
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "draw a scenario and write dataset CSV plus ground truth JSON");
  simulate->add_option("--scenario", o.scenario, "a,b,g: valid X->Y, valid Y->X, total variants")->delimiter(',');
  simulate->add_option("--n", o.sizes, "sample size")->expected(1);
  simulate->add_option("--seed", o.seed, "master seed")->capture_default_str();
  simulate->add_flag("--one-directional", o.one_directional, "force beta_yx = 0");
  simulate->add_flag("--correlated-valid", o.correlated_valid, "make two valid variants dependent");
  simulate->add_option("--identifiability-margin", o.identifiability_margin,
                       "minimum cross-product distance from proportional loadings")
      ->capture_default_str();
  simulate->add_flag("--motivating-example", o.motivating_example, "use the five-variant worked example");
  simulate->add_option("--params", o.params_path, "ground truth JSON to simulate from");
  simulate->add_option("--out", o.out, "output prefix")->required();
  simulate->add_flag("--quiet", o.quiet);

  auto* discover = app.add_subcommand("discover", "find valid IV sets in a dataset CSV");
  auto* estimate = app.add_subcommand("estimate", "find valid IV sets, infer directions and estimate effects");
  for (auto* cmd : {discover, estimate}) {
    cmd->add_option("--in", o.input, "dataset CSV")->required();
    cmd->add_option("--out", o.out, "write the JSON result here as well");
    add_search_flags(cmd, o.common);
    cmd->add_flag("--trace", o.common.trace, "include the search trace in the output");
    cmd->add_flag("--no-center", o.common.no_center, "input is already centered");
    cmd->add_flag("--quiet", o.quiet);
  }

  auto* bench = app.add_subcommand("bench", "run replicated simulation benchmarks");
  bench->add_option("--specs", o.specs, "JSON spec list");
  bench->add_option("--scenario", o.scenario, "a,b,g when no spec list is given")->delimiter(',');
  bench->add_option("--n", o.sizes, "sample sizes")->delimiter(',');
  bench->add_flag("--one-directional", o.one_directional);
  bench->add_flag("--correlated-valid", o.correlated_valid);
  bench->add_option("--identifiability-margin", o.identifiability_margin)->capture_default_str();
  bench->add_option("--reps", o.reps, "replications per scenario (overrides the spec list)");
  bench->add_option("--seed", o.seed, "master seed")->capture_default_str();
  bench->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  bench->add_option("--missing-penalty", o.missing_penalty, "estimate substituted when a direction is absent")
      ->capture_default_str();
  bench->add_option("--out", o.out, "output prefix for .json/.csv");
  bench->add_flag("--plot-data", o.plot_data, "emit tidy CSV for metric-versus-n curves");
  bench->add_flag("--trace", o.common.trace);
  add_search_flags(bench, o.common);
  bench->add_flag("--quiet", o.quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*discover) return cmd_discover(o, false);
    if (*estimate) return cmd_discover(o, true);
    if (*bench) return cmd_bench(o);
  } catch (const prebim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
