#pragma once

#include "prebim/bench.hpp"
#include "prebim/discovery.hpp"
#include "prebim/pipeline.hpp"
#include "prebim/simulator.hpp"
#include "prebim/types.hpp"

#include <json.hpp>

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace prebim::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || field.empty())
    throw InvalidInput("line " + std::to_string(line_no) + ": cannot parse number '" + std::string(field) + "'");
  return v;
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

inline Json vector_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.begin(), v.end())); }

inline Eigen::VectorXd vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset CSV: header x,y,<variant labels...>; one observation per row.
// ---------------------------------------------------------------------------

inline Dataset read_dataset_csv(std::istream& in, bool center = true) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw InvalidInput("dataset CSV is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_commas(line);
  if (header.size() < 2 || header[0] != "x" || header[1] != "y")
    throw InvalidInput("dataset CSV header must start with 'x,y'");
  const std::size_t g = header.size() - 2;
  if (g < Dataset::kMinVariants)
    throw InvalidInput("dataset has " + std::to_string(g) +
                       " variant column(s); at least two valid IVs are required, so g must be >= 2");
  std::vector<std::string> names;
  for (std::size_t j = 0; j < g; ++j) {
    const auto label = header[j + 2];
    names.emplace_back(label.empty() ? "G_" + std::to_string(j + 1) : std::string(label));
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != g + 2)
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " + std::to_string(g + 2) +
                         " fields, got " + std::to_string(fields.size()));
    for (auto f : fields) values.push_back(detail::parse_double(f, line_no));
    ++rows;
  }

  const auto n = static_cast<Eigen::Index>(rows);
  const auto cols = static_cast<Eigen::Index>(g + 2);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> table(
      values.data(), n, cols);
  return Dataset::create(table.col(0), table.col(1), table.rightCols(cols - 2), std::move(names), center);
}

inline Dataset read_dataset_csv(const std::string& path, bool center = true) {
  auto in = detail::open_in(path);
  return read_dataset_csv(in, center);
}

// Writes the given columns verbatim (no centering is undone or applied).
inline void write_dataset_csv(std::ostream& out, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              const Eigen::MatrixXd& genotypes, const std::vector<std::string>& names) {
  out << "x,y";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out << detail::format_double(x(i)) << ',' << detail::format_double(y(i));
    for (Eigen::Index j = 0; j < genotypes.cols(); ++j) out << ',' << detail::format_double(genotypes(i, j));
    out << '\n';
  }
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  write_dataset_csv(out, data.x(), data.y(), data.genotypes(), data.variant_names());
}

// Raw (uncentered) simulated observations with integer genotypes.
inline void write_simulation_csv(std::ostream& out, const Simulation& sim) {
  write_dataset_csv(out, sim.x, sim.y, sim.raw_genotypes, sim.dataset.variant_names());
}

// ---------------------------------------------------------------------------
// Ground truth sidecar
// ---------------------------------------------------------------------------

inline Json to_json(const ModelParams& p) {
  Json j;
  j["beta_xy"] = p.beta_xy;
  j["beta_yx"] = p.beta_yx;
  j["gamma_x"] = detail::vector_json(p.gamma_x);
  j["gamma_y"] = detail::vector_json(p.gamma_y);
  j["gamma_u"] = detail::vector_json(p.gamma_u);
  j["gamma_xu"] = p.gamma_xu;
  j["gamma_yu"] = p.gamma_yu;
  j["variant_variances"] = detail::vector_json(p.variant_variances);
  j["noise_variances"] = std::vector<double>{p.noise_variances(0), p.noise_variances(1), p.noise_variances(2)};
  j["allele_freqs"] = p.allele_freqs;
  Json deps = Json::array();
  for (const auto& d : p.dependencies)
    deps.push_back({{"source", d.source}, {"target", d.target}, {"coefficient", d.coefficient}});
  j["dependencies"] = deps;
  return j;
}

inline ModelParams model_params_from_json(const Json& j) {
  ModelParams p;
  p.beta_xy = j.at("beta_xy").get<double>();
  p.beta_yx = j.at("beta_yx").get<double>();
  p.gamma_x = detail::vector_from(j.at("gamma_x"));
  p.gamma_y = detail::vector_from(j.at("gamma_y"));
  p.gamma_u = detail::vector_from(j.at("gamma_u"));
  p.gamma_xu = j.at("gamma_xu").get<double>();
  p.gamma_yu = j.at("gamma_yu").get<double>();
  p.variant_variances = detail::vector_from(j.at("variant_variances"));
  const auto noise = j.at("noise_variances").get<std::vector<double>>();
  if (noise.size() != 3) throw InvalidInput("noise_variances must have three entries");
  p.noise_variances = Eigen::Vector3d(noise[0], noise[1], noise[2]);
  if (j.contains("allele_freqs")) p.allele_freqs = j.at("allele_freqs").get<std::vector<double>>();
  if (j.contains("dependencies"))
    for (const auto& d : j.at("dependencies"))
      p.dependencies.push_back({d.at("source").get<std::size_t>(), d.at("target").get<std::size_t>(),
                                d.at("coefficient").get<double>()});
  p.validate();
  return p;
}

inline Json to_json(const ScenarioSpec& s) {
  return {{"name", s.name()},
          {"n_valid_xy", s.n_valid_xy},
          {"n_valid_yx", s.n_valid_yx},
          {"n_total", s.n_total},
          {"sample_size", s.sample_size},
          {"bidirectional", s.bidirectional},
          {"correlated_valid", s.correlated_valid},
          {"seed", s.seed},
          {"identifiability_margin", s.identifiability_margin}};
}

inline Json ground_truth_json(const ScenarioSpec& spec, const ScenarioDraw& draw) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = to_json(spec);
  j["params"] = to_json(draw.params);
  j["labels"] = {{"valid_for_xy", draw.labels.valid_for_xy}, {"valid_for_yx", draw.labels.valid_for_yx}};
  Json pairs = Json::array();
  for (const auto& d : draw.params.dependencies) pairs.push_back(IndexSet{std::min(d.source, d.target), std::max(d.source, d.target)});
  j["dependent_pairs"] = pairs;
  j["rejection_attempts"] = draw.attempts;
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline results
// ---------------------------------------------------------------------------

inline Json names_json(const IndexSet& s, const std::vector<std::string>& names) {
  Json out = Json::array();
  for (auto j : s) out.push_back(j < names.size() ? names[j] : std::to_string(j));
  return out;
}

inline Json to_json(const DiscoveryTrace& t) {
  Json seeds = Json::array();
  for (const auto& c : t.seed_pairs_considered) seeds.push_back({{"pair", c.pair}, {"score", c.score}, {"passed", c.passed}});
  Json growth = Json::array();
  for (const auto& s : t.growth_steps)
    growth.push_back({{"set", s.set}, {"added", s.added}, {"correlation", s.correlation}});
  Json fusion = Json::array();
  for (const auto& f : t.fusion_decisions)
    fusion.push_back({{"kept", f.kept}, {"incoming", f.incoming}, {"merged", f.merged}, {"action", f.action}});
  return {{"seed_pairs_considered", seeds}, {"growth_steps", growth}, {"fusion_decisions", fusion}};
}

inline Json to_json(const PipelineResult& r, const Dataset& data, const DiscoveryConfig& config, bool with_trace) {
  const auto& names = data.variant_names();
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["samples"] = data.samples();
  j["variants"] = data.variants();
  j["config"] = {{"alpha", config.alpha},
                 {"max_set_size", config.effective_max_set_size(data.variants())},
                 {"merge_same_direction", config.merge_same_direction},
                 {"slope_correction", config.slope_correction}};
  Json sets = Json::array();
  for (const auto& s : r.discovery.collection.sets) sets.push_back({{"indices", s}, {"names", names_json(s, names)}});
  j["valid_iv_sets"] = sets;
  const auto& e = r.effects;
  j["assigned_xy"] = {{"indices", e.assigned_xy}, {"names", names_json(e.assigned_xy, names)}};
  j["assigned_yx"] = {{"indices", e.assigned_yx}, {"names", names_json(e.assigned_yx, names)}};
  j["beta_hat_xy"] = detail::optional_json(e.beta_hat_xy);
  j["beta_hat_yx"] = detail::optional_json(e.beta_hat_yx);
  j["dropped"] = e.dropped;
  j["split_sets"] = e.split_sets;
  if (with_trace) j["trace"] = to_json(r.discovery.trace);
  return j;
}

// ---------------------------------------------------------------------------
// Benchmark reports
// ---------------------------------------------------------------------------

inline Json to_json(const DirectionMetrics& m) {
  return {{"csr", m.csr}, {"csr_paper_verbatim", m.csr_verbatim}, {"mse", m.mse}, {"naive_mse", m.naive_mse}};
}

inline Json to_json(const BenchmarkReport& r) {
  return {{"scenario", to_json(r.scenario)}, {"replications", r.replications}, {"failures", r.failures},
          {"wall_time", r.wall_time},        {"xy", to_json(r.xy)},             {"yx", to_json(r.yx)}};
}

inline Json reports_json(const std::vector<BenchmarkReport>& reports, std::uint64_t master_seed,
                         const DiscoveryConfig& config, const BenchmarkOptions& options) {
  Json rows = Json::array();
  for (const auto& r : reports) rows.push_back(to_json(r));
  return {{"schema_version", kSchemaVersion},
          {"master_seed", master_seed},
          {"alpha", config.alpha},
          {"max_set_size", config.max_set_size},
          {"merge_same_direction", config.merge_same_direction},
          {"slope_correction", config.slope_correction},
          {"missing_penalty", options.missing_penalty},
          {"reports", rows}};
}

// One row per scenario x direction. Wall time is left out so reruns are
// byte-identical.
inline void write_reports_csv(std::ostream& out, const std::vector<BenchmarkReport>& reports) {
  out << "scenario,direction,n,reps,csr,csr_paper_verbatim,mse,naive_mse,failures\n";
  for (const auto& r : reports) {
    for (const auto d : {Direction::XtoY, Direction::YtoX}) {
      const auto& m = d == Direction::XtoY ? r.xy : r.yx;
      out << r.scenario.name() << (r.scenario.correlated_valid ? "-corr" : "")
          << (r.scenario.bidirectional ? "" : "-1dir") << ',' << to_string(d) << ',' << r.scenario.sample_size
          << ',' << r.replications << ',' << detail::format_double(m.csr) << ','
          << detail::format_double(m.csr_verbatim) << ',' << detail::format_double(m.mse) << ','
          << detail::format_double(m.naive_mse) << ',' << r.failures << '\n';
    }
  }
}

// Tidy long format for metric-versus-n curves.
inline void write_plot_data_csv(std::ostream& out, const std::vector<BenchmarkReport>& reports) {
  out << "scenario,direction,method,metric,n,value\n";
  for (const auto& r : reports) {
    const std::string scenario = r.scenario.name() + (r.scenario.correlated_valid ? "-corr" : "") +
                                 (r.scenario.bidirectional ? "" : "-1dir");
    for (const auto d : {Direction::XtoY, Direction::YtoX}) {
      const auto& m = d == Direction::XtoY ? r.xy : r.yx;
      auto row = [&](const char* method, const char* metric, double v) {
        out << scenario << ',' << to_string(d) << ',' << method << ',' << metric << ',' << r.scenario.sample_size
            << ',' << detail::format_double(v) << '\n';
      };
      row("prebim", "csr", m.csr);
      row("prebim", "mse", m.mse);
      row("naive", "mse", m.naive_mse);
    }
  }
}

// Fixed-width table in the layout of the usual CSR/MSE summary.
inline void print_report_table(std::ostream& out, const std::vector<BenchmarkReport>& reports) {
  out << std::left << std::setw(18) << "scenario" << std::setw(8) << "n" << std::setw(7) << "dir" << std::right
      << std::setw(8) << "CSR" << std::setw(10) << "MSE" << std::setw(11) << "NAIVE" << std::setw(6) << "fail"
      << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& r : reports) {
    for (const auto d : {Direction::XtoY, Direction::YtoX}) {
      const auto& m = d == Direction::XtoY ? r.xy : r.yx;
      out << std::left << std::setw(18)
          << r.scenario.name() + (r.scenario.correlated_valid ? "-corr" : "") +
                 (r.scenario.bidirectional ? "" : "-1dir")
          << std::setw(8) << r.scenario.sample_size << std::setw(7) << to_string(d) << std::right << std::setw(8)
          << m.csr << std::setw(10) << m.mse << std::setw(11) << m.naive_mse << std::setw(6) << r.failures << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------------------
// Spec lists
// ---------------------------------------------------------------------------

/// Parses a benchmark spec list:
///   {"reps": 100, "seed": 1, "scenarios": [{"a":2,"b":2,"g":6,"n":[2000,5000]}, ...]}
/// Each scenario entry expands into one ScenarioSpec per sample size. The
/// optional keys "bidirectional", "correlated_valid" and
/// "identifiability_margin" apply to that entry.
struct SpecList {
  std::vector<ScenarioSpec> specs;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
};

inline SpecList parse_spec_list(const Json& j) {
  SpecList out;
  if (j.contains("reps")) out.reps = j.at("reps").get<std::size_t>();
  if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
  if (!j.contains("scenarios") || !j.at("scenarios").is_array())
    throw InvalidInput("spec list needs a 'scenarios' array");
  for (const auto& e : j.at("scenarios")) {
    ScenarioSpec base;
    base.n_valid_xy = e.at("a").get<std::size_t>();
    base.n_valid_yx = e.at("b").get<std::size_t>();
    base.n_total = e.at("g").get<std::size_t>();
    base.bidirectional = e.value("bidirectional", true);
    base.correlated_valid = e.value("correlated_valid", false);
    base.identifiability_margin = e.value("identifiability_margin", base.identifiability_margin);
    std::vector<std::size_t> sizes;
    const auto& n = e.at("n");
    if (n.is_array())
      sizes = n.get<std::vector<std::size_t>>();
    else
      sizes.push_back(n.get<std::size_t>());
    for (auto size : sizes) {
      auto s = base;
      s.sample_size = size;
      s.validate();
      out.specs.push_back(s);
    }
  }
  if (out.specs.empty()) throw InvalidInput("spec list has no scenarios");
  return out;
}

inline SpecList read_spec_list(const std::string& path) {
  auto in = detail::open_in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("spec list '" + path + "': " + e.what());
  }
  try {
    return parse_spec_list(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("spec list '" + path + "': " + e.what());
  }
}

}  // namespace prebim::io
