#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmreg/common.hpp"
#include "mmreg/datagen.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/solver_types.hpp"

// All file formats use 0-based indices, '.' decimals, '\n' line endings and
// 17-significant-digit floats.

namespace mmreg {

using nlohmann::json;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json perm_to_json(const SparsePermutation& p) {
  json moved = json::object();
  for (const auto& [i, j] : p.moved()) moved[std::to_string(i)] = j;
  return json{{"n", p.size()}, {"moved", moved}};
}

inline SparsePermutation perm_from_json(const json& j) {
  std::map<Index, Index> moved;
  for (const auto& [key, val] : j.at("moved").items())
    moved[static_cast<Index>(std::stoll(key))] = val.get<Index>();
  return SparsePermutation::from_moved(j.at("n").get<Index>(),
                                       std::move(moved));
}

/// Writes X.csv (one row per sample, comma-separated), y.csv (one value per
/// row) and, when truth is present, truth.json.
inline void write_instance(const std::filesystem::path& dir,
                           const ProblemInstance& inst) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  {
    std::ofstream xf(dir / "X.csv");
    if (!xf) throw IoError("cannot write " + (dir / "X.csv").string());
    for (Index i = 0; i < inst.n(); ++i) {
      for (Index j = 0; j < inst.d(); ++j) {
        if (j) xf << ',';
        xf << fmt17(inst.x(i, j));
      }
      xf << '\n';
    }
  }
  {
    std::ofstream yf(dir / "y.csv");
    if (!yf) throw IoError("cannot write " + (dir / "y.csv").string());
    for (Index i = 0; i < inst.n(); ++i) yf << fmt17(inst.y[i]) << '\n';
  }
  if (inst.truth) {
    const auto& t = *inst.truth;
    json j{{"beta", std::vector<double>(t.beta.data(),
                                        t.beta.data() + t.beta.size())},
           {"perm", perm_to_json(t.perm)},
           {"r", t.r},
           {"sigma", t.sigma},
           {"scheme", t.scheme},
           {"seed", t.seed}};
    std::ofstream tf(dir / "truth.json");
    if (!tf) throw IoError("cannot write " + (dir / "truth.json").string());
    tf << j.dump(2) << '\n';
  }
}

inline ProblemInstance read_instance(const std::filesystem::path& dir) {
  std::ifstream xf(dir / "X.csv");
  if (!xf) throw IoError("cannot read " + (dir / "X.csv").string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(xf, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("X.csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("X.csv: empty");

  ProblemInstance inst;
  inst.x.resize(static_cast<Index>(rows.size()),
                static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      inst.x(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];

  std::ifstream yf(dir / "y.csv");
  if (!yf) throw IoError("cannot read " + (dir / "y.csv").string());
  std::vector<double> yv;
  while (std::getline(yf, line))
    if (!line.empty()) yv.push_back(std::stod(line));
  if (static_cast<Index>(yv.size()) != inst.x.rows())
    throw IoError("y.csv: length differs from X.csv row count");
  inst.y = Eigen::Map<VecXd>(yv.data(), static_cast<Index>(yv.size()));

  auto tpath = dir / "truth.json";
  if (std::filesystem::exists(tpath)) {
    std::ifstream tf(tpath);
    json j = json::parse(tf);
    InstanceTruth t{perm_from_json(j.at("perm")),
                    VecXd(),
                    VecXd::Zero(inst.n()),
                    j.at("r").get<Index>(),
                    j.at("sigma").get<double>(),
                    j.at("scheme").get<std::string>(),
                    j.at("seed").get<std::uint64_t>()};
    auto bv = j.at("beta").get<std::vector<double>>();
    t.beta = Eigen::Map<VecXd>(bv.data(), static_cast<Index>(bv.size()));
    // eps is implied by the model identity: P* y - X beta*
    t.noise = t.perm.apply(inst.y) - inst.x * t.beta;
    inst.truth = std::move(t);
  }
  return inst;
}

/// trace.csv: k,obj_before,obj_after,decrease,i,j,dist,wall_ms
inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<IterationRecord>& trace) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "k,obj_before,obj_after,decrease,i,j,dist,wall_ms\n";
  for (const auto& r : trace) {
    f << r.k << ',' << fmt17(r.obj_before) << ',' << fmt17(r.obj_after) << ','
      << fmt17(r.decrease) << ',' << r.i << ',' << r.j << ','
      << r.dist_to_identity << ',' << fmt17(r.wall_ms) << '\n';
  }
}

inline json metrics_to_json(const EvalMetrics& m) {
  json j{{"hamming", m.hamming},
         {"beta_error", m.beta_error},
         {"denoise_error", m.denoise_error}};
  j["relative_obj"] = m.relative_obj ? json(*m.relative_obj) : json();
  j["relative_beta_error"] =
      m.relative_beta_error ? json(*m.relative_beta_error) : json();
  return j;
}

inline json config_to_json(const SolverConfig& cfg) {
  return json{{"R", cfg.radius},
              {"tol", cfg.tol},
              {"max_iter", cfg.max_iter == std::numeric_limits<Index>::max()
                               ? json()
                               : json(cfg.max_iter)},
              {"mode", cfg.mode == SearchMode::kFast ? "fast" : "exact"},
              {"dense_threshold", cfg.dense_threshold},
              {"refresh_every", cfg.refresh_every},
              {"threads", cfg.threads}};
}

inline void write_report_json(const std::filesystem::path& path,
                              const SolveReport& rep, const SolverConfig& cfg,
                              const std::optional<EvalMetrics>& metrics,
                              const std::string& trace_path) {
  json j{{"method", rep.method},
         {"config", config_to_json(cfg)},
         {"perm", perm_to_json(rep.perm)},
         {"beta", std::vector<double>(rep.beta.data(),
                                      rep.beta.data() + rep.beta.size())},
         {"objective", rep.objective},
         {"iterations", rep.iterations},
         {"time_total_s", rep.time_total_s},
         {"time_qr_s", rep.time_qr_s},
         {"trace_path", trace_path}};
  j["metrics"] = metrics ? metrics_to_json(*metrics) : json();
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace mmreg
