#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mmreg/altmin.hpp"
#include "mmreg/datagen.hpp"
#include "mmreg/io.hpp"
#include "mmreg/local_search.hpp"
#include "mmreg/metrics.hpp"

namespace mmreg {

/// Experiment grid: the cross product of every axis, `replications` instances
/// per cell, `methods` solvers per instance.
struct BenchGrid {
  std::vector<Index> n{500};
  std::vector<Index> d{10};
  std::vector<Index> r{50};
  std::vector<double> sigma{0.0};
  std::vector<std::string> radius_tokens{"r"};  // n | r | <int> | <float>x
  std::vector<std::string> schemes{"random"};
  std::vector<std::string> methods{"exact"};
  Index replications = 1;
  std::uint64_t seed_base = 1;

  void validate() const {
    if (n.empty() || d.empty() || r.empty() || sigma.empty() ||
        radius_tokens.empty() || schemes.empty() || methods.empty())
      throw BadShape("bench grid: empty axis");
    if (replications < 1) throw BadShape("bench grid: replications >= 1");
    for (const auto& m : methods)
      if (m != "exact" && m != "fast" && m != "altmin")
        throw BadShape("bench grid: unknown method '" + m + "'");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Key-value grid file: `key = value[, value...]`, '#' comments.
/// Keys: n, d, r, sigma, R, scheme, methods, replications, seed_base.
inline BenchGrid parse_grid(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read grid file " + path.string());
  BenchGrid g;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("grid file line " + std::to_string(lineno) +
                    ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    auto vals = detail::split_list(line.substr(eq + 1));
    if (vals.empty())
      throw IoError("grid file line " + std::to_string(lineno) +
                    ": empty value");
    auto to_index = [&](const std::string& s) {
      return static_cast<Index>(std::stoll(s));
    };
    if (key == "n") {
      g.n.clear();
      for (auto& v : vals) g.n.push_back(to_index(v));
    } else if (key == "d") {
      g.d.clear();
      for (auto& v : vals) g.d.push_back(to_index(v));
    } else if (key == "r") {
      g.r.clear();
      for (auto& v : vals) g.r.push_back(to_index(v));
    } else if (key == "sigma") {
      g.sigma.clear();
      for (auto& v : vals) g.sigma.push_back(std::stod(v));
    } else if (key == "R") {
      g.radius_tokens = vals;
    } else if (key == "scheme") {
      g.schemes = vals;
    } else if (key == "methods") {
      g.methods = vals;
    } else if (key == "replications") {
      g.replications = to_index(vals.front());
    } else if (key == "seed_base") {
      g.seed_base = std::stoull(vals.front());
    } else {
      throw IoError("grid file line " + std::to_string(lineno) +
                    ": unknown key '" + key + "'");
    }
  }
  g.validate();
  return g;
}

/// R policy: "n" (equal-n), "r" (equal-r), "<c>x" (times-r), else absolute.
/// The result is clamped into [2, n].
inline Index resolve_radius(const std::string& token, Index n, Index r) {
  Index value;
  if (token == "n") {
    value = n;
  } else if (token == "r") {
    value = r;
  } else if (!token.empty() && (token.back() == 'x' || token.back() == 'X')) {
    value = static_cast<Index>(
        std::llround(std::stod(token.substr(0, token.size() - 1)) *
                     static_cast<double>(r)));
  } else {
    value = static_cast<Index>(std::stoll(token));
  }
  return std::max<Index>(2, std::min(value, n));
}

struct BenchRow {
  Index n, d, r;
  double sigma;
  Index radius;
  std::string scheme, method;
  std::uint64_t seed;
  std::string status = "ok";
  EvalMetrics metrics;
  Index iterations = 0;
  double total_s = 0.0, qr_s = 0.0;
};

inline std::string bench_csv_header() {
  return "n,d,r,sigma,R,scheme,method,seed,hamming,beta_error,relative_obj,"
         "relative_beta_error,iterations,total_s,qr_s,status";
}

inline std::string to_csv(const BenchRow& row) {
  std::ostringstream os;
  os << row.n << ',' << row.d << ',' << row.r << ',' << fmt17(row.sigma) << ','
     << row.radius << ',' << row.scheme << ',' << row.method << ',' << row.seed
     << ',';
  if (row.status == "ok") {
    os << row.metrics.hamming << ',' << fmt17(row.metrics.beta_error) << ',';
    os << (row.metrics.relative_obj ? fmt17(*row.metrics.relative_obj) : "")
       << ',';
    os << (row.metrics.relative_beta_error
               ? fmt17(*row.metrics.relative_beta_error)
               : "")
       << ',';
    os << row.iterations << ',' << fmt17(row.total_s) << ','
       << fmt17(row.qr_s);
  } else {
    os << ",,,,,,";
  }
  os << ',' << row.status;
  return os.str();
}

/// Runs every (cell, replication, method) combination. Replications run in a
/// small worker pool; rows come out in deterministic cell-major order.
inline std::vector<BenchRow> run_bench(const BenchGrid& grid, int workers = 1,
                                       std::ostream* log = nullptr) {
  grid.validate();
  struct Task {
    Index n, d, r;
    double sigma;
    std::string radius_token;
    std::string scheme;
    Index rep;
  };
  std::vector<Task> tasks;
  for (Index n : grid.n)
    for (Index d : grid.d)
      for (Index r : grid.r)
        for (double sigma : grid.sigma)
          for (const auto& rt : grid.radius_tokens)
            for (const auto& scheme : grid.schemes)
              for (Index rep = 0; rep < grid.replications; ++rep)
                tasks.push_back({n, d, r, sigma, rt, scheme, rep});

  std::vector<std::vector<BenchRow>> slots(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};

  auto worker = [&]() {
    for (;;) {
      std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task& task = tasks[t];
      std::uint64_t seed = grid.seed_base + static_cast<std::uint64_t>(task.rep);
      std::vector<BenchRow>& rows = slots[t];
      for (const auto& method : grid.methods) {
        BenchRow row;
        row.n = task.n;
        row.d = task.d;
        row.r = task.r;
        row.sigma = task.sigma;
        row.scheme = task.scheme;
        row.method = method;
        row.seed = seed;
        row.radius = 0;
        try {
          row.radius = resolve_radius(task.radius_token, task.n, task.r);
          auto inst = gen_instance(task.n, task.d, task.r, task.sigma,
                                   task.scheme, seed);
          SolveReport rep;
          if (method == "altmin") {
            rep = altmin_solve(inst);
          } else {
            SolverConfig cfg;
            cfg.radius = row.radius;
            cfg.mode =
                method == "fast" ? SearchMode::kFast : SearchMode::kExact;
            rep = solve(inst, cfg);
          }
          row.metrics = evaluate(rep, inst);
          row.iterations = rep.iterations;
          row.total_s = rep.time_total_s;
          row.qr_s = rep.time_qr_s;
        } catch (const std::exception& e) {
          row.status = std::string("error: ") + e.what();
        }
        rows.push_back(std::move(row));
      }
      std::size_t d = done.fetch_add(1) + 1;
      if (log && (d % 10 == 0 || d == tasks.size()))
        (*log) << "bench: " << d << "/" << tasks.size() << " cells\n";
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<BenchRow> rows;
  for (auto& slot : slots)
    for (auto& row : slot) rows.push_back(std::move(row));
  return rows;
}

inline void write_bench_csv(const std::filesystem::path& path,
                            const std::vector<BenchRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << bench_csv_header() << '\n';
  for (const auto& row : rows) f << to_csv(row) << '\n';
}

/// Companion aggregate: per-(cell, method) means and standard errors.
inline void write_bench_aggregate_csv(const std::filesystem::path& path,
                                      const std::vector<BenchRow>& rows) {
  struct Acc {
    std::vector<double> hamming, beta_error, relative_obj, relative_beta_error,
        iterations, total_s, qr_s;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> groups;
  std::map<std::string, BenchRow> heads;
  for (const auto& row : rows) {
    if (row.status != "ok") continue;
    std::ostringstream key;
    key << row.n << ',' << row.d << ',' << row.r << ',' << fmt17(row.sigma)
        << ',' << row.radius << ',' << row.scheme << ',' << row.method;
    if (groups.find(key.str()) == groups.end()) {
      order.push_back(key.str());
      heads.emplace(key.str(), row);
    }
    Acc& a = groups[key.str()];
    a.hamming.push_back(static_cast<double>(row.metrics.hamming));
    a.beta_error.push_back(row.metrics.beta_error);
    if (row.metrics.relative_obj)
      a.relative_obj.push_back(*row.metrics.relative_obj);
    if (row.metrics.relative_beta_error)
      a.relative_beta_error.push_back(*row.metrics.relative_beta_error);
    a.iterations.push_back(static_cast<double>(row.iterations));
    a.total_s.push_back(row.total_s);
    a.qr_s.push_back(row.qr_s);
  }

  auto mean_se = [](const std::vector<double>& v) -> std::pair<std::string, std::string> {
    if (v.empty()) return {"", ""};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    double se = v.size() > 1 ? std::sqrt(var / (double(v.size()) - 1.0) /
                                         double(v.size()))
                             : 0.0;
    return {fmt17(mean), fmt17(se)};
  };

  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "n,d,r,sigma,R,scheme,method,count";
  for (const char* m : {"hamming", "beta_error", "relative_obj",
                        "relative_beta_error", "iterations", "total_s", "qr_s"})
    f << ',' << m << "_mean," << m << "_se";
  f << '\n';
  for (const auto& key : order) {
    const Acc& a = groups[key];
    f << key << ',' << a.beta_error.size();
    for (const auto* v : {&a.hamming, &a.beta_error, &a.relative_obj,
                          &a.relative_beta_error, &a.iterations, &a.total_s,
                          &a.qr_s}) {
      auto [m, s] = mean_se(*v);
      f << ',' << m << ',' << s;
    }
    f << '\n';
  }
}

}  // namespace mmreg
