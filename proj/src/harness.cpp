#include "aad/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#ifndef AAD_GIT_HASH
#define AAD_GIT_HASH "unknown"
#endif

namespace aad {

const char* code_version() { return AAD_GIT_HASH; }

namespace {

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset data = make_dataset(cfg, seed);
  const GroundTruth truth(data);
  Oracle oracle(data);
  auto engine = make_engine(cfg, data, seed);
  while (auto q = engine->next_query()) engine->feedback(*q, oracle.label(*q));
  if (engine->spent() != oracle.queries())
    throw std::logic_error("recorded queries do not match the oracle log");

  SeedResult r;
  r.seed = seed;
  r.history = engine->history();
  for (const auto& h : r.history) r.curve.push_back(h.anomalies_so_far);
  r.drift = engine->drift();
  r.batches = engine->batches();
  r.rules = rules_to_text(engine->rules());
  r.total_anomalies = truth.anomaly_count();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

RunResult run(const RunConfig& cfg, const std::optional<std::filesystem::path>& out_root, unsigned threads) {
  cfg.validate();
  RunResult result;
  result.config = cfg;
  result.seeds.resize(cfg.seeds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.seeds.size()));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.seeds.size();) {
      try {
        result.seeds[i] = run_seed(cfg, cfg.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (out_root) {
    for (const auto& s : result.seeds)
      persist_seed(cfg, s, *out_root / cfg.name / cfg.arm / std::to_string(s.seed));
  }
  return result;
}

std::string history_jsonl(const std::vector<HistoryRecord>& history) {
  std::string out;
  for (const auto& h : history) {
    const nlohmann::json j = {{"iter", h.iter},
                              {"queried_id", h.queried_id},
                              {"label", sign(h.label)},
                              {"num_anomalies_so_far", h.anomalies_so_far},
                              {"score_hash", hex64(h.score_hash)}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string drift_jsonl(const std::vector<DriftReport>& drift) {
  std::string out;
  for (const auto& d : drift) out += d.to_json().dump() + "\n";
  return out;
}

void persist_seed(const RunConfig& cfg, const SeedResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json config = cfg.to_json();
  config["seed"] = r.seed;
  config["code_version"] = code_version();
  write_file(dir / "config.json", config.dump(2) + "\n");
  write_file(dir / "history.jsonl", history_jsonl(r.history));
  write_file(dir / "drift.jsonl", drift_jsonl(r.drift));
  write_file(dir / "rules.txt", r.rules + "\n");

  nlohmann::json batches = nlohmann::json::array();
  for (const auto& b : r.batches) batches.push_back({{"ids", b.ids}, {"overlap", b.overlap}});
  nlohmann::json drift_counts = nlohmann::json::array();
  for (const auto& d : r.drift) drift_counts.push_back(d.n_trees_replaced);
  const nlohmann::json result = {{"arm", cfg.arm},
                                 {"seed", r.seed},
                                 {"queries", r.history.size()},
                                 {"anomalies_found", r.anomalies_found()},
                                 {"total_anomalies", r.total_anomalies},
                                 {"curve", r.curve},
                                 {"drift_counts", drift_counts},
                                 {"batches", batches},
                                 {"wall_seconds", r.wall_seconds},
                                 {"code_version", code_version()}};
  write_file(dir / "result.json", result.dump(2) + "\n");
}

RunResult load_run(const std::filesystem::path& arm_dir) {
  RunResult out;
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(arm_dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "result.json")) dirs.push_back(e.path());
  if (dirs.empty()) throw std::runtime_error("no results under " + arm_dir.string());
  std::sort(dirs.begin(), dirs.end());
  nlohmann::json cfg = read_json(dirs.front() / "config.json");
  cfg.erase("seed");
  cfg.erase("code_version");
  out.config = RunConfig::from_json(cfg);
  for (const auto& dir : dirs) {
    const auto j = read_json(dir / "result.json");
    SeedResult s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.curve = j.at("curve").get<std::vector<Index>>();
    s.total_anomalies = j.at("total_anomalies").get<Index>();
    s.wall_seconds = j.at("wall_seconds").get<double>();
    out.seeds.push_back(std::move(s));
  }
  std::sort(out.seeds.begin(), out.seeds.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  return out;
}

nlohmann::json AngleHistogram::to_json() const {
  return {{"edges", edges},
          {"anomaly", anomaly},
          {"nominal", nominal},
          {"anomaly_mean", anomaly_mean},
          {"nominal_mean", nominal_mean}};
}

double angle_to_uniform(const SparseScoreVector& z, Index members) {
  const double norm = z.norm();
  if (norm == 0.0 || members == 0) throw ContractViolation("angle_to_uniform: zero score vector");
  const double cosine = z.sum() / (norm * std::sqrt(static_cast<double>(members)));
  return std::acos(std::clamp(cosine, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

AngleHistogram angle_histogram(const EnsembleModel& model, const Dataset& data, Index bins) {
  if (bins == 0) throw ContractViolation("angle_histogram: need at least one bin");
  const GroundTruth truth(data);
  AngleHistogram h;
  for (Index b = 0; b <= bins; ++b) h.edges.push_back(180.0 * static_cast<double>(b) / static_cast<double>(bins));
  h.anomaly.assign(bins, 0);
  h.nominal.assign(bins, 0);
  const SparseScoreMatrix z = transform(model, data.features());
  double sum_a = 0.0, sum_n = 0.0;
  Index count_a = 0, count_n = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto label = truth.label(static_cast<Index>(i));
    if (!label) continue;
    const double a = angle_to_uniform(z.row(i).transpose(), model.leaf_count());
    const auto bin = std::min<Index>(bins - 1, static_cast<Index>(a / 180.0 * static_cast<double>(bins)));
    if (*label == Label::anomaly) {
      ++h.anomaly[bin];
      sum_a += a;
      ++count_a;
    } else {
      ++h.nominal[bin];
      sum_n += a;
      ++count_n;
    }
  }
  h.anomaly_mean = count_a ? sum_a / static_cast<double>(count_a) : 0.0;
  h.nominal_mean = count_n ? sum_n / static_cast<double>(count_n) : 0.0;
  return h;
}

DiversitySeries class_diversity_series(const std::vector<HistoryRecord>& history, const GroundTruth& truth,
                                       Index batch_size) {
  if (!truth.has_class_tags()) throw ContractViolation("class_diversity_series: dataset has no class tags");
  if (batch_size == 0) throw ContractViolation("class_diversity_series: batch size must be positive");
  DiversitySeries s;
  double total = 0.0;
  for (std::size_t start = 0; start < history.size(); start += batch_size) {
    std::set<std::string> classes;
    for (std::size_t i = start; i < std::min(history.size(), start + batch_size); ++i)
      classes.insert(truth.class_tag(history[i].queried_id).value_or(""));
    s.per_batch.push_back(classes.size());
    total += static_cast<double>(classes.size());
    s.cumulative.push_back(total / static_cast<double>(s.per_batch.size()));
  }
  return s;
}

std::vector<double> diversity_difference(const DiversitySeries& a, const DiversitySeries& b) {
  const auto n = std::min(a.cumulative.size(), b.cumulative.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.cumulative[i] - b.cumulative[i];
  return out;
}

double t_quantile_975(Index dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                     2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                     2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof == 0) throw ContractViolation("t_quantile_975: zero degrees of freedom");
  if (dof <= 30) return table[dof - 1];
  if (dof <= 40) return 2.021;
  if (dof <= 60) return 2.000;
  if (dof <= 120) return 1.980;
  return 1.960;
}

MeanCi mean_ci(const std::vector<double>& xs) {
  MeanCi out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.half_width = t_quantile_975(xs.size() - 1) * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

std::vector<CurvePoint> mean_curve(const RunResult& result) {
  std::size_t len = 0;
  for (const auto& s : result.seeds) len = std::max(len, s.curve.size());
  std::vector<CurvePoint> out;
  for (std::size_t q = 0; q < len; ++q) {
    std::vector<double> pct;
    for (const auto& s : result.seeds) {
      if (s.curve.empty() || s.total_anomalies == 0) {
        pct.push_back(0.0);
        continue;
      }
      const Index v = s.curve[std::min(q, s.curve.size() - 1)];
      pct.push_back(100.0 * static_cast<double>(v) / static_cast<double>(s.total_anomalies));
    }
    const auto ci = mean_ci(pct);
    out.push_back({q + 1, ci.mean, ci.half_width});
  }
  return out;
}

void emit_curves(const std::vector<RunResult>& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& r : results) {
    std::ostringstream csv;
    csv.precision(10);
    csv << "query,mean_pct,ci_half\n";
    for (const auto& p : mean_curve(r)) csv << p.query << ',' << p.mean_pct << ',' << p.ci_half << '\n';
    write_file(dir / (r.config.arm + ".csv"), csv.str());
  }
}

}  // namespace aad
