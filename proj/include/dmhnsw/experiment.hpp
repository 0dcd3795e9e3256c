#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dmhnsw/cluster_sim.hpp"
#include "dmhnsw/dataset.hpp"
#include "dmhnsw/partition.hpp"

namespace dmhnsw {

/// Error tagged with the experiment phase that raised it (config, data,
/// build, partition, tune, run, report).
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& what)
      : std::runtime_error(phase + ": " + what), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

enum class RunMode : std::uint8_t { kDeterministic, kConcurrent };

RunMode parse_mode(std::string_view name);
std::string_view mode_name(RunMode m);

struct ExperimentConfig {
  // Data: files when `dataset` is set, otherwise synthetic.
  std::string dataset;
  std::string queries;
  /// Optional ivecs ground truth, one row per query-pool vector.
  std::string ground_truth;
  std::size_t n = 100000;
  std::uint32_t dim = 32;
  Distribution distribution = Distribution::kGaussianMixture;
  std::uint32_t components = 32;
  double spread = 0.25;
  /// Synthetic query pool size; file queries use the whole file.
  std::size_t query_pool = 50000;

  // Index.
  Metric metric = Metric::kL2;
  std::uint32_t m = 32;
  std::uint32_t ef_construction = 500;
  bool heuristic_selection = false;
  /// 0 tunes efS to target_recall on the tuning sample.
  std::uint32_t ef_search = 0;
  std::uint32_t k = 10;
  double target_recall = 0.95;
  std::uint32_t build_workers = 1;
  /// Persisted index directory; empty keeps the index in memory only.
  std::string index_dir;

  // Cluster.
  std::uint32_t cns = 4;
  std::uint32_t mns = 2;
  double cache_ratio = 0.05;
  double cooling_fraction = 0.10;
  double admission_prob = 0.01;
  std::uint32_t workers_per_cn = 32;
  std::uint32_t coroutines_per_worker = 4;
  CostModel cost;

  // Workload and routing.
  RoutingPolicy policy = RoutingPolicy::kAdaptive;
  /// 0 draws queries uniformly from the pool.
  double zipf_s = 1.0;
  std::uint64_t batch_b = 1000;
  std::uint64_t sync_t = 1000;
  std::size_t warmup = 100000;
  std::size_t measured = 400000;
  std::size_t recall_sample = 1000;
  bool unified_replay = true;

  std::uint64_t seed = 42;
  RunMode mode = RunMode::kDeterministic;

  /// Identity of everything the built index depends on.
  std::string index_key() const;
};

/// Full-scale defaults shrunk to a desk: 100k vectors, d=32, M=16,
/// efC=200, 4 CNs over 2 MNs, 10k warm-up and 40k measured queries. The
/// batch size and sleep threshold shrink with the stream to b = t = 100.
ExperimentConfig desk_preset();
ExperimentConfig preset(std::string_view name);

/// Sets one field by its name; '-' and '_' are interchangeable.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Flat key=value lines; '#' starts a comment.
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);
/// Field names accepted by apply_setting.
std::vector<std::string> setting_names();
/// Current values as key=value lines.
std::map<std::string, std::string> settings_of(const ExperimentConfig& config);

struct ExperimentData {
  VectorSet base;
  VectorSet queries;
};

/// Base vectors and query pool from files, or the synthetic mixture/cube.
/// Applies the `n` truncation to file data.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct TuneResult {
  std::uint32_t ef_search = 0;
  double recall = 0.0;
  /// (efS, recall) for every probe, in probe order.
  std::vector<std::pair<std::uint32_t, double>> probes;
};

struct RunReport {
  ExperimentConfig config;
  std::uint32_t ef_search = 0;
  SimResult result;
  double recall = 0.0;
  std::size_t recall_queries = 0;
  std::optional<double> csp;
  TrafficSummary traffic;
  std::uint64_t cache_entries_per_cn = 0;
  std::uint32_t cluster_trained_k = 0;
  SampleInfo sample;
};

/// One loaded or built index with everything derived from it, reused across
/// runs that differ only in cluster, workload or routing settings.
class Workbench {
 public:
  explicit Workbench(ExperimentConfig base, std::ostream* log = nullptr);
  ~Workbench();

  const ExperimentConfig& base_config() const { return base_; }
  const VectorSet& base_vectors() const { return base_vectors_; }
  const VectorSet& query_pool() const { return queries_; }
  Fabric& fabric() { return *fabric_; }
  const IndexMeta& meta() const { return meta_; }
  bool loaded_from_disk() const { return loaded_; }
  /// Allocated node bytes over all arenas.
  std::uint64_t index_bytes() const;

  const Oracle& oracle(std::uint32_t cns, ClusterModel* model = nullptr, SampleInfo* info = nullptr);
  const std::vector<std::uint32_t>& truth(std::uint32_t pool_index);

  /// Mean recall@k over the pool indices, uncached single searcher.
  double measure_recall(std::uint32_t ef_search, std::span<const std::uint32_t> pool_indices, std::uint32_t k);
  /// Smallest efS from doubling then bisection with recall >= target.
  TuneResult tune_efs(double target, std::span<const std::uint32_t> pool_indices, std::uint32_t k);
  /// Pool indices [0, recall_sample) tune efS; [recall_sample, 2 recall_sample) are held out.
  std::vector<std::uint32_t> tuning_sample() const;
  std::vector<std::uint32_t> holdout_sample() const;
  /// The configured efS, or the memoized tuned value when it is 0.
  std::uint32_t resolve_ef_search(const ExperimentConfig& config);

  QueryStream make_stream(const ExperimentConfig& config) const;
  RunReport run(const ExperimentConfig& config);

 private:
  void load_data();
  void prepare_index();
  void log(const std::string& line);

  ExperimentConfig base_;
  /// Index identity as configured, before file data fixes n and dim.
  std::string key_;
  std::ostream* log_;
  VectorSet base_vectors_;
  VectorSet queries_;
  std::vector<std::vector<std::int32_t>> file_truth_;
  std::unique_ptr<Fabric> fabric_;
  IndexMeta meta_;
  bool loaded_ = false;
  struct OracleEntry {
    std::unique_ptr<Oracle> oracle;
    ClusterModel model;
    SampleInfo info;
  };
  std::map<std::uint32_t, OracleEntry> oracles_;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> truth_;
  std::map<std::pair<std::uint32_t, double>, TuneResult> tuned_;
};

/// Every policy crossed with every Zipf exponent (0 = uniform) on one workbench.
std::vector<RunReport> sweep(Workbench& bench, const ExperimentConfig& base, std::span<const RoutingPolicy> policies,
                             std::span<const double> zipf_values);

}  // namespace dmhnsw
