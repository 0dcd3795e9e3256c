#include "dmhnsw/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <absl/container/flat_hash_set.h>
#include <nlohmann/json.hpp>

#include "dmhnsw/cluster_threaded.hpp"

namespace dmhnsw {

RunMode parse_mode(std::string_view name) {
  if (name == "deterministic") return RunMode::kDeterministic;
  if (name == "concurrent") return RunMode::kConcurrent;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (expected deterministic or concurrent)");
}

std::string_view mode_name(RunMode m) { return m == RunMode::kDeterministic ? "deterministic" : "concurrent"; }

std::string ExperimentConfig::index_key() const {
  std::ostringstream out;
  out.precision(17);
  if (dataset.empty()) {
    out << "synthetic:" << distribution_name(distribution) << ":n=" << n << ":d=" << dim << ":c=" << components
        << ":s=" << spread;
  } else {
    out << "file:" << std::filesystem::absolute(dataset).string() << ":n=" << n;
  }
  out << ":metric=" << metric_name(metric) << ":M=" << m << ":efC=" << ef_construction
      << ":heuristic=" << heuristic_selection << ":seed=" << seed << ":mns=" << mns << ":workers=" << build_workers;
  return out.str();
}

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.n = 100000;
  c.dim = 32;
  c.m = 16;
  c.ef_construction = 200;
  c.cns = 4;
  c.mns = 2;
  c.warmup = 10000;
  c.measured = 40000;
  c.query_pool = 50000;
  c.batch_b = 100;
  c.sync_t = 100;
  return c;
}

ExperimentConfig preset(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper" || name == "default") return ExperimentConfig{};
  throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("setting '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw std::invalid_argument("setting '" + std::string(key) + "': expected a boolean, got '" + std::string(text) +
                              "'");
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct Field {
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field number_field(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, std::string_view key, std::string_view v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <typename T>
Field cost_field(T CostModel::*member) {
  return {[member](ExperimentConfig& c, std::string_view key, std::string_view v) {
            c.cost.*member = parse_number<T>(key, v);
          },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.cost.*member);
            } else {
              return std::to_string(c.cost.*member);
            }
          }};
}

Field string_field(std::string ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, std::string_view, std::string_view v) { c.*member = std::string(v); },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

Field bool_field(bool ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, std::string_view key, std::string_view v) { c.*member = parse_bool(key, v); },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["dataset"] = string_field(&ExperimentConfig::dataset);
    t["queries"] = string_field(&ExperimentConfig::queries);
    t["ground_truth"] = string_field(&ExperimentConfig::ground_truth);
    t["n"] = number_field(&ExperimentConfig::n);
    t["dim"] = number_field(&ExperimentConfig::dim);
    t["distribution"] = {[](ExperimentConfig& c, std::string_view, std::string_view v) {
                           c.distribution = parse_distribution(v);
                         },
                         [](const ExperimentConfig& c) { return std::string(distribution_name(c.distribution)); }};
    t["components"] = number_field(&ExperimentConfig::components);
    t["spread"] = number_field(&ExperimentConfig::spread);
    t["query_pool"] = number_field(&ExperimentConfig::query_pool);
    t["metric"] = {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.metric = parse_metric(v); },
                   [](const ExperimentConfig& c) { return std::string(metric_name(c.metric)); }};
    t["m"] = number_field(&ExperimentConfig::m);
    t["ef_construction"] = number_field(&ExperimentConfig::ef_construction);
    t["heuristic_selection"] = bool_field(&ExperimentConfig::heuristic_selection);
    t["ef_search"] = number_field(&ExperimentConfig::ef_search);
    t["k"] = number_field(&ExperimentConfig::k);
    t["target_recall"] = number_field(&ExperimentConfig::target_recall);
    t["build_workers"] = number_field(&ExperimentConfig::build_workers);
    t["index_dir"] = string_field(&ExperimentConfig::index_dir);
    t["cns"] = number_field(&ExperimentConfig::cns);
    t["mns"] = number_field(&ExperimentConfig::mns);
    t["cache_ratio"] = number_field(&ExperimentConfig::cache_ratio);
    t["cooling_fraction"] = number_field(&ExperimentConfig::cooling_fraction);
    t["admission_prob"] = number_field(&ExperimentConfig::admission_prob);
    t["workers_per_cn"] = number_field(&ExperimentConfig::workers_per_cn);
    t["coroutines_per_worker"] = number_field(&ExperimentConfig::coroutines_per_worker);
    t["policy"] = {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.policy = parse_policy(v); },
                   [](const ExperimentConfig& c) { return std::string(policy_name(c.policy)); }};
    t["zipf_s"] = number_field(&ExperimentConfig::zipf_s);
    t["batch_b"] = number_field(&ExperimentConfig::batch_b);
    t["sync_t"] = number_field(&ExperimentConfig::sync_t);
    t["warmup"] = number_field(&ExperimentConfig::warmup);
    t["measured"] = number_field(&ExperimentConfig::measured);
    t["recall_sample"] = number_field(&ExperimentConfig::recall_sample);
    t["unified_replay"] = bool_field(&ExperimentConfig::unified_replay);
    t["seed"] = number_field(&ExperimentConfig::seed);
    t["mode"] = {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.mode = parse_mode(v); },
                 [](const ExperimentConfig& c) { return std::string(mode_name(c.mode)); }};
    t["verb_latency_ns"] = cost_field(&CostModel::verb_latency_ns);
    t["nic_bytes_per_ns"] = cost_field(&CostModel::nic_bytes_per_ns);
    t["ns_per_dim"] = cost_field(&CostModel::ns_per_dim);
    t["cache_hit_ns"] = cost_field(&CostModel::cache_hit_ns);
    t["node_ns"] = cost_field(&CostModel::node_ns);
    t["verb_cpu_ns"] = cost_field(&CostModel::verb_cpu_ns);
    t["route_ns"] = cost_field(&CostModel::route_ns);
    t["hop_ns"] = cost_field(&CostModel::hop_ns);
    t["mn_route_ns"] = cost_field(&CostModel::mn_route_ns);
    t["progress_poll_ns"] = cost_field(&CostModel::progress_poll_ns);
    t["progress_timeout_polls"] = cost_field(&CostModel::progress_timeout_polls);
    return t;
  }();
  return table;
}

std::string normalize_key(std::string_view key) {
  std::string k(key);
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  const auto name = normalize_key(key);
  const auto it = fields().find(name);
  if (it == fields().end()) throw std::invalid_argument("unknown setting '" + std::string(key) + "'");
  it->second.set(config, name, value);
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply_setting(config, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<std::string> setting_names() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

std::map<std::string, std::string> settings_of(const ExperimentConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& [name, f] : fields()) out[name] = f.get(config);
  return out;
}

// ---------------------------------------------------------------------------
// Workbench

namespace {

constexpr std::uint64_t kQueryStream = 31;
constexpr const char* kIndexMetaFile = "index.json";

std::uint64_t arena_capacity_for(const ExperimentConfig& c, std::size_t n, std::uint32_t dim) {
  // Level-2 node size over-covers the expected per-node bytes (upper levels
  // hold about 1/(M-1) of the nodes); the slack absorbs uneven MN choice.
  const std::uint64_t per_node = node_size(dim, c.m, 2);
  const std::uint64_t total = static_cast<std::uint64_t>(n) * per_node;
  return total / std::max(1u, c.mns) + total / 8 + (4ull << 20);
}

}  // namespace

Workbench::Workbench(ExperimentConfig base, std::ostream* log)
    : base_(std::move(base)), key_(base_.index_key()), log_(log) {
  if (base_.mns == 0) throw PhaseError("config", "need at least one memory node");
  if (base_.k == 0) throw PhaseError("config", "k must be positive");
  try {
    load_data();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError("data", e.what());
  }
  try {
    prepare_index();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError("build", e.what());
  }
}

Workbench::~Workbench() = default;

void Workbench::log(const std::string& line) {
  if (log_) *log_ << line << '\n' << std::flush;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData d;
  if (!config.dataset.empty()) {
    d.base = load_dataset(config.dataset);
    if (config.n > 0 && config.n < d.base.size()) d.base = d.base.slice(0, config.n);
    if (config.queries.empty()) throw PhaseError("data", "a dataset file needs a query file (queries=...)");
    d.queries = load_dataset(config.queries);
    if (d.queries.dim() != d.base.dim()) throw PhaseError("data", "query and base dimensionality differ");
  } else {
    const SyntheticSpec spec{config.n, config.dim, config.distribution, config.components, config.spread};
    d.base = gen_synthetic(spec, config.seed);
    d.queries = gen_synthetic_queries(spec, config.query_pool, config.seed, derive_seed(config.seed, kQueryStream));
  }
  return d;
}

void Workbench::load_data() {
  ExperimentData d = load_experiment_data(base_);
  base_vectors_ = std::move(d.base);
  queries_ = std::move(d.queries);
  base_.n = base_vectors_.size();
  base_.dim = static_cast<std::uint32_t>(base_vectors_.dim());
  if (base_vectors_.size() < base_.k) throw PhaseError("data", "fewer base vectors than k");
  if (!base_.ground_truth.empty()) {
    file_truth_ = load_ivecs(base_.ground_truth);
    if (file_truth_.size() < queries_.size()) throw PhaseError("data", "ground truth has fewer rows than queries");
  }
  log("data: " + std::to_string(base_vectors_.size()) + " base vectors, " + std::to_string(queries_.size()) +
      " queries, d=" + std::to_string(base_vectors_.dim()));
}

void Workbench::prepare_index() {
  FabricConfig fc;
  fc.memory_nodes = base_.mns;
  fc.compute_nodes = std::max(1u, base_.cns);
  fc.arena_capacity = arena_capacity_for(base_, base_vectors_.size(), static_cast<std::uint32_t>(base_vectors_.dim()));
  fc.verb_latency_ns = base_.cost.verb_latency_ns;

  const std::filesystem::path dir = base_.index_dir;
  if (!dir.empty() && std::filesystem::exists(dir / kIndexMetaFile)) {
    std::ifstream in(dir / kIndexMetaFile);
    const auto doc = nlohmann::json::parse(in);
    if (doc.value("index_key", "") == key_) {
      fabric_ = Fabric::load(dir, fc);
      meta_ = read_index_meta(*fabric_);
      if (meta_.node_count != base_vectors_.size()) throw PhaseError("build", "persisted index node count mismatch");
      loaded_ = true;
      log("index: loaded " + std::to_string(meta_.node_count) + " nodes from " + dir.string());
      return;
    }
    log("index: " + dir.string() + " holds a different index; rebuilding");
  }

  IndexParams params;
  params.dim = static_cast<std::uint32_t>(base_vectors_.dim());
  params.m = base_.m;
  params.ef_construction = base_.ef_construction;
  params.metric = base_.metric;
  params.heuristic_selection = base_.heuristic_selection;
  fabric_ = std::make_unique<Fabric>(fc);
  meta_ = build_index(*fabric_, base_vectors_, params, base_.seed, std::max(1u, base_.build_workers));
  log("index: built " + std::to_string(meta_.node_count) + " nodes, top level " + std::to_string(meta_.top_level));

  if (!dir.empty()) {
    fabric_->save(dir);
    nlohmann::json doc;
    doc["index_key"] = key_;
    doc["node_count"] = meta_.node_count;
    doc["memory_nodes"] = fabric_->memory_node_count();
    std::vector<std::uint64_t> sums;
    for (std::uint32_t mn = 0; mn < fabric_->memory_node_count(); ++mn) sums.push_back(fabric_->arena(mn).checksum());
    doc["arena_checksums"] = sums;
    std::ofstream out(dir / kIndexMetaFile, std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out) throw PhaseError("build", "cannot write " + (dir / kIndexMetaFile).string());
  }
}

std::uint64_t Workbench::index_bytes() const {
  std::uint64_t total = 0;
  for (std::uint32_t mn = 0; mn < fabric_->memory_node_count(); ++mn) {
    total += fabric_->arena(mn).bump_value() - kDataRegionBase;
  }
  return total;
}

const Oracle& Workbench::oracle(std::uint32_t cns, ClusterModel* model, SampleInfo* info) {
  auto it = oracles_.find(cns);
  if (it == oracles_.end()) {
    try {
      OracleEntry e;
      const VectorSet sample = select_sample(*fabric_, meta_, base_.seed, kMaxSampleSize, &e.info);
      e.model = build_cluster_model(sample, cns, base_.seed);
      e.oracle = std::make_unique<Oracle>(e.model.centroids);
      log("partition: " + std::to_string(cns) + " clusters from " + std::to_string(e.info.sample_size) +
          " level-" + std::to_string(e.info.level) + " nodes");
      it = oracles_.emplace(cns, std::move(e)).first;
    } catch (const std::exception& ex) {
      throw PhaseError("partition", ex.what());
    }
  }
  if (model) *model = it->second.model;
  if (info) *info = it->second.info;
  return *it->second.oracle;
}

const std::vector<std::uint32_t>& Workbench::truth(std::uint32_t pool_index) {
  auto it = truth_.find(pool_index);
  if (it != truth_.end()) return it->second;
  std::vector<std::uint32_t> ids;
  if (!file_truth_.empty()) {
    const auto& row = file_truth_.at(pool_index);
    if (row.size() < base_.k) throw PhaseError("data", "ground truth rows shorter than k");
    for (std::size_t i = 0; i < base_.k; ++i) ids.push_back(static_cast<std::uint32_t>(row[i]));
  } else {
    ids = brute_force_knn(base_vectors_, queries_.row(pool_index), base_.k, base_.metric);
  }
  return truth_.emplace(pool_index, std::move(ids)).first->second;
}

double Workbench::measure_recall(std::uint32_t ef_search, std::span<const std::uint32_t> pool_indices,
                                 std::uint32_t k) {
  if (pool_indices.empty()) return 0.0;
  if (k > base_.k) throw PhaseError("tune", "recall k exceeds the ground-truth depth");
  FabricLink link(*fabric_, 0);
  Searcher searcher(link, meta_);
  double sum = 0.0;
  std::vector<std::uint32_t> ids;
  for (const auto p : pool_indices) {
    const auto found = searcher.knn_search(queries_.row(p), k, ef_search);
    ids.clear();
    for (const auto& n : found) ids.push_back(static_cast<std::uint32_t>(n.node_id));
    sum += recall_at_k(ids, truth(p), k);
  }
  return sum / static_cast<double>(pool_indices.size());
}

TuneResult Workbench::tune_efs(double target, std::span<const std::uint32_t> pool_indices, std::uint32_t k) {
  TuneResult r;
  std::map<std::uint32_t, double> seen;
  const auto probe = [&](std::uint32_t ef) {
    auto it = seen.find(ef);
    if (it == seen.end()) {
      it = seen.emplace(ef, measure_recall(ef, pool_indices, k)).first;
      r.probes.emplace_back(ef, it->second);
    }
    return it->second >= target;
  };
  const auto n = static_cast<std::uint32_t>(std::max<std::size_t>(meta_.node_count, k));
  std::uint32_t hi = k;
  std::uint32_t lo = 0;
  while (!probe(hi)) {
    if (hi >= n) {
      throw PhaseError("tune", "recall target " + format_double(target) + " unreachable at efS=" + std::to_string(hi));
    }
    lo = hi;
    hi = std::min(n, hi * 2);
  }
  while (lo != 0 && hi - lo > 1) {
    const std::uint32_t mid = lo + (hi - lo) / 2;
    if (probe(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  r.ef_search = hi;
  r.recall = seen.at(hi);
  return r;
}

std::vector<std::uint32_t> Workbench::tuning_sample() const {
  const std::size_t count = std::min(base_.recall_sample, queries_.size());
  std::vector<std::uint32_t> out(count);
  std::iota(out.begin(), out.end(), 0u);
  return out;
}

std::vector<std::uint32_t> Workbench::holdout_sample() const {
  const std::size_t begin = std::min(base_.recall_sample, queries_.size());
  const std::size_t end = std::min(2 * base_.recall_sample, queries_.size());
  std::vector<std::uint32_t> out(end - begin);
  std::iota(out.begin(), out.end(), static_cast<std::uint32_t>(begin));
  return out;
}

std::uint32_t Workbench::resolve_ef_search(const ExperimentConfig& config) {
  if (config.ef_search > 0) return config.ef_search;
  const auto key = std::make_pair(config.k, config.target_recall);
  auto it = tuned_.find(key);
  if (it == tuned_.end()) {
    const auto sample = tuning_sample();
    it = tuned_.emplace(key, tune_efs(config.target_recall, sample, config.k)).first;
    log("tune: efS=" + std::to_string(it->second.ef_search) + " reaches R@" + std::to_string(config.k) + "=" +
        format_double(it->second.recall));
  }
  return it->second.ef_search;
}

QueryStream Workbench::make_stream(const ExperimentConfig& config) const {
  const std::size_t count = config.warmup + config.measured;
  if (config.zipf_s > 0.0) {
    return gen_zipf(queries_.size(), count, config.warmup, config.zipf_s, config.cns, config.seed);
  }
  return gen_uniform(queries_.size(), count, config.warmup, config.cns, config.seed);
}

RunReport Workbench::run(const ExperimentConfig& config) {
  if (config.index_key() != key_) {
    throw PhaseError("config", "run differs from the workbench in index-defining settings");
  }
  if (config.k > base_.k) throw PhaseError("config", "k exceeds the workbench ground-truth depth");
  if (config.cns == 0) throw PhaseError("config", "need at least one compute node");

  RunReport report;
  report.config = config;
  report.ef_search = resolve_ef_search(config);

  ClusterModel model;
  const Oracle& oracle_ref = oracle(config.cns, &model, &report.sample);
  report.cluster_trained_k = model.trained_k;

  SimConfig sc;
  sc.compute_nodes = config.cns;
  sc.policy = config.policy;
  sc.batch = config.batch_b;
  sc.sync_threshold = config.sync_t;
  sc.k = config.k;
  sc.ef_search = report.ef_search;
  sc.cache.entry_bytes = payload_size(meta_.params.dim);
  sc.cache.capacity_bytes = static_cast<std::uint64_t>(config.cache_ratio * static_cast<double>(index_bytes()));
  if (sc.cache.capacity_bytes < sc.cache.entry_bytes) sc.cache.capacity_bytes = 0;
  sc.cache.cooling_fraction = config.cooling_fraction;
  sc.cache.base_admission_prob = config.admission_prob;
  sc.workers_per_cn = config.workers_per_cn;
  sc.coroutines_per_worker = config.coroutines_per_worker;
  sc.cost = config.cost;
  sc.seed = config.seed;
  sc.unified_replay = config.unified_replay;
  report.cache_entries_per_cn = sc.cache.capacity_bytes / sc.cache.entry_bytes;

  QueryStream stream;
  try {
    stream = make_stream(config);
  } catch (const std::exception& e) {
    throw PhaseError("config", e.what());
  }

  try {
    if (config.mode == RunMode::kDeterministic) {
      report.result = simulate_cluster(*fabric_, meta_, oracle_ref, queries_, stream, sc);
    } else {
      report.result = run_cluster_threaded(*fabric_, meta_, oracle_ref, queries_, stream, sc);
    }
  } catch (const std::exception& e) {
    throw PhaseError("run", e.what());
  }

  // Distinct queries only: under skew a few hot repeats would otherwise
  // stand in for the whole sample.
  std::size_t sample = 0;
  double sum = 0.0;
  absl::flat_hash_set<std::uint32_t> seen;
  for (std::size_t pos = stream.warmup; pos < stream.size() && sample < config.recall_sample; ++pos) {
    if (!seen.insert(stream.pool_index[pos]).second) continue;
    sum += recall_at_k(report.result.results[pos], truth(stream.pool_index[pos]), config.k);
    ++sample;
  }
  report.recall_queries = sample;
  report.recall = sample == 0 ? 0.0 : sum / static_cast<double>(sample);
  if (report.result.chr_max) report.csp = csp(report.result.chr, *report.result.chr_max);
  report.traffic = traffic_summary(report.result.search, report.result.measured_queries);
  log("run: policy=" + std::string(policy_name(config.policy)) + " zipf_s=" + format_double(config.zipf_s) +
      " chr=" + format_double(report.result.chr) +
      (report.csp ? " csp=" + format_double(*report.csp) : std::string()) + " R@" + std::to_string(config.k) + "=" +
      format_double(report.recall));
  return report;
}

std::vector<RunReport> sweep(Workbench& bench, const ExperimentConfig& base, std::span<const RoutingPolicy> policies,
                             std::span<const double> zipf_values) {
  std::vector<RunReport> out;
  for (const double s : zipf_values) {
    for (const auto p : policies) {
      ExperimentConfig c = base;
      c.policy = p;
      c.zipf_s = s;
      out.push_back(bench.run(c));
    }
  }
  return out;
}

}  // namespace dmhnsw
