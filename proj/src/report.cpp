#include "dmhnsw/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>

namespace dmhnsw {

namespace {

nlohmann::json counters_json(const SearchCounters& c) {
  return {{"distance_computations", c.distance_computations},
          {"cache_lookups", c.cache_lookups},
          {"cache_hits", c.cache_hits},
          {"node_reads", c.node_reads},
          {"node_read_bytes", c.node_read_bytes},
          {"list_reads", c.list_reads},
          {"list_read_bytes", c.list_read_bytes},
          {"visited", c.visited}};
}

nlohmann::json optional_number(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string dataset_label(const ExperimentConfig& c) {
  if (!c.dataset.empty()) return std::filesystem::path(c.dataset).stem().string();
  return "synthetic-" + std::string(distribution_name(c.distribution)) + "-" + std::to_string(c.n) + "x" +
         std::to_string(c.dim);
}

}  // namespace

nlohmann::json run_to_json(const RunReport& r) {
  const auto& c = r.config;
  const auto& res = r.result;
  const bool wall = c.mode == RunMode::kConcurrent;

  nlohmann::json j;
  j["dataset"] = dataset_label(c);
  j["policy"] = policy_name(c.policy);
  j["zipf_s"] = c.zipf_s;
  j["workload"] = c.zipf_s > 0.0 ? "zipf" : "uniform";
  j["mode"] = mode_name(c.mode);
  j["settings"] = settings_of(c);
  j["ef_search"] = r.ef_search;
  j["cache_entries_per_cn"] = r.cache_entries_per_cn;
  j["cluster"] = {{"trained_k", r.cluster_trained_k},
                  {"sample_level", r.sample.level},
                  {"sample_level_fallback", r.sample.fallback},
                  {"sample_level_population", r.sample.level_population},
                  {"sample_size", r.sample.sample_size}};

  j["warmup"] = {{"queries", c.warmup}, {"discarded_cache_lookups", res.warmup_lookups}};
  j["measured_queries"] = res.measured_queries;
  j["chr"] = res.chr;
  j["chr_max"] = optional_number(res.chr_max);
  j["csp"] = optional_number(r.csp);
  j["recall"] = {{"k", c.k}, {"value", r.recall}, {"queries", r.recall_queries}};
  if (wall) {
    j["throughput"] = {{"wall_qps", res.wall_throughput_qps}, {"wall_makespan_ns", res.makespan_ns}};
  } else {
    j["throughput"] = {{"simulated_qps", res.sim_throughput_qps}, {"simulated_makespan_ns", res.makespan_ns}};
  }
  j["traffic"] = {{"bytes_per_query", r.traffic.bytes_per_query},
                  {"list_to_vector_ratio", r.traffic.list_to_vector_ratio}};
  j["search"] = counters_json(res.search);
  j["messages"] = {{"sent", res.messages.sent}, {"delivered", res.messages.delivered},
                   {"dropped", res.messages.dropped}};

  nlohmann::json per_cn = nlohmann::json::array();
  for (std::size_t i = 0; i < res.per_cn.size(); ++i) {
    const auto& s = res.per_cn[i];
    per_cn.push_back({{"cn", i},
                      {"queries", s.queries},
                      {"forwarded_out", s.forwarded_out},
                      {"forwarded_in", s.forwarded_in},
                      {"chr", s.chr()},
                      {"cache_lookups", s.search.cache_lookups},
                      {"cache_hits", s.search.cache_hits},
                      {"evictions", s.cache.evictions},
                      {"admissions", s.cache.admissions},
                      {"dropped_admissions", s.cache.dropped_admissions},
                      {"cooling_population", s.cache.cooling_population},
                      {"read_ops", s.traffic.read_ops},
                      {"read_bytes", s.traffic.read_bytes},
                      {"msgs_sent", s.traffic.msgs_sent},
                      {"batches", s.batches},
                      {"stale_progress_reports", s.stale_reports},
                      {"max_queue", s.max_queue}});
  }
  j["per_cn"] = per_cn;
  j["limit_traces"] = res.limit_traces;
  return j;
}

nlohmann::json tune_to_json(const TuneResult& tune, double target, std::uint32_t k) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& [ef, recall] : tune.probes) probes.push_back({{"ef_search", ef}, {"recall", recall}});
  return {{"target_recall", target}, {"k", k}, {"ef_search", tune.ef_search}, {"recall", tune.recall},
          {"probes", probes}};
}

nlohmann::json report_document(std::span<const RunReport> runs, const std::optional<nlohmann::json>& tune) {
  nlohmann::json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["tool"] = "dmhnsw-bench";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : runs) arr.push_back(run_to_json(r));
  doc["runs"] = arr;
  if (tune) doc["tune"] = *tune;
  return doc;
}

void write_text_table(std::ostream& out, std::span<const RunReport> runs) {
  int width = 8;
  for (const auto& r : runs) width = std::max(width, static_cast<int>(dataset_label(r.config).size()) + 2);
  out << std::left << std::setw(width) << "dataset" << std::setw(11) << "policy" << std::right << std::setw(7) << "zipf"
      << std::setw(8) << "CHR" << std::setw(9) << "CHR_max" << std::setw(8) << "CSP" << std::setw(8) << "R@k"
      << std::setw(14) << "q/s" << '\n';
  for (const auto& r : runs) {
    const auto& res = r.result;
    const bool wall = r.config.mode == RunMode::kConcurrent;
    out << std::left << std::setw(width) << dataset_label(r.config) << std::setw(11) << policy_name(r.config.policy)
        << std::right << std::setw(7) << fixed(r.config.zipf_s, 2) << std::setw(8) << fixed(res.chr, 3)
        << std::setw(9) << (res.chr_max ? fixed(*res.chr_max, 3) : "-") << std::setw(8)
        << (r.csp ? fixed(*r.csp, 3) : "-") << std::setw(8) << fixed(r.recall, 3) << std::setw(14)
        << fixed(wall ? res.wall_throughput_qps : res.sim_throughput_qps, 0) << (wall ? " wall" : " sim") << '\n';
  }
}

void write_csv(std::ostream& out, std::span<const RunReport> runs) {
  out << "dataset,policy,zipf_s,cns,mode,chr,chr_max,csp,recall,ef_search,qps,qps_kind\n";
  for (const auto& r : runs) {
    const auto& res = r.result;
    const bool wall = r.config.mode == RunMode::kConcurrent;
    out << dataset_label(r.config) << ',' << policy_name(r.config.policy) << ',' << fixed(r.config.zipf_s, 4) << ','
        << r.config.cns << ',' << mode_name(r.config.mode) << ',' << fixed(res.chr, 6) << ','
        << (res.chr_max ? fixed(*res.chr_max, 6) : "") << ',' << (r.csp ? fixed(*r.csp, 6) : "") << ','
        << fixed(r.recall, 6) << ',' << r.ef_search << ','
        << fixed(wall ? res.wall_throughput_qps : res.sim_throughput_qps, 1) << ',' << (wall ? "wall" : "simulated")
        << '\n';
  }
}

void write_report(const std::string& path, const nlohmann::json& doc, std::span<const RunReport> runs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PhaseError("report", "cannot open " + path);
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") {
    write_csv(out, runs);
  } else if (ext == ".txt") {
    write_text_table(out, runs);
  } else {
    out << doc.dump(2) << '\n';
  }
  if (!out) throw PhaseError("report", "short write to " + path);
}

}  // namespace dmhnsw
