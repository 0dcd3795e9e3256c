// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress and
// timings on stderr. Exit status is nonzero if any criterion fails.
//
// Usage: dmhnsw_acceptance [index-dir]. The desk index is persisted there and
// reused by later invocations.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dmhnsw/cache.hpp"
#include "dmhnsw/dataset.hpp"
#include "dmhnsw/experiment.hpp"
#include "dmhnsw/hnsw.hpp"
#include "dmhnsw/layout.hpp"
#include "dmhnsw/reference_hnsw.hpp"
#include "dmhnsw/report.hpp"
#include "dmhnsw/router.hpp"
#include "dmhnsw/workload.hpp"

namespace {

using namespace dmhnsw;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Shared desk state: one workbench and one sweep feed criteria 4, 6, 7, 10, 12.

class Desk {
 public:
  explicit Desk(std::filesystem::path dir) : dir_(std::move(dir)) {}

  ExperimentConfig config() const {
    ExperimentConfig c = desk_preset();
    c.index_dir = dir_.string();
    return c;
  }

  Workbench& bench() {
    if (!bench_) bench_ = std::make_unique<Workbench>(config(), &std::cerr);
    return *bench_;
  }

  const std::vector<RunReport>& sweep_runs() {
    if (sweep_.empty()) sweep_ = run_sweep(bench());
    return sweep_;
  }

  const RunReport& find(RoutingPolicy p, double s) {
    for (const auto& r : sweep_runs()) {
      if (r.config.policy == p && r.config.zipf_s == s) return r;
    }
    throw std::logic_error("run missing from sweep");
  }

  std::vector<RunReport> run_sweep(Workbench& bench) const {
    const std::vector<RoutingPolicy> policies{RoutingPolicy::kNoRouting, RoutingPolicy::kBestFit,
                                              RoutingPolicy::kBalanced, RoutingPolicy::kAdaptive};
    const std::vector<double> zipf{0.0, 1.0};
    return sweep(bench, config(), policies, zipf);
  }

 private:
  std::filesystem::path dir_;
  std::unique_ptr<Workbench> bench_;
  std::vector<RunReport> sweep_;
};

// ---------------------------------------------------------------------------

Outcome layout_exactness() {
  const bool sizes = node_size(128, 32, 0) == 1036 && node_size(128, 32, 1) == 1296 && node_size(128, 32, 2) == 1556;
  Rng rng(2024);
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const LayoutParams p{static_cast<std::uint32_t>(1 + uniform_index(rng, 128)),
                         static_cast<std::uint32_t>(2 + uniform_index(rng, 31))};
    const auto level = static_cast<std::uint32_t>(uniform_index(rng, 4));
    NodeRecord r;
    r.header.node_id = rng() & NodeHeader::kMaxNodeId;
    r.header.max_level = static_cast<std::uint8_t>(level);
    r.vector.resize(p.dim);
    for (auto& x : r.vector) x = static_cast<float>(standard_normal(rng));
    r.lists.resize(level + 1);
    for (std::uint32_t l = 0; l <= level; ++l) {
      const auto count = uniform_index(rng, p.capacity(l) + 1);
      for (std::uint64_t j = 0; j < count; ++j) {
        r.lists[l].emplace_back(static_cast<std::uint32_t>(uniform_index(rng, 8)), 4096 + 8 * uniform_index(rng, 1u << 28));
      }
    }
    const auto bytes = encode_node(r, p);
    if (bytes.size() != node_size(p.dim, p.m, level) || decode_node(bytes, p) != r) ++failures;
  }
  return {sizes && failures == 0, "node sizes " + std::string(sizes ? "exact" : "WRONG") + ", " +
                                      std::to_string(failures) + " round-trip failures in 10000"};
}

Outcome graph_preservation() {
  const SyntheticSpec spec{10000, 16, Distribution::kGaussianMixture, 1, 1.0};
  const auto data = gen_synthetic(spec, 7);
  const IndexParams params{16, 16, 200};
  Fabric fabric(FabricConfig{2, 1, 32 << 20});
  const auto meta = build_index(fabric, data, params, 99, 1);
  ReferenceHnsw ref(params);
  ref.build(data, 99);
  const auto adj = read_adjacency(fabric, meta);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < std::max(adj.size(), ref.adjacency().size()); ++i) {
    if (i >= adj.size() || i >= ref.adjacency().size() || adj[i] != ref.adjacency()[i]) ++differing;
  }
  std::size_t edges = 0;
  for (const auto& node : adj) {
    for (const auto& list : node) edges += list.size();
  }
  const bool same_top = meta.top_level == ref.top_level();
  return {differing == 0 && same_top && adj.size() == 10000,
          std::to_string(differing) + " of 10000 nodes differ, " + std::to_string(edges) + " edges, top level " +
              std::to_string(meta.top_level) + (same_top ? "" : " (reference disagrees)")};
}

Outcome accuracy_parity(Desk& desk) {
  Workbench& bench = desk.bench();
  ExperimentConfig base = desk.config();
  base.warmup = 0;
  base.measured = 1000;
  base.zipf_s = 1.0;
  base.unified_replay = false;
  const std::uint32_t ef = bench.resolve_ef_search(base);
  const auto stream = bench.make_stream(base);

  FabricLink link(bench.fabric(), 0);
  Searcher plain(link, bench.meta());
  std::vector<std::set<std::uint32_t>> expected(stream.size());
  for (std::size_t pos = 0; pos < stream.size(); ++pos) {
    for (const auto& n : plain.knn_search(bench.query_pool().row(stream.pool_index[pos]), base.k, ef)) {
      expected[pos].insert(static_cast<std::uint32_t>(n.node_id));
    }
  }

  std::size_t mismatches = 0, runs = 0;
  double hit_rate = 0;
  for (double ratio : {0.0, 0.05}) {
    for (auto policy : {RoutingPolicy::kNoRouting, RoutingPolicy::kBestFit, RoutingPolicy::kBalanced,
                        RoutingPolicy::kAdaptive}) {
      ExperimentConfig c = base;
      c.cache_ratio = ratio;
      c.policy = policy;
      const auto r = bench.run(c);
      ++runs;
      hit_rate = std::max(hit_rate, r.result.chr);
      for (std::size_t pos = 0; pos < stream.size(); ++pos) {
        const auto& got = r.result.results.at(pos);
        if (std::set<std::uint32_t>(got.begin(), got.end()) != expected[pos]) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatching queries over " + std::to_string(runs) +
                               " runs x 1000 queries (efS=" + std::to_string(ef) + ", best CHR " + fmt(hit_rate, 3) +
                               ")"};
}

Outcome recall_methodology(Desk& desk) {
  Workbench& bench = desk.bench();
  const auto c = desk.config();
  const auto tune = bench.tune_efs(0.95, bench.tuning_sample(), c.k);
  const double holdout = bench.measure_recall(tune.ef_search, bench.holdout_sample(), c.k);
  return {tune.recall >= 0.95 && holdout >= 0.93 && bench.holdout_sample().size() == 1000,
          "efS=" + std::to_string(tune.ef_search) + " R@10=" + fmt(tune.recall) + " held-out R@10=" + fmt(holdout) +
              " on " + std::to_string(bench.holdout_sample().size()) + " queries"};
}

Outcome csp_formula() {
  const auto a = csp(0.25, 1.0);
  const auto b = csp(0.15, 0.60);
  const bool ok = a && b && *a == 0.75 && *b == 0.75;
  return {ok, "csp(0.25,1.0)=" + (a ? fmt(*a, 17) : "none") + " csp(0.15,0.60)=" + (b ? fmt(*b, 17) : "none")};
}

Outcome table3_direction(Desk& desk) {
  const auto& u_none = desk.find(RoutingPolicy::kNoRouting, 0.0);
  const auto& u_adapt = desk.find(RoutingPolicy::kAdaptive, 0.0);
  const auto& s_none = desk.find(RoutingPolicy::kNoRouting, 1.0);
  const auto& s_adapt = desk.find(RoutingPolicy::kAdaptive, 1.0);
  if (!u_none.csp || !u_adapt.csp || !s_none.csp || !s_adapt.csp) return {false, "CSP unavailable"};
  const double chr_ratio = u_adapt.result.chr / u_none.result.chr;
  const double u_csp_ratio = *u_adapt.csp / *u_none.csp;
  const double s_csp_ratio = *s_adapt.csp / *s_none.csp;
  const bool ok = chr_ratio >= 1.5 && u_csp_ratio <= 0.7 && s_csp_ratio <= 0.6;
  return {ok, "uniform CHR ratio " + fmt(chr_ratio, 3) + " (>= 1.5), uniform CSP ratio " + fmt(u_csp_ratio, 3) +
                  " (<= 0.7), skewed CSP ratio " + fmt(s_csp_ratio, 3) + " (<= 0.6)"};
}

Outcome policy_ordering(Desk& desk) {
  const auto& none = desk.find(RoutingPolicy::kNoRouting, 1.0);
  const auto& best = desk.find(RoutingPolicy::kBestFit, 1.0);
  const auto& bal = desk.find(RoutingPolicy::kBalanced, 1.0);
  const auto& adapt = desk.find(RoutingPolicy::kAdaptive, 1.0);
  const double t_a = adapt.result.sim_throughput_qps, t_bal = bal.result.sim_throughput_qps,
               t_best = best.result.sim_throughput_qps;
  const bool throughput = t_a >= t_bal && t_bal >= t_best;
  const bool chr = best.result.chr >= bal.result.chr && bal.result.chr >= none.result.chr;
  return {throughput && chr, "q/s adaptive " + fmt(t_a, 0) + " balanced " + fmt(t_bal, 0) + " best-fit " +
                                 fmt(t_best, 0) + (throughput ? " (ordered)" : " (NOT ordered)") + "; CHR best-fit " +
                                 fmt(best.result.chr, 3) + " balanced " + fmt(bal.result.chr, 3) + " none " +
                                 fmt(none.result.chr, 3) + (chr ? " (ordered)" : " (NOT ordered)")};
}

Outcome limit_arithmetic() {
  const std::vector<double> p{30, 10, 10, 10};
  const auto l = update_limits(p, 1000);
  const std::vector<double> want{500.0 / 3, 2500.0 / 9, 2500.0 / 9, 2500.0 / 9};
  double worst = 0;
  for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(l[i] - want[i]));
  Rng rng(8);
  double worst_rel = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> progress(1 + uniform_index(rng, 16));
    for (auto& x : progress) x = static_cast<double>(uniform_index(rng, 5000));
    const double b = 1 + static_cast<double>(uniform_index(rng, 10000));
    const auto lim = update_limits(progress, b);
    worst_rel = std::max(worst_rel, std::abs(std::accumulate(lim.begin(), lim.end(), 0.0) - b) / b);
  }
  return {worst <= 1e-9 && worst_rel <= 1e-6,
          "example max error " + fmt(worst, 12) + ", worst relative sum error " + fmt(worst_rel, 12)};
}

Outcome cache_stress() {
  constexpr std::uint64_t kEntryBytes = 64;
  constexpr std::size_t kEntries = 20000;
  constexpr std::uint64_t kKeys = 60000;
  constexpr unsigned kThreads = 16;
  constexpr std::uint64_t kOpsPerThread = 1000000 / kThreads;
  NodeCache cache(CacheConfig{kEntries * kEntryBytes, kEntryBytes});

  // Every word of a payload is (key index << 32) | stamp; the stamp (thread,
  // op) names one specific write, so a valid copy has identical words and a
  // stamp that some thread issued for this key.
  auto make = [](std::uint64_t idx, std::uint64_t stamp) {
    std::vector<std::byte> p(kEntryBytes);
    const std::uint64_t v = idx << 32 | stamp;
    for (std::size_t w = 0; w < kEntryBytes / 8; ++w) std::memcpy(p.data() + 8 * w, &v, 8);
    return p;
  };
  auto key_of = [](std::uint64_t i) { return RemoteAddress(static_cast<std::uint32_t>(i % 2), 4096 + 8 * i); };

  std::atomic<std::uint64_t> torn{0}, over{0}, hits{0};
  std::vector<std::vector<std::vector<std::uint64_t>>> written(kThreads, std::vector<std::vector<std::uint64_t>>(kKeys));
  // (key index, stamp) of every intact hit, checked against the writers'
  // logs after the join.
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> seen_by(kThreads);
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      Rng rng(1000 + t);
      std::vector<std::byte> out;
      auto& seen = seen_by[t];
      for (std::uint64_t op = 0; op < kOpsPerThread; ++op) {
        const auto idx = uniform_index(rng, kKeys);
        const auto key = key_of(idx);
        if (uniform_index(rng, 4) == 0) {
          const std::uint64_t stamp = (std::uint64_t{t} << 24) | op;
          written[t][idx].push_back(stamp);
          cache.insert(key, make(idx, stamp), rng);
        } else if (cache.lookup(key, out)) {
          hits.fetch_add(1, std::memory_order_relaxed);
          std::uint64_t first = 0;
          std::memcpy(&first, out.data(), 8);
          bool ok = out.size() == kEntryBytes && first >> 32 == idx;
          for (std::size_t w = 1; ok && w < kEntryBytes / 8; ++w) {
            std::uint64_t v = 0;
            std::memcpy(&v, out.data() + 8 * w, 8);
            ok = v == first;
          }
          if (!ok) torn.fetch_add(1, std::memory_order_relaxed);
          else seen.emplace_back(idx, first & 0xffffffffu);
        }
        if (op % 4096 == 0 && cache.size() > kEntries) over.fetch_add(1, std::memory_order_relaxed);
      }
    });
  }
  for (auto& th : threads) th.join();

  std::uint64_t unknown = 0;
  for (const auto& seen : seen_by) {
    for (const auto& [idx, stamp] : seen) {
      const auto writer = stamp >> 24;
      if (writer >= kThreads) {
        ++unknown;
        continue;
      }
      const auto& log = written[writer][idx];
      if (!std::binary_search(log.begin(), log.end(), stamp)) ++unknown;
    }
  }

  const double target = 0.10 * kEntries;
  const auto cooling = static_cast<double>(cache.cooling_population());
  const bool cooling_ok = cooling >= 0.8 * target && cooling <= 1.2 * target;
  const bool ok = torn == 0 && unknown == 0 && over == 0 && cooling_ok && cache.size() <= kEntries &&
                  cache.check_coherence();
  return {ok, std::to_string(torn.load()) + " torn, " + std::to_string(unknown) + " unknown payloads over " +
                  std::to_string(hits.load()) + " hits; capacity exceeded " + std::to_string(over.load()) +
                  " times; cooling " + fmt(cooling, 0) + " of target " + fmt(target, 0)};
}

Outcome skew_sensitivity(Desk& desk) {
  Workbench& bench = desk.bench();
  std::vector<std::pair<double, double>> chr;
  for (double s : {0.5, 1.0, 1.25, 1.5}) {
    if (s == 1.0) {
      chr.emplace_back(s, desk.find(RoutingPolicy::kNoRouting, 1.0).result.chr);
      continue;
    }
    ExperimentConfig c = desk.config();
    c.policy = RoutingPolicy::kNoRouting;
    c.zipf_s = s;
    c.unified_replay = false;
    chr.emplace_back(s, bench.run(c).result.chr);
  }
  const double c05 = chr[0].second, c10 = chr[1].second, c125 = chr[2].second, c15 = chr[3].second;
  const bool ok = c125 >= 0.90 * c15 && c05 < c10 && c10 < c15;
  std::string detail = "cache-only CHR";
  for (const auto& [s, v] : chr) detail += " s=" + fmt(s, 2) + ":" + fmt(v, 3);
  return {ok, detail};
}

Outcome traffic_ratio(const std::filesystem::path& dir) {
  ExperimentConfig c = desk_preset();
  c.n = 20000;
  c.dim = 128;
  // Uniform data and uniform queries. On clustered data most neighbors of an expanded node are already
  // visited, which inflates the list share well beyond the per-expansion estimate.
  c.distribution = Distribution::kUniform;
  c.query_pool = 2000;
  c.index_dir = (dir / "d128").string();
  c.cache_ratio = 0.0;
  c.zipf_s = 0.0;
  c.policy = RoutingPolicy::kNoRouting;
  c.warmup = 0;
  c.measured = 2000;
  c.recall_sample = 500;
  c.unified_replay = false;
  Workbench bench(c, &std::cerr);
  const auto r = bench.run(c);
  const double ratio = r.traffic.list_to_vector_ratio;
  return {ratio >= 2.0 / 128 && ratio <= 8.0 / 128,
          "list/vector bytes " + fmt(ratio, 4) + " in [" + fmt(2.0 / 128, 4) + ", " + fmt(8.0 / 128, 4) +
              "] at efS=" + std::to_string(r.ef_search)};
}

Outcome determinism(Desk& desk) {
  const std::string first = report_document(desk.sweep_runs()).dump();
  // A second workbench reloads the persisted index and repeats every run.
  Workbench again(desk.config(), &std::cerr);
  const std::string second = report_document(desk.run_sweep(again)).dump();
  return {first == second, "two desk sweeps of " + std::to_string(desk.sweep_runs().size()) + " runs: reports " +
                               (first == second ? "byte-identical" : "DIFFER") + " (" + std::to_string(first.size()) +
                               " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "dmhnsw_acceptance";
  std::filesystem::create_directories(dir);
  Desk desk(dir / "desk");

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "layout exactness", layout_exactness},
      {2, "graph preservation", graph_preservation},
      {3, "accuracy parity", [&] { return accuracy_parity(desk); }},
      {4, "recall methodology", [&] { return recall_methodology(desk); }},
      {5, "CSP formula", csp_formula},
      {6, "routing lifts CHR and cuts CSP", [&] { return table3_direction(desk); }},
      {7, "policy ordering under skew", [&] { return policy_ordering(desk); }},
      {8, "adaptive limit arithmetic", limit_arithmetic},
      {9, "cache invariants under stress", cache_stress},
      {10, "skew sensitivity", [&] { return skew_sensitivity(desk); }},
      {11, "traffic ratio", [&] { return traffic_ratio(dir); }},
      {12, "determinism", [&] { return determinism(desk); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "criterion " << c.id << " took " << fmt(secs, 1) << " s\n";
    std::cout << "criterion " << std::setw(2) << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": "
              << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
