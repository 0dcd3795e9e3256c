#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>

#include "dmhnsw/dataset.hpp"
#include "dmhnsw/experiment.hpp"
#include "dmhnsw/hnsw.hpp"
#include "dmhnsw/layout.hpp"
#include "dmhnsw/report.hpp"
#include "dmhnsw/router.hpp"
#include "dmhnsw/workload.hpp"

namespace py = pybind11;
using namespace dmhnsw;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

VectorSet to_vectors(const FloatArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array of vectors");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto dim = static_cast<std::size_t>(a.shape(1));
  return VectorSet(dim, std::vector<float>(a.data(), a.data() + rows * dim));
}

py::array_t<float> to_array(const VectorSet& v) {
  py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size()), static_cast<py::ssize_t>(v.dim())});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

std::span<const float> query_span(const FloatArray& q) {
  if (q.ndim() != 1) throw std::invalid_argument("expected a 1-d query vector");
  return {q.data(), static_cast<std::size_t>(q.shape(0))};
}

// An index built on a private fabric, searched through one uncached link.
class Index {
 public:
  Index(const FloatArray& data, std::uint32_t m, std::uint32_t ef_construction, std::string_view metric,
        bool heuristic, std::uint64_t seed, std::uint32_t memory_nodes, std::uint32_t workers) {
    const auto vectors = to_vectors(data);
    IndexParams params;
    params.dim = static_cast<std::uint32_t>(vectors.dim());
    params.m = m;
    params.ef_construction = ef_construction;
    params.metric = parse_metric(metric);
    params.heuristic_selection = heuristic;
    std::uint64_t bytes = 0;
    for (std::size_t i = 0; i < vectors.size(); ++i) bytes += node_size(params.dim, m, 4);
    fabric_ = std::make_unique<Fabric>(FabricConfig{memory_nodes, 1, kDataRegionBase + 2 * bytes / memory_nodes + (1 << 20)});
    {
      py::gil_scoped_release release;
      meta_ = build_index(*fabric_, vectors, params, seed, workers);
    }
    link_ = std::make_unique<FabricLink>(*fabric_, 0);
    searcher_ = std::make_unique<Searcher>(*link_, meta_);
  }

  py::tuple search(const FloatArray& q, std::uint32_t k, std::uint32_t ef_search) {
    const auto found = searcher_->knn_search(query_span(q), k, ef_search);
    const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(found.size())};
    py::array_t<std::int64_t> ids(shape);
    py::array_t<float> dists(shape);
    auto* id_out = ids.mutable_data();
    auto* dist_out = dists.mutable_data();
    for (std::size_t i = 0; i < found.size(); ++i) {
      id_out[i] = static_cast<std::int64_t>(found[i].node_id);
      dist_out[i] = found[i].dist;
    }
    return py::make_tuple(ids, dists);
  }

  Adjacency adjacency() const { return read_adjacency(*fabric_, meta_); }
  std::uint64_t size() const { return meta_.node_count; }
  int top_level() const { return meta_.top_level; }
  py::dict traffic() const {
    const auto& s = link_->stats();
    py::dict d;
    d["read_ops"] = s.read_ops;
    d["read_bytes"] = s.read_bytes;
    return d;
  }

 private:
  std::unique_ptr<Fabric> fabric_;
  IndexMeta meta_;
  std::unique_ptr<FabricLink> link_;
  std::unique_ptr<Searcher> searcher_;
};

ExperimentConfig config_from(std::string_view preset_name, const py::dict& settings) {
  ExperimentConfig c = preset(preset_name);
  for (const auto& [key, value] : settings) {
    apply_setting(c, py::str(key).cast<std::string>(), py::str(value).cast<std::string>());
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed HNSW over an emulated disaggregated-memory fabric.";

  m.def("node_size", &node_size, py::arg("dim"), py::arg("m"), py::arg("level"),
        "Bytes of a node whose top level is `level`.");
  m.def("payload_size", &payload_size, py::arg("dim"));
  m.def("csp", &csp, py::arg("chr"), py::arg("chr_max"));
  m.def(
      "update_limits", [](const std::vector<double>& progress, double batch) { return update_limits(progress, batch); },
      py::arg("progress"), py::arg("batch"));
  m.def(
      "recall_at_k",
      [](const std::vector<std::uint32_t>& result, const std::vector<std::uint32_t>& truth, std::size_t k) {
        return recall_at_k(result, truth, k);
      },
      py::arg("result"), py::arg("truth"), py::arg("k"));
  m.def(
      "brute_force_knn",
      [](const FloatArray& data, const FloatArray& q, std::size_t k, std::string_view metric) {
        return brute_force_knn(to_vectors(data), query_span(q), k, parse_metric(metric));
      },
      py::arg("data"), py::arg("query"), py::arg("k"), py::arg("metric") = "l2");
  m.def(
      "gen_synthetic",
      [](std::size_t n, std::size_t dim, std::string_view distribution, std::uint32_t components, double spread,
         std::uint64_t seed) {
        return to_array(gen_synthetic({n, dim, parse_distribution(distribution), components, spread}, seed));
      },
      py::arg("n"), py::arg("dim"), py::arg("distribution") = "mixture", py::arg("components") = 32,
      py::arg("spread") = 0.1, py::arg("seed") = 42);

  py::class_<Index>(m, "Index")
      .def(py::init<const FloatArray&, std::uint32_t, std::uint32_t, std::string_view, bool, std::uint64_t,
                    std::uint32_t, std::uint32_t>(),
           py::arg("data"), py::arg("m") = 16, py::arg("ef_construction") = 200, py::arg("metric") = "l2",
           py::arg("heuristic") = false, py::arg("seed") = 42, py::arg("memory_nodes") = 2, py::arg("workers") = 1)
      .def("search", &Index::search, py::arg("query"), py::arg("k") = 10, py::arg("ef_search") = 100,
           "Returns (ids, distances), nearest first.")
      .def("adjacency", &Index::adjacency, "Neighbor ids per node and level.")
      .def("traffic", &Index::traffic)
      .def_property_readonly("top_level", &Index::top_level)
      .def("__len__", &Index::size);

  m.def("setting_names", &setting_names);
  m.def(
      "settings",
      [](std::string_view preset_name, const py::dict& overrides) {
        return settings_of(config_from(preset_name, overrides));
      },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict());
  m.def(
      "run_json",
      [](std::string_view preset_name, const py::dict& overrides) {
        const auto c = config_from(preset_name, overrides);
        py::gil_scoped_release release;
        Workbench bench(c);
        const std::vector<RunReport> runs{bench.run(c)};
        return report_document(runs).dump();
      },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict(),
      "Builds (or loads) the index, runs one experiment and returns the report document as JSON text.");
}
