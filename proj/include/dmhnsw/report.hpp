#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "dmhnsw/experiment.hpp"

namespace dmhnsw {

/// Bumped whenever a key is renamed or its meaning changes.
inline constexpr int kReportSchemaVersion = 1;

/// One run. Wall-clock fields are omitted in deterministic mode so that equal
/// configurations produce byte-identical documents.
nlohmann::json run_to_json(const RunReport& report);

nlohmann::json tune_to_json(const TuneResult& tune, double target, std::uint32_t k);

/// {schema_version, tool, runs[, tune]}.
nlohmann::json report_document(std::span<const RunReport> runs, const std::optional<nlohmann::json>& tune = {});

/// Aligned table mirroring Table 3 columns (CHR, CSP, throughput) per run.
void write_text_table(std::ostream& out, std::span<const RunReport> runs);
void write_csv(std::ostream& out, std::span<const RunReport> runs);

/// Writes `doc` to `path` (JSON), or a table/CSV chosen by the extension
/// (.txt, .csv). Throws PhaseError("report", ...) on I/O failure.
void write_report(const std::string& path, const nlohmann::json& doc, std::span<const RunReport> runs);

}  // namespace dmhnsw
