#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ibnet {

/// Canonical serialization: objects with sorted keys and shortest round-trip
/// number formatting. Equal values hash equally regardless of key insertion
/// order.
std::string canonical_dump(const nlohmann::json& j);

/// FNV-1a hex digest of the canonical serialization.
std::string content_hash(const nlohmann::json& j);

/// One pipeline run in the append-only ledger.
struct RunRecord {
    std::string run_id;                       // unique within a ledger
    std::string timestamp;                    // ISO-8601, caller-supplied
    std::string config_hash;                  // hash of the resolved configuration
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<std::string> artifact_paths;
};

nlohmann::json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Appends one canonical JSON line (ledger created if absent) and returns the
/// zero-based line position. Prior lines are never touched; a run_id already
/// present in the ledger is rejected.
std::size_t record_run(const std::string& ledger_path, const RunRecord& record);

/// All records in append order. A missing file reads as an empty ledger.
std::vector<RunRecord> read_ledger(const std::string& ledger_path);

}  // namespace ibnet
