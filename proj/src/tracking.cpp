#include "ibnet/tracking.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

std::string canonical_dump(const nlohmann::json& j) {
    // nlohmann objects store keys sorted and dump emits shortest round-trip
    // numbers, so dump() is already canonical.
    return j.dump();
}

std::string content_hash(const nlohmann::json& j) {
    const std::string s = canonical_dump(j);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return std::string(buf);
}

nlohmann::json run_record_to_json(const RunRecord& record) {
    if (record.run_id.empty()) throw validation_error("run record needs a run_id");
    if (!record.params.is_object() || !record.metrics.is_object())
        throw validation_error("run record params and metrics must be JSON objects");
    nlohmann::json j;
    j["run_id"] = record.run_id;
    j["timestamp"] = record.timestamp;
    j["config_hash"] = record.config_hash;
    j["params"] = record.params;
    j["metrics"] = record.metrics;
    j["artifact_paths"] = record.artifact_paths;
    return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord record;
    try {
        record.run_id = j.at("run_id").get<std::string>();
        record.timestamp = j.at("timestamp").get<std::string>();
        record.config_hash = j.at("config_hash").get<std::string>();
        record.params = j.at("params");
        record.metrics = j.at("metrics");
        record.artifact_paths = j.at("artifact_paths").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("run record JSON: ") + e.what());
    }
    if (record.run_id.empty()) throw validation_error("run record needs a run_id");
    if (!record.params.is_object() || !record.metrics.is_object())
        throw validation_error("run record params and metrics must be JSON objects");
    return record;
}

std::vector<RunRecord> read_ledger(const std::string& ledger_path) {
    std::vector<RunRecord> records;
    std::ifstream in(ledger_path);
    if (!in.is_open()) return records;  // absent ledger = empty ledger
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw io_error("ledger line " + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(run_record_from_json(j));
    }
    return records;
}

std::size_t record_run(const std::string& ledger_path, const RunRecord& record) {
    const nlohmann::json j = run_record_to_json(record);
    const std::vector<RunRecord> existing = read_ledger(ledger_path);
    std::set<std::string> ids;
    for (const auto& r : existing)
        if (!ids.insert(r.run_id).second)
            throw validation_error("ledger already contains duplicate run_id '" + r.run_id + "'");
    if (ids.count(record.run_id) > 0)
        throw validation_error("run_id '" + record.run_id + "' already recorded");

    std::ofstream out(ledger_path, std::ios::app);
    if (!out.is_open()) throw io_error("cannot open ledger '" + ledger_path + "' for append");
    out << canonical_dump(j) << '\n';
    out.flush();
    if (!out.good()) throw io_error("write to ledger '" + ledger_path + "' failed");
    return existing.size();
}

}  // namespace ibnet
