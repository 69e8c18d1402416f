#include "ibnet/tracking.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ibnet/errors.hpp"

using namespace ibnet;

namespace {

RunRecord sample_record(const std::string& id) {
    RunRecord r;
    r.run_id = id;
    r.timestamp = "2024-05-01T12:00:00Z";
    r.params = {{"encoder", "fc"}, {"lambda", 0.01}, {"seed", 7}};
    r.metrics = {{"mean_auc", 0.61}, {"sd_auc", 0.05}};
    r.artifact_paths = {"out/result.json"};
    r.config_hash = content_hash(r.params);
    return r;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("tracking") {

TEST_CASE("content hash ignores key insertion order") {
    nlohmann::json a;
    a["alpha"] = 1.5;
    a["beta"] = "x";
    a["gamma"] = {{"inner", 2}, {"other", 3}};
    nlohmann::json b;
    b["gamma"]["other"] = 3;
    b["gamma"]["inner"] = 2;
    b["beta"] = "x";
    b["alpha"] = 1.5;
    CHECK(canonical_dump(a) == canonical_dump(b));
    CHECK(content_hash(a) == content_hash(b));

    nlohmann::json c = a;
    c["alpha"] = 1.5000001;
    CHECK(content_hash(c) != content_hash(a));
}

TEST_CASE("run record JSON round trip") {
    const RunRecord r = sample_record("run-1");
    const nlohmann::json j = run_record_to_json(r);
    const RunRecord back = run_record_from_json(j);
    CHECK(run_record_to_json(back).dump() == j.dump());
    CHECK(back.run_id == "run-1");
    CHECK(back.config_hash == r.config_hash);

    CHECK_THROWS_AS(run_record_from_json(nlohmann::json{{"run_id", "x"}}), validation_error);
    RunRecord bad = r;
    bad.run_id = "";
    CHECK_THROWS_AS(run_record_to_json(bad), validation_error);
    bad = r;
    bad.params = nlohmann::json::array();
    CHECK_THROWS_AS(run_record_to_json(bad), validation_error);
}

TEST_CASE("ledger appends and reads back identical records") {
    const std::string path = "test_ledger_basic.jsonl";
    std::remove(path.c_str());

    CHECK(read_ledger(path).empty());  // absent file reads as empty

    CHECK(record_run(path, sample_record("run-1")) == 0);
    CHECK(record_run(path, sample_record("run-2")) == 1);

    const auto records = read_ledger(path);
    REQUIRE(records.size() == 2);
    CHECK(run_record_to_json(records[0]).dump() ==
          run_record_to_json(sample_record("run-1")).dump());
    CHECK(records[1].run_id == "run-2");
    // identical params hash identically across records
    CHECK(records[0].config_hash == records[1].config_hash);
    std::remove(path.c_str());
}

TEST_CASE("ledger is append-only and rejects duplicate run ids") {
    const std::string path = "test_ledger_dup.jsonl";
    std::remove(path.c_str());

    record_run(path, sample_record("run-1"));
    const std::string before = read_file(path);

    CHECK_THROWS_AS(record_run(path, sample_record("run-1")), validation_error);
    CHECK(read_file(path) == before);  // failed append leaves the file alone

    record_run(path, sample_record("run-2"));
    const std::string after = read_file(path);
    CHECK(after.substr(0, before.size()) == before);  // old bytes untouched
    CHECK(after.size() > before.size());
    std::remove(path.c_str());
}

TEST_CASE("ledger I/O failures") {
    CHECK_THROWS_AS(record_run("/nonexistent_dir_for_test/runs.jsonl", sample_record("r")),
                    io_error);

    const std::string path = "test_ledger_bad.jsonl";
    std::remove(path.c_str());
    std::ofstream(path) << "not json\n";
    CHECK_THROWS_AS(read_ledger(path), io_error);
    std::remove(path.c_str());
}

}  // TEST_SUITE
