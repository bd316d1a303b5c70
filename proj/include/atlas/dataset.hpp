#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "atlas/io.hpp"
#include "atlas/reward.hpp"

namespace atlas {

/// One evaluation or training item: `{"id","query","gold","domain","matcher"}`.
struct QueryRecord {
    std::string id;
    std::string query;
    std::string gold;
    std::string domain;
    std::string matcher = "exact";
};

inline json to_json(const QueryRecord& r) {
    return {{"id", r.id}, {"query", r.query}, {"gold", r.gold}, {"domain", r.domain}, {"matcher", r.matcher}};
}

inline QueryRecord query_from_json(const json& j) {
    QueryRecord r;
    r.id = j.at("id").get<std::string>();
    r.query = j.at("query").get<std::string>();
    r.gold = j.value("gold", "");
    r.domain = j.value("domain", "");
    r.matcher = j.value("matcher", "exact");
    matcher_from_string(r.matcher);
    return r;
}

using EvalDataset = std::vector<QueryRecord>;

/// Loads a JSONL dataset; duplicate ids and unknown matchers are schema errors with line numbers.
inline EvalDataset load_dataset(const std::filesystem::path& path) {
    EvalDataset out;
    std::unordered_set<std::string> seen;
    io::for_each_jsonl(path, [&](const json& row, std::size_t) {
        auto r = query_from_json(row);
        if (!seen.insert(r.id).second) {
            throw Error(ErrorCode::schema_error, "duplicate id '" + r.id + "'");
        }
        out.push_back(std::move(r));
    });
    return out;
}

inline void save_dataset(const std::filesystem::path& path, const EvalDataset& data) {
    std::vector<json> rows;
    rows.reserve(data.size());
    for (const auto& r : data) {
        rows.push_back(to_json(r));
    }
    io::write_file_atomic(path, io::to_jsonl(rows));
}

} // namespace atlas
