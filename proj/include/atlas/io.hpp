#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "atlas/error.hpp"
#include "json.hpp"

namespace atlas::io {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
        }
        out << contents;
        if (!out) {
            throw Error(ErrorCode::io_error, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
    }
}

inline json read_json(const std::filesystem::path& path) {
    auto text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::schema_error, path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& doc) {
    write_file_atomic(path, doc.dump(2) + "\n");
}

/// Calls `fn(obj, line_number)` for each non-blank line. Parse and schema
/// errors raised inside `fn` are rethrown with the 1-based line number.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            fn(json::parse(line), lineno);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::schema_error,
                        path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::io_error, "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// Fixed-precision decimal rendering for CSV/report outputs; avoids locale
/// and shortest-repr differences between runs.
inline std::string fixed(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    std::string s = buf;
    if (s == "-0" || s.rfind("-0.", 0) == 0) {
        if (s.find_first_not_of("-0.") == std::string::npos) {
            s.erase(0, 1);
        }
    }
    return s;
}

} // namespace atlas::io
