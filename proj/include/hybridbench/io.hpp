#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hybridbench {

using Json = nlohmann::ordered_json;

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

// One compact JSON document per line, each line newline-terminated.
std::string to_jsonl(const std::vector<Json>& rows);

// Blank lines are skipped. Throws Error naming the 1-based line on bad JSON.
std::vector<Json> parse_jsonl(std::string_view text,
                              std::string_view source = "<jsonl>");

}  // namespace hybridbench
