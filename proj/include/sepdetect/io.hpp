#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace sepdetect {

// 64-bit FNV-1a of `bytes` as 16 lowercase hex digits.
std::string hash_bytes(std::string_view bytes);

// 64-bit FNV-1a of the file's bytes as 16 lowercase hex digits.
std::string hash_file(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
// Exactly the bytes write_json produces.
std::string json_file_text(const nlohmann::json& doc);
// Pretty-printed with a trailing newline. Parent directories are created.
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

// `<output>.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& output);
// Writes `manifest` (with the output path and its hash added) next to `output`.
void write_manifest(const std::filesystem::path& output, nlohmann::json manifest);

}  // namespace sepdetect
