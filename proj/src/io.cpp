#include "sepdetect/io.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include "sepdetect/error.hpp"

namespace sepdetect {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_update(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
}

std::string to_hex(std::uint64_t h) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace

std::string hash_bytes(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  fnv_update(h, bytes.data(), bytes.size());
  return to_hex(h);
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for hashing");
  std::uint64_t h = kFnvOffset;
  std::array<char, 1 << 14> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    fnv_update(h, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return to_hex(h);
}

std::string json_file_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json_file_text(doc);
  if (!out) throw IoError("failed writing " + path.string());
}

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

void write_manifest(const std::filesystem::path& output, nlohmann::json manifest) {
  manifest["output"] = {{"path", output.filename().string()}, {"hash", hash_file(output)}};
  write_json(manifest, manifest_path(output));
}

}  // namespace sepdetect
