#include "stage_cache.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "valimetrics/error.hpp"
#include "valimetrics/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace valimetrics {

namespace {

class Sha256 {
public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(Errc::IoError, "cannot initialise SHA-256");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }

private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

long long mtime_ticks(const fs::path& p) {
  return static_cast<long long>(fs::last_write_time(p).time_since_epoch().count());
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

StageCache::StageCache(fs::path out_dir) : dir_(std::move(out_dir) / ".valimetrics") {}

fs::path StageCache::stamp_path(const std::string& stage) const { return dir_ / (stage + ".json"); }

std::string StageCache::input_hash(const fs::path& path, const json& previous) const {
  const auto key = path.string();
  if (previous.contains(key)) {
    const auto& p = previous[key];
    if (p.value("size", -1LL) == static_cast<long long>(fs::file_size(path)) &&
        p.value("mtime", 0LL) == mtime_ticks(path)) {
      return p.value("sha256", "");
    }
  }
  return sha256_file(path);
}

bool StageCache::up_to_date(const std::string& stage, const std::vector<fs::path>& inputs,
                            const std::string& params, const std::vector<fs::path>& outputs,
                            json* extra) {
  const fs::path stamp = stamp_path(stage);
  if (!fs::exists(stamp)) return false;
  json doc;
  try {
    const auto bytes = read_file(stamp);
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const std::exception&) {
    return false;
  }
  if (doc.value("params", "") != sha256_hex(params)) return false;
  const json& in = doc["inputs"];
  const json& out = doc["outputs"];
  if (!in.is_object() || !out.is_object() || in.size() != inputs.size() || out.size() != outputs.size()) {
    return false;
  }
  fs::file_time_type newest_input = fs::file_time_type::min();
  for (const auto& p : inputs) {
    if (!fs::exists(p) || !in.contains(p.string())) return false;
    newest_input = std::max(newest_input, fs::last_write_time(p));
    if (input_hash(p, in) != in[p.string()].value("sha256", "")) return false;
  }
  for (const auto& p : outputs) {
    if (!fs::exists(p) || !out.contains(p.string())) return false;
    if (fs::last_write_time(p) < newest_input) return false;
    if (sha256_file(p) != out[p.string()].get<std::string>()) return false;
  }
  if (extra) *extra = doc.value("extra", json::object());
  return true;
}

void StageCache::record(const std::string& stage, const std::vector<fs::path>& inputs,
                        const std::string& params, const std::vector<fs::path>& outputs,
                        const json& extra) {
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) {
    in[p.string()] = {{"size", static_cast<long long>(fs::file_size(p))},
                      {"mtime", mtime_ticks(p)},
                      {"sha256", sha256_file(p)}};
  }
  for (const auto& p : outputs) out[p.string()] = sha256_file(p);
  json doc = {{"stage", stage}, {"params", sha256_hex(params)}, {"inputs", in}, {"outputs", out},
              {"extra", extra.is_null() ? json::object() : extra}};
  write_text_file(stamp_path(stage), doc.dump(2) + "\n");
}

}  // namespace valimetrics
