#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace valimetrics {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Remembers, per stage, the content hashes of the inputs and outputs of the
// last successful run under <out_dir>/.valimetrics/<stage>.json. Input hashes
// are reused while a file's size and mtime are unchanged.
class StageCache {
public:
  explicit StageCache(std::filesystem::path out_dir);

  bool up_to_date(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
                  const std::string& params, const std::vector<std::filesystem::path>& outputs,
                  nlohmann::json* extra = nullptr);

  void record(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
              const std::string& params, const std::vector<std::filesystem::path>& outputs,
              const nlohmann::json& extra = {});

private:
  std::filesystem::path stamp_path(const std::string& stage) const;
  std::string input_hash(const std::filesystem::path& path, const nlohmann::json& previous) const;

  std::filesystem::path dir_;
};

}  // namespace valimetrics
