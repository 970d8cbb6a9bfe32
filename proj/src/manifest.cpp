#include "valimetrics/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "valimetrics/error.hpp"
#include "valimetrics/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace valimetrics {

ImageRecord ImageRecord::from_file(const fs::path& path) {
  const ImageHeader h = probe_image(path);
  ImageRecord r;
  r.id = path.stem().string();
  r.path = path;
  r.width = h.width;
  r.height = h.height;
  r.channels = h.channels;
  r.bit_depth = h.bit_depth;
  return r;
}

Modification Modification::jpeg(int quality) {
  Modification m;
  m.kind = Kind::Jpeg;
  m.quality = quality;
  return m;
}

Modification Modification::parse(const std::string& tag) {
  const auto colon = tag.find(':');
  const std::string head = tag.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : tag.substr(colon + 1);
  Modification m;
  if (head == "jpeg") {
    m.kind = Kind::Jpeg;
    try {
      std::size_t used = 0;
      m.quality = std::stoi(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(rest);
    } catch (const std::exception&) {
      throw Error(Errc::ParseError, "bad jpeg modification tag '" + tag + "'");
    }
  } else if (head == "vqgan") {
    m.kind = Kind::Vqgan;
    m.detail = rest;
  } else if (head == "vkitti1" && rest.empty()) {
    m.kind = Kind::Vkitti1;
  } else if (head == "vkitti2" && rest.empty()) {
    m.kind = Kind::Vkitti2;
  } else if (head == "other") {
    m.kind = Kind::Other;
    m.detail = rest;
  } else {
    m.kind = Kind::Other;
    m.detail = tag;
  }
  return m;
}

std::string Modification::tag() const {
  switch (kind) {
    case Kind::Jpeg: return "jpeg:" + std::to_string(quality);
    case Kind::Vqgan: return "vqgan:" + detail;
    case Kind::Vkitti1: return "vkitti1";
    case Kind::Vkitti2: return "vkitti2";
    case Kind::Other: return "other:" + detail;
  }
  return "other:";
}

std::string ImagePair::pair_id() const {
  return sequence_id.empty() ? ref.id : sequence_id + "/" + ref.id;
}

void Manifest::normalize() {
  std::stable_sort(pairs.begin(), pairs.end(), [](const ImagePair& a, const ImagePair& b) {
    return std::tie(a.sequence_id, a.ref.id) < std::tie(b.sequence_id, b.ref.id) ||
           (std::tie(a.sequence_id, a.ref.id) == std::tie(b.sequence_id, b.ref.id) &&
            a.modification.tag() < b.modification.tag());
  });
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].pair_id() == pairs[i - 1].pair_id() &&
        pairs[i].modification == pairs[i - 1].modification) {
      throw Error(Errc::ParseError, "duplicate pair id '" + pairs[i].pair_id() + "' for " +
                                        pairs[i].modification.tag());
    }
  }
}

ValidationReport validate_pair(const ImagePair& pair) {
  ValidationReport report;
  const auto& r = pair.ref;
  const auto& m = pair.mod;
  if (r.width != m.width || r.height != m.height) {
    report.mismatches.push_back(MismatchKind::Dimensions);
    report.messages.push_back(
        fmt::format("dimensions {}x{} vs {}x{}", r.width, r.height, m.width, m.height));
  }
  if (r.channels != m.channels) {
    report.mismatches.push_back(MismatchKind::Channels);
    report.messages.push_back(fmt::format("channels {} vs {}", r.channels, m.channels));
  }
  if (r.bit_depth != 8 || m.bit_depth != 8) {
    report.mismatches.push_back(MismatchKind::BitDepth);
    report.messages.push_back(fmt::format("bit depth {} vs {}", r.bit_depth, m.bit_depth));
  }
  if (r.id != m.id) {
    report.mismatches.push_back(MismatchKind::Id);
    report.messages.push_back("id '" + r.id + "' vs '" + m.id + "'");
  }
  return report;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// key: (sequence, stem) -> file
using ScanMap = std::map<std::pair<std::string, std::string>, fs::path>;

ScanMap scan_directory(const fs::path& dir, std::vector<std::string>& duplicates) {
  if (!fs::is_directory(dir)) throw Error(Errc::IoError, "not a directory: " + dir.string());
  std::vector<std::pair<std::string, fs::path>> files;  // (sequence, path)
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      files.emplace_back("", entry.path());
    } else if (entry.is_directory()) {
      for (const auto& sub : fs::directory_iterator(entry.path())) {
        if (sub.is_regular_file() && is_image_file(sub.path())) {
          files.emplace_back(entry.path().filename().string(), sub.path());
        }
      }
    }
  }
  std::sort(files.begin(), files.end());
  ScanMap out;
  for (auto& [seq, path] : files) {
    auto key = std::make_pair(seq, path.stem().string());
    if (!out.emplace(key, path).second) duplicates.push_back(path.string());
  }
  return out;
}

std::string key_label(const std::pair<std::string, std::string>& key) {
  return key.first.empty() ? key.second : key.first + "/" + key.second;
}

std::string iso_utc(fs::file_time_type t) {
  const auto sys = std::chrono::file_clock::to_sys(t);
  const std::time_t tt = std::chrono::system_clock::to_time_t(
      std::chrono::time_point_cast<std::chrono::system_clock::duration>(sys));
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

PairingResult pair_by_stem(const fs::path& ref_dir, const fs::path& mod_dir,
                           const Modification& modification, const PairingOptions& options) {
  PairingResult result;
  auto& report = result.report;
  const ScanMap refs = scan_directory(ref_dir, report.duplicates);
  const ScanMap mods = scan_directory(mod_dir, report.duplicates);

  struct Candidate {
    std::pair<std::string, std::string> key;
    fs::path ref, mod;
    std::optional<ImagePair> pair;
    std::vector<std::string> errors;
  };
  std::vector<Candidate> candidates;
  for (const auto& [key, path] : refs) {
    auto it = mods.find(key);
    if (it == mods.end()) {
      report.unmatched_ref.push_back(key_label(key));
    } else {
      candidates.push_back({key, path, it->second, std::nullopt, {}});
    }
  }
  for (const auto& [key, path] : mods) {
    if (!refs.contains(key)) report.unmatched_mod.push_back(key_label(key));
  }

  parallel_for(candidates.size(), options.jobs, [&](std::size_t i) {
    Candidate& c = candidates[i];
    ImagePair pair;
    bool ok = true;
    for (auto [path, record] : {std::pair{&c.ref, &pair.ref}, std::pair{&c.mod, &pair.mod}}) {
      try {
        *record = ImageRecord::from_file(*path);
      } catch (const Error& e) {
        c.errors.push_back(e.what());
        ok = false;
      }
    }
    if (!ok) return;
    pair.modification = modification;
    pair.sequence_id = c.key.first;
    pair.nominal_factor = options.nominal_factor;
    c.pair = std::move(pair);
  });

  fs::file_time_type newest = fs::file_time_type::min();
  for (auto& c : candidates) {
    for (auto& e : c.errors) {
      spdlog::warn("skipping unreadable image: {}", e);
      report.decode_errors.push_back(std::move(e));
    }
    if (!c.pair) continue;
    ValidationReport v = validate_pair(*c.pair);
    if (!v.usable()) {
      spdlog::warn("excluding pair {}: {}", c.pair->pair_id(), fmt::join(v.messages, "; "));
      report.excluded.emplace_back(c.pair->pair_id(), std::move(v));
      continue;
    }
    newest = std::max({newest, fs::last_write_time(c.ref), fs::last_write_time(c.mod)});
    result.manifest.pairs.push_back(std::move(*c.pair));
  }
  if (result.manifest.pairs.empty()) {
    throw Error(Errc::EmptyIntersection,
                "no usable image pairs between " + ref_dir.string() + " and " + mod_dir.string());
  }
  result.manifest.created_at = iso_utc(newest);
  result.manifest.normalize();
  return result;
}

Manifest merge_manifests(std::vector<Manifest> parts) {
  Manifest out;
  for (auto& part : parts) {
    out.created_at = std::max(out.created_at, part.created_at);
    for (auto& p : part.pairs) out.pairs.push_back(std::move(p));
  }
  out.normalize();
  return out;
}

std::string manifest_to_json(const Manifest& manifest) {
  json pairs = json::array();
  for (const auto& p : manifest.pairs) {
    json j = {{"id", p.ref.id},
              {"ref", p.ref.path.string()},
              {"mod", p.mod.path.string()},
              {"modification", p.modification.tag()},
              {"sequence", p.sequence_id}};
    if (p.nominal_factor) j["nominal_factor"] = *p.nominal_factor;
    pairs.push_back(std::move(j));
  }
  json doc = {{"version", 1},
              {"created_at", manifest.created_at},
              {"tool_version", manifest.tool_version},
              {"pairs", std::move(pairs)}};
  return doc.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text, bool probe) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("manifest: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", 0) != 1 || !doc.contains("pairs")) {
    throw Error(Errc::ParseError, "manifest: expected {\"version\":1,\"pairs\":[...]}");
  }
  Manifest m;
  m.created_at = doc.value("created_at", "");
  m.tool_version = doc.value("tool_version", kToolVersion);
  try {
    for (const auto& j : doc.at("pairs")) {
      ImagePair p;
      const fs::path ref = j.at("ref").get<std::string>();
      const fs::path mod = j.at("mod").get<std::string>();
      if (probe) {
        p.ref = ImageRecord::from_file(ref);
        p.mod = ImageRecord::from_file(mod);
      } else {
        p.ref.path = ref;
        p.mod.path = mod;
      }
      p.ref.id = p.mod.id = j.at("id").get<std::string>();
      p.modification = Modification::parse(j.at("modification").get<std::string>());
      p.sequence_id = j.value("sequence", "");
      if (j.contains("nominal_factor")) p.nominal_factor = j["nominal_factor"].get<double>();
      m.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("manifest: ") + e.what());
  }
  m.normalize();
  return m;
}

Manifest load_manifest(const fs::path& path, bool probe) {
  const auto bytes = read_file(path);
  return manifest_from_json(std::string(bytes.begin(), bytes.end()), probe);
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  write_text_file(path, manifest_to_json(manifest));
}

}  // namespace valimetrics
