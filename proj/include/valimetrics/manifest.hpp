#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "valimetrics/image.hpp"

namespace valimetrics {

inline constexpr const char* kToolVersion = "0.3.0";

struct ImageRecord {
  std::string id;  // filename stem
  std::filesystem::path path;
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;

  static ImageRecord from_file(const std::filesystem::path& path);
};

// How the modified image was produced.
struct Modification {
  enum class Kind { Jpeg, Vqgan, Vkitti1, Vkitti2, Other };

  Kind kind = Kind::Other;
  int quality = 0;     // Jpeg only
  std::string detail;  // Vqgan config or Other label

  static Modification jpeg(int quality);
  static Modification parse(const std::string& tag);
  std::string tag() const;  // "jpeg:15", "vqgan:f8", "vkitti1", "other:foo"

  friend bool operator==(const Modification&, const Modification&) = default;
};

struct ImagePair {
  ImageRecord ref;
  ImageRecord mod;
  Modification modification;
  std::string sequence_id;
  std::optional<double> nominal_factor;  // carried through for ingested codecs (VQGAN)

  // Stable key used in every downstream table: "<sequence>/<id>" or "<id>".
  std::string pair_id() const;
};

struct Manifest {
  std::vector<ImagePair> pairs;
  std::string created_at;
  std::string tool_version = kToolVersion;

  // Sorts by (sequence, id, modification) and rejects duplicate keys.
  void normalize();
};

enum class MismatchKind { Dimensions, Channels, BitDepth, Id };

struct ValidationReport {
  std::vector<MismatchKind> mismatches;
  std::vector<std::string> messages;
  bool usable() const { return mismatches.empty(); }
};

ValidationReport validate_pair(const ImagePair& pair);

struct PairingReport {
  std::vector<std::string> unmatched_ref;  // relative paths without extension
  std::vector<std::string> unmatched_mod;
  std::vector<std::string> decode_errors;  // "path: message"
  std::vector<std::string> duplicates;     // same stem, several extensions
  std::vector<std::pair<std::string, ValidationReport>> excluded;
};

struct PairingResult {
  Manifest manifest;
  PairingReport report;
};

struct PairingOptions {
  std::optional<double> nominal_factor;
  int jobs = 1;
};

// Pairs images by filename stem. Files directly inside a directory have an
// empty sequence; files one level down use the subdirectory name as sequence.
// Throws Errc::EmptyIntersection when nothing pairs.
PairingResult pair_by_stem(const std::filesystem::path& ref_dir,
                           const std::filesystem::path& mod_dir,
                           const Modification& modification,
                           const PairingOptions& options = {});

// Concatenates several manifests (e.g. one per JPEG quality).
Manifest merge_manifests(std::vector<Manifest> parts);

std::string manifest_to_json(const Manifest& manifest);
// Re-probes every image header so records carry their dimensions.
Manifest manifest_from_json(const std::string& text, bool probe = true);
Manifest load_manifest(const std::filesystem::path& path, bool probe = true);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace valimetrics
