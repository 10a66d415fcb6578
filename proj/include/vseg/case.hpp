#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// One patient: PET plus masks on the same grid.
struct CaseRecord {
  std::string id;
  Volume pet;
  Volume prostate;
  std::optional<Volume> gtv_label;
  std::optional<Volume> histo_ref;

  // Checks geometry agreement of every present volume and mask kinds.
  void validate() const;
};

// JSON manifest entry: {id, pet_path, prostate_path, gtv_path?, histo_path?,
// time_sec?}. Relative paths are resolved against the manifest directory.
struct ManifestEntry {
  std::string id;
  std::filesystem::path pet_path;
  std::filesystem::path prostate_path;
  std::optional<std::filesystem::path> gtv_path;
  std::optional<std::filesystem::path> histo_path;
  std::optional<double> time_sec;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
// Paths are written relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Loads the volumes of an entry; masks are read as mask kind.
CaseRecord load_case(const ManifestEntry& entry);

}  // namespace vseg
