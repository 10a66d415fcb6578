#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "vseg/volume.hpp"

namespace vseg {

enum class NrrdEncoding { raw, gzip };

// Reads the NRRD subset used by the pipeline: a single attached data block,
// dimension 3, types uchar/short/ushort/int/float/double, raw or gzip
// encoding, diagonal "space directions" (or "spacings"). Values are converted
// to float32. The kind comes from `kind` when given, otherwise from the
// "vseg_kind" key/value pair (default pet). Masks are binarized: any nonzero
// value becomes 1 and a warning is printed once.
// Malformed input throws NrrdError carrying the offending header line.
Volume read_nrrd(const std::filesystem::path& path, std::optional<VolumeKind> kind = std::nullopt);
Volume parse_nrrd(std::string_view bytes, std::optional<VolumeKind> kind = std::nullopt);

// NRRD0005 header + payload. PET volumes are stored as little-endian float,
// masks as uchar.
void write_nrrd(const Volume& volume, const std::filesystem::path& path,
                NrrdEncoding encoding = NrrdEncoding::raw);
std::string serialize_nrrd(const Volume& volume, NrrdEncoding encoding = NrrdEncoding::raw);

std::optional<NrrdEncoding> parse_nrrd_encoding(std::string_view name);

}  // namespace vseg
