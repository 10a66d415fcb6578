#include "vseg/nrrd.hpp"

#include <zlib.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

namespace {

// Upper bound on voxels accepted from a header; larger claims are rejected
// before any allocation.
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 31;

enum class ScalarType { u8, i16, u16, i32, f32, f64 };

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::u8: return 1;
    case ScalarType::i16:
    case ScalarType::u16: return 2;
    case ScalarType::i32:
    case ScalarType::f32: return 4;
    case ScalarType::f64: return 8;
  }
  return 0;
}

std::optional<ScalarType> parse_type(std::string_view s) {
  static const std::map<std::string_view, ScalarType> kTypes = {
      {"uchar", ScalarType::u8},           {"unsigned char", ScalarType::u8},
      {"uint8", ScalarType::u8},           {"uint8_t", ScalarType::u8},
      {"short", ScalarType::i16},          {"short int", ScalarType::i16},
      {"signed short", ScalarType::i16},   {"signed short int", ScalarType::i16},
      {"int16", ScalarType::i16},          {"int16_t", ScalarType::i16},
      {"ushort", ScalarType::u16},         {"unsigned short", ScalarType::u16},
      {"unsigned short int", ScalarType::u16}, {"uint16", ScalarType::u16},
      {"uint16_t", ScalarType::u16},       {"int", ScalarType::i32},
      {"signed int", ScalarType::i32},     {"int32", ScalarType::i32},
      {"int32_t", ScalarType::i32},        {"float", ScalarType::f32},
      {"double", ScalarType::f64}};
  auto it = kTypes.find(s);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) parts.push_back(s.substr(i, j - i));
    i = j;
  }
  return parts;
}

double parse_double(std::string_view s, int line, const char* what) {
  s = trim(s);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw NrrdError(std::string("invalid number '") + std::string(s) + "' in " + what, line);
  }
  return v;
}

std::uint64_t parse_size(std::string_view s, int line, const char* what) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw NrrdError(std::string("invalid integer '") + std::string(s) + "' in " + what, line);
  }
  return v;
}

// "(a,b,c)" -> {a, b, c}
Vec3 parse_vector(std::string_view s, int line, const char* what) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') {
    throw NrrdError(std::string("expected '(x,y,z)' in ") + what + ", got '" + std::string(s) + "'", line);
  }
  s = s.substr(1, s.size() - 2);
  Vec3 v{};
  for (int i = 0; i < 3; ++i) {
    const auto comma = s.find(',');
    if ((i < 2) != (comma != std::string_view::npos)) {
      throw NrrdError(std::string("expected three components in ") + what, line);
    }
    v[i] = parse_double(i < 2 ? s.substr(0, comma) : s, line, what);
    if (i < 2) s = s.substr(comma + 1);
  }
  return v;
}

std::vector<std::string_view> parse_vector_list(std::string_view s) {
  std::vector<std::string_view> items;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto open = s.find('(', i);
    if (open == std::string_view::npos) {
      if (!trim(s.substr(i)).empty()) items.push_back(trim(s.substr(i)));
      break;
    }
    if (!trim(s.substr(i, open - i)).empty()) items.push_back(trim(s.substr(i, open - i)));
    const auto close = s.find(')', open);
    if (close == std::string_view::npos) {
      items.push_back(s.substr(open));
      break;
    }
    items.push_back(s.substr(open, close - open + 1));
    i = close + 1;
  }
  return items;
}

std::string inflate_payload(std::string_view compressed, std::size_t expected) {
  z_stream zs{};
  // 15 + 32: zlib or gzip wrapper, detected automatically.
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw NrrdError("cannot initialize gzip decoder");
  std::string out;
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
  zs.avail_in = static_cast<uInt>(compressed.size());
  char chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk);
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw NrrdError("corrupt gzip payload");
    }
    out.append(chunk, sizeof(chunk) - zs.avail_out);
    if (out.size() > expected) {
      inflateEnd(&zs);
      throw NrrdError("gzip payload longer than header sizes imply (" + std::to_string(expected) + " bytes)");
    }
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw NrrdError("gzip payload truncated");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string deflate_payload(std::string_view raw) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("cannot initialize gzip encoder");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(raw.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

template <typename T>
T load_scalar(const unsigned char* p, bool big_endian) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const std::size_t shift = big_endian ? (sizeof(T) - 1 - i) : i;
    u |= static_cast<U>(static_cast<U>(p[i]) << (8 * shift));
  }
  return std::bit_cast<T>(u);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::optional<NrrdEncoding> parse_nrrd_encoding(std::string_view name) {
  if (name == "raw") return NrrdEncoding::raw;
  if (name == "gzip" || name == "gz") return NrrdEncoding::gzip;
  return std::nullopt;
}

Volume parse_nrrd(std::string_view bytes, std::optional<VolumeKind> kind) {
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= bytes.size()) return false;
    auto nl = bytes.find('\n', pos);
    const bool has_newline = nl != std::string_view::npos;
    if (!has_newline) nl = bytes.size();
    line = bytes.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = has_newline ? nl + 1 : nl;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line.size() != 8 || line.substr(0, 7) != "NRRD000" || line[7] < '1' || line[7] > '5') {
    throw NrrdError("missing NRRD magic (expected NRRD0001..NRRD0005)", 1);
  }

  std::map<std::string, std::pair<std::string, int>> fields;
  std::map<std::string, std::string> key_values;
  bool header_closed = false;
  while (next_line(line)) {
    if (line.empty()) {
      header_closed = true;
      break;
    }
    if (line.front() == '#') continue;
    const auto kv = line.find(":=");
    const auto colon = line.find(": ");
    if (kv != std::string_view::npos && (colon == std::string_view::npos || kv < colon)) {
      key_values[std::string(line.substr(0, kv))] = std::string(line.substr(kv + 2));
      continue;
    }
    if (colon == std::string_view::npos) throw NrrdError("malformed header line '" + std::string(line) + "'", line_no);
    std::string name(trim(line.substr(0, colon)));
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!fields.emplace(name, std::make_pair(std::string(trim(line.substr(colon + 2))), line_no)).second) {
      throw NrrdError("duplicate field '" + name + "'", line_no);
    }
  }
  if (!header_closed) throw NrrdError("header not terminated by a blank line", line_no);

  auto field = [&](const std::string& name, bool required) -> const std::pair<std::string, int>* {
    auto it = fields.find(name);
    if (it == fields.end()) {
      if (required) throw NrrdError("missing required field '" + name + "'");
      return nullptr;
    }
    return &it->second;
  };

  for (const char* detached : {"data file", "datafile"}) {
    if (const auto* f = field(detached, false)) throw NrrdError("detached data files are not supported", f->second);
  }
  const auto* dim_f = field("dimension", true);
  if (parse_size(dim_f->first, dim_f->second, "dimension") != 3) {
    throw NrrdError("only 3-D volumes are supported, dimension is " + dim_f->first, dim_f->second);
  }
  const auto* type_f = field("type", true);
  const auto type = parse_type(type_f->first);
  if (!type) throw NrrdError("unsupported type '" + type_f->first + "'", type_f->second);

  const auto* enc_f = field("encoding", true);
  const auto encoding = parse_nrrd_encoding(enc_f->first);
  if (!encoding) throw NrrdError("unsupported encoding '" + enc_f->first + "'", enc_f->second);

  bool big_endian = false;
  if (const auto* endian_f = field("endian", type_size(*type) > 1)) {
    if (endian_f->first == "big") {
      big_endian = true;
    } else if (endian_f->first != "little") {
      throw NrrdError("invalid endian '" + endian_f->first + "'", endian_f->second);
    }
  }

  Volume vol;
  const auto* sizes_f = field("sizes", true);
  const auto size_parts = split_ws(sizes_f->first);
  if (size_parts.size() != 3) throw NrrdError("sizes must list 3 extents", sizes_f->second);
  std::uint64_t voxels = 1;
  for (int a = 0; a < 3; ++a) {
    const auto n = parse_size(size_parts[a], sizes_f->second, "sizes");
    if (n == 0) throw NrrdError("sizes must be positive", sizes_f->second);
    if (n > kMaxVoxels || voxels * n > kMaxVoxels) throw NrrdError("volume too large", sizes_f->second);
    voxels *= n;
    vol.dims[a] = static_cast<std::size_t>(n);
  }

  if (const auto* dirs_f = field("space directions", false)) {
    const auto items = parse_vector_list(dirs_f->first);
    if (items.size() != 3) throw NrrdError("space directions must list 3 vectors", dirs_f->second);
    for (int a = 0; a < 3; ++a) {
      const Vec3 d = parse_vector(items[a], dirs_f->second, "space directions");
      for (int b = 0; b < 3; ++b) {
        if (b != a && d[b] != 0.0) {
          throw NrrdError("space directions are not axis-aligned (oblique or permuted axes are rejected)",
                          dirs_f->second);
        }
      }
      if (!(d[a] > 0.0)) throw NrrdError("space directions must have positive diagonal spacing", dirs_f->second);
      vol.spacing[a] = d[a];
    }
  } else if (const auto* sp_f = field("spacings", false)) {
    const auto parts = split_ws(sp_f->first);
    if (parts.size() != 3) throw NrrdError("spacings must list 3 values", sp_f->second);
    for (int a = 0; a < 3; ++a) {
      vol.spacing[a] = parse_double(parts[a], sp_f->second, "spacings");
      if (!(vol.spacing[a] > 0.0)) throw NrrdError("spacings must be positive", sp_f->second);
    }
  }
  if (const auto* origin_f = field("space origin", false)) {
    vol.origin = parse_vector(origin_f->first, origin_f->second, "space origin");
  }
  if (const auto* space_f = field("space", false)) {
    if (space_f->first != "left-posterior-superior" && space_f->first != "right-anterior-superior" &&
        space_f->first != "LPS" && space_f->first != "RAS") {
      throw NrrdError("unsupported space '" + space_f->first + "'", space_f->second);
    }
    vol.space = space_f->first;
  }

  if (kind) {
    vol.kind = *kind;
  } else {
    auto it = key_values.find("vseg_kind");
    vol.kind = it != key_values.end() && trim(it->second) == "mask" ? VolumeKind::mask : VolumeKind::pet;
  }

  const std::size_t expected = static_cast<std::size_t>(voxels) * type_size(*type);
  const std::string_view payload_view = bytes.substr(pos);
  std::string inflated;
  std::string_view payload = payload_view;
  if (*encoding == NrrdEncoding::gzip) {
    inflated = inflate_payload(payload_view, expected);
    payload = inflated;
  }
  if (payload.size() != expected) {
    throw NrrdError("data length " + std::to_string(payload.size()) + " bytes does not match header (" +
                    std::to_string(expected) + " bytes expected)");
  }

  vol.data.resize(static_cast<std::size_t>(voxels));
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const unsigned char* e = p + i * type_size(*type);
    switch (*type) {
      case ScalarType::u8: vol.data[i] = static_cast<float>(e[0]); break;
      case ScalarType::i16: vol.data[i] = static_cast<float>(load_scalar<std::int16_t>(e, big_endian)); break;
      case ScalarType::u16: vol.data[i] = static_cast<float>(load_scalar<std::uint16_t>(e, big_endian)); break;
      case ScalarType::i32: vol.data[i] = static_cast<float>(load_scalar<std::int32_t>(e, big_endian)); break;
      case ScalarType::f32: vol.data[i] = load_scalar<float>(e, big_endian); break;
      case ScalarType::f64: vol.data[i] = static_cast<float>(load_scalar<double>(e, big_endian)); break;
    }
  }
  if (vol.kind == VolumeKind::mask) {
    bool normalized = false;
    for (auto& v : vol.data) {
      if (v != 0.0f && v != 1.0f) {
        normalized = true;
        v = 1.0f;
      }
    }
    if (normalized) std::cerr << "warning: mask contained values other than {0,1}; nonzero voxels set to 1\n";
  }
  return vol;
}

Volume read_nrrd(const std::filesystem::path& path, std::optional<VolumeKind> kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open NRRD file: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_nrrd(bytes, kind);
  } catch (const NrrdError& e) {
    throw NrrdError(path.string() + ": " + e.what());
  }
}

std::string serialize_nrrd(const Volume& volume, NrrdEncoding encoding) {
  volume.validate();
  const bool mask = volume.kind == VolumeKind::mask;
  std::ostringstream header;
  header << "NRRD0005\n"
         << "# written by vseg\n"
         << "type: " << (mask ? "uchar" : "float") << '\n'
         << "dimension: 3\n"
         << "space: " << volume.space << '\n'
         << "sizes: " << volume.dims[0] << ' ' << volume.dims[1] << ' ' << volume.dims[2] << '\n'
         << "space directions: (" << format_double(volume.spacing[0]) << ",0,0) (0," << format_double(volume.spacing[1])
         << ",0) (0,0," << format_double(volume.spacing[2]) << ")\n"
         << "kinds: domain domain domain\n";
  if (!mask) header << "endian: little\n";
  header << "encoding: " << (encoding == NrrdEncoding::gzip ? "gzip" : "raw") << '\n'
         << "space origin: (" << format_double(volume.origin[0]) << ',' << format_double(volume.origin[1]) << ','
         << format_double(volume.origin[2]) << ")\n"
         << "vseg_kind:=" << (mask ? "mask" : "pet") << "\n\n";

  std::string payload;
  if (mask) {
    payload.resize(volume.data.size());
    for (std::size_t i = 0; i < volume.data.size(); ++i) payload[i] = static_cast<char>(volume.data[i] != 0.0f);
  } else {
    payload.resize(volume.data.size() * 4);
    for (std::size_t i = 0; i < volume.data.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(volume.data[i]);
      for (int b = 0; b < 4; ++b) payload[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  std::string out = header.str();
  out += encoding == NrrdEncoding::gzip ? deflate_payload(payload) : payload;
  return out;
}

void write_nrrd(const Volume& volume, const std::filesystem::path& path, NrrdEncoding encoding) {
  const std::string bytes = serialize_nrrd(volume, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing: " + path.string());
}

}  // namespace vseg
