#include "vseg/case.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "vseg/error.hpp"
#include "vseg/nrrd.hpp"

namespace vseg {

void CaseRecord::validate() const {
  pet.validate();
  prostate.validate();
  if (prostate.kind != VolumeKind::mask) throw GeometryError("case " + id + ": prostate volume is not a mask");
  validate_aligned(pet, prostate);
  for (const auto* m : {gtv_label ? &*gtv_label : nullptr, histo_ref ? &*histo_ref : nullptr}) {
    if (!m) continue;
    m->validate();
    if (m->kind != VolumeKind::mask) throw GeometryError("case " + id + ": label volume is not a mask");
    validate_aligned(pet, *m);
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  const auto dir = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : dir / fp;
  };
  std::vector<ManifestEntry> entries;
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_array()) throw ConfigError("manifest " + path.string() + " must be a JSON array");
    for (const auto& e : j) {
      ManifestEntry m;
      m.id = e.at("id").get<std::string>();
      m.pet_path = resolve(e.at("pet_path").get<std::string>());
      m.prostate_path = resolve(e.at("prostate_path").get<std::string>());
      if (e.contains("gtv_path") && !e["gtv_path"].is_null()) m.gtv_path = resolve(e["gtv_path"].get<std::string>());
      if (e.contains("histo_path") && !e["histo_path"].is_null()) {
        m.histo_path = resolve(e["histo_path"].get<std::string>());
      }
      if (e.contains("time_sec") && !e["time_sec"].is_null()) m.time_sec = e["time_sec"].get<double>();
      entries.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  const auto dir = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    std::error_code ec;
    const auto r = std::filesystem::relative(p, dir.empty() ? std::filesystem::current_path() : dir, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  auto j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json o = {{"id", e.id}, {"pet_path", rel(e.pet_path)}, {"prostate_path", rel(e.prostate_path)}};
    if (e.gtv_path) o["gtv_path"] = rel(*e.gtv_path);
    if (e.histo_path) o["histo_path"] = rel(*e.histo_path);
    if (e.time_sec) o["time_sec"] = *e.time_sec;
    j.push_back(std::move(o));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

CaseRecord load_case(const ManifestEntry& entry) {
  CaseRecord c;
  c.id = entry.id;
  c.pet = read_nrrd(entry.pet_path, VolumeKind::pet);
  c.prostate = read_nrrd(entry.prostate_path, VolumeKind::mask);
  if (entry.gtv_path) c.gtv_label = read_nrrd(*entry.gtv_path, VolumeKind::mask);
  if (entry.histo_path) c.histo_ref = read_nrrd(*entry.histo_path, VolumeKind::mask);
  c.validate();
  return c;
}

}  // namespace vseg
