#include "vseg/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "vseg/error.hpp"

namespace vseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.dims != b.dims || a.values.size() != b.values.size()) {
    throw GeometryError(std::string(what) + ": masks have different dims");
  }
}

// Squared distance transform of one line (Felzenszwalb & Huttenlocher lower
// envelope), `weight` = spacing^2. Infinite entries are not sources.
void envelope_1d(const double* f, double* d, std::size_t n, std::size_t stride, double weight,
                 std::vector<std::size_t>& v, std::vector<double>& z, std::vector<double>& line) {
  line.resize(n);
  for (std::size_t i = 0; i < n; ++i) line[i] = f[i * stride];
  v.resize(n);
  z.resize(n + 1);
  long k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (line[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const double fq = line[q] + weight * static_cast<double>(q) * static_cast<double>(q);
    double s;
    while (true) {
      const auto p = v[static_cast<std::size_t>(k)];
      const double fp = line[p] + weight * static_cast<double>(p) * static_cast<double>(p);
      s = (fq - fp) / (2.0 * weight * (static_cast<double>(q) - static_cast<double>(p)));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    for (std::size_t i = 0; i < n; ++i) d[i * stride] = kInf;
    return;
  }
  std::size_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double diff = static_cast<double>(q) - static_cast<double>(v[j]);
    d[q * stride] = weight * diff * diff + line[v[j]];
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

BinaryMask BinaryMask::from_volume(const Volume& volume) {
  BinaryMask m;
  m.dims = volume.dims;
  m.values.resize(volume.data.size());
  for (std::size_t i = 0; i < volume.data.size(); ++i) m.values[i] = volume.data[i] != 0.0f;
  return m;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "dsc");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool x = a.values[i] != 0, y = b.values[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> surface_voxels(const BinaryMask& mask) {
  const auto [nx, ny, nz] = mask.dims;
  std::vector<std::size_t> out;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t i = x + nx * (y + ny * z);
        if (!mask.values[i]) continue;
        const bool border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
        if (border || !mask.values[i - 1] || !mask.values[i + 1] || !mask.values[i - nx] || !mask.values[i + nx] ||
            !mask.values[i - nx * ny] || !mask.values[i + nx * ny]) {
          out.push_back(i);
        }
      }
  return out;
}

std::vector<double> distance_transform_mm(const Index3& dims, const Vec3& spacing,
                                          const std::vector<std::size_t>& sources) {
  const auto [nx, ny, nz] = dims;
  std::vector<double> f(nx * ny * nz, kInf);
  for (auto s : sources) f.at(s) = 0.0;
  std::vector<double> d(f.size());
  std::vector<std::size_t> v;
  std::vector<double> z, line;
  for (std::size_t zz = 0; zz < nz; ++zz)
    for (std::size_t y = 0; y < ny; ++y) {
      const std::size_t base = nx * (y + ny * zz);
      envelope_1d(f.data() + base, d.data() + base, nx, 1, spacing[0] * spacing[0], v, z, line);
    }
  for (std::size_t zz = 0; zz < nz; ++zz)
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t base = x + nx * ny * zz;
      envelope_1d(d.data() + base, f.data() + base, ny, nx, spacing[1] * spacing[1], v, z, line);
    }
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t base = x + nx * y;
      envelope_1d(f.data() + base, d.data() + base, nz, nx * ny, spacing[2] * spacing[2], v, z, line);
    }
  for (auto& value : d) value = std::sqrt(value);
  return d;
}

namespace {

struct SurfaceDistances {
  std::vector<double> a_to_b;  // per surface voxel of A
  std::vector<double> b_to_a;
};

SurfaceDistances surface_distances(const BinaryMask& a, const BinaryMask& b, const Vec3& spacing, const char* what) {
  require_same_dims(a, b, what);
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  if (sa.empty() || sb.empty()) throw MetricError(std::string(what) + " is undefined for an empty mask");
  const auto da = distance_transform_mm(a.dims, spacing, sa);
  const auto db = distance_transform_mm(b.dims, spacing, sb);
  SurfaceDistances out;
  for (auto i : sa) out.a_to_b.push_back(db[i]);
  for (auto i : sb) out.b_to_a.push_back(da[i]);
  return out;
}

}  // namespace

double hausdorff_mm(const BinaryMask& a, const BinaryMask& b, const Vec3& spacing) {
  const auto d = surface_distances(a, b, spacing, "hausdorff distance");
  return std::max(*std::max_element(d.a_to_b.begin(), d.a_to_b.end()),
                  *std::max_element(d.b_to_a.begin(), d.b_to_a.end()));
}

double assd_mm(const BinaryMask& a, const BinaryMask& b, const Vec3& spacing) {
  const auto d = surface_distances(a, b, spacing, "average symmetric surface distance");
  double total = 0.0;
  for (double v : d.a_to_b) total += v;
  for (double v : d.b_to_a) total += v;
  return total / static_cast<double>(d.a_to_b.size() + d.b_to_a.size());
}

double volume_ml(const BinaryMask& mask, const Vec3& spacing) {
  return static_cast<double>(mask.count()) * spacing[0] * spacing[1] * spacing[2] / 1000.0;
}

double dsc(const Volume& a, const Volume& b) {
  validate_aligned(a, b);
  return dsc(BinaryMask::from_volume(a), BinaryMask::from_volume(b));
}

double hausdorff_mm(const Volume& a, const Volume& b) {
  validate_aligned(a, b);
  return hausdorff_mm(BinaryMask::from_volume(a), BinaryMask::from_volume(b), a.spacing);
}

double assd_mm(const Volume& a, const Volume& b) {
  validate_aligned(a, b);
  return assd_mm(BinaryMask::from_volume(a), BinaryMask::from_volume(b), a.spacing);
}

double volume_ml(const Volume& mask) { return volume_ml(BinaryMask::from_volume(mask), mask.spacing); }

SegmentAnalysis segment_sens_spec(const BinaryMask& pred, const BinaryMask& reference, const BinaryMask& prostate) {
  require_same_dims(pred, prostate, "segment analysis");
  require_same_dims(reference, prostate, "segment analysis");
  if (prostate.empty()) throw MetricError("segment analysis needs a nonempty prostate mask");
  const auto [nx, ny, nz] = prostate.dims;
  SegmentAnalysis result;
  for (std::size_t z = 0; z < nz; ++z) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        if (prostate.values[x + nx * (y + ny * z)]) {
          sx += static_cast<double>(x);
          sy += static_cast<double>(y);
          ++n;
        }
    if (n == 0) continue;
    const double cx = sx / static_cast<double>(n), cy = sy / static_cast<double>(n);
    bool pred_pos[4] = {false, false, false, false};
    bool ref_pos[4] = {false, false, false, false};
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t i = x + nx * (y + ny * z);
        if (!prostate.values[i]) continue;
        const int q = (static_cast<double>(y) >= cy ? 2 : 0) + (static_cast<double>(x) >= cx ? 1 : 0);
        pred_pos[q] = pred_pos[q] || pred.values[i];
        ref_pos[q] = ref_pos[q] || reference.values[i];
      }
    for (int q = 0; q < 4; ++q) {
      if (ref_pos[q]) {
        (pred_pos[q] ? result.true_positive : result.false_negative) += 1;
      } else {
        (pred_pos[q] ? result.false_positive : result.true_negative) += 1;
      }
    }
    result.segment_count += 4;
  }
  result.sensitivity = ratio(result.true_positive, result.true_positive + result.false_negative);
  result.specificity = ratio(result.true_negative, result.true_negative + result.false_positive);
  return result;
}

EvaluationRecord evaluate_case(std::string case_id, const Volume& pred, const Volume& reference,
                               const Volume& prostate, const Volume* histology, std::optional<double> time_sec) {
  validate_aligned(pred, reference);
  validate_aligned(pred, prostate);
  const auto p = BinaryMask::from_volume(pred);
  const auto r = BinaryMask::from_volume(reference);
  EvaluationRecord rec;
  rec.case_id = std::move(case_id);
  rec.dsc = dsc(p, r);
  if (!p.empty() && !r.empty()) {
    rec.hd_mm = hausdorff_mm(p, r, pred.spacing);
    rec.assd_mm = assd_mm(p, r, pred.spacing);
  }
  rec.volume_pred_ml = volume_ml(p, pred.spacing);
  rec.volume_ref_ml = volume_ml(r, pred.spacing);
  rec.time_sec = time_sec;
  if (histology) {
    validate_aligned(pred, *histology);
    const auto seg = segment_sens_spec(p, BinaryMask::from_volume(*histology), BinaryMask::from_volume(prostate));
    rec.sensitivity = seg.sensitivity;
    rec.specificity = seg.specificity;
    rec.segment_count = seg.segment_count;
  }
  return rec;
}

std::optional<MetricSummary> summarize(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  MetricSummary s;
  s.count = n;
  s.min = values.front();
  s.max = values.back();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

CohortReport cohort_report(const std::vector<EvaluationRecord>& records, std::string method) {
  CohortReport report;
  report.method = std::move(method);
  report.cases = records.size();
  auto collect = [&](auto&& get) {
    std::vector<double> values;
    for (const auto& r : records) {
      const std::optional<double> v = get(r);
      if (v) values.push_back(*v);
    }
    return summarize(std::move(values));
  };
  report.dsc = collect([](const EvaluationRecord& r) { return std::optional<double>(r.dsc); });
  report.hd_mm = collect([](const EvaluationRecord& r) { return r.hd_mm; });
  report.assd_mm = collect([](const EvaluationRecord& r) { return r.assd_mm; });
  report.time_sec = collect([](const EvaluationRecord& r) { return r.time_sec; });
  report.volume_pred_ml = collect([](const EvaluationRecord& r) { return std::optional<double>(r.volume_pred_ml); });
  report.sensitivity = collect([](const EvaluationRecord& r) { return r.sensitivity; });
  report.specificity = collect([](const EvaluationRecord& r) { return r.specificity; });
  return report;
}

std::string format_number(std::optional<double> value) {
  if (!value) return {};
  if (std::isnan(*value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *value);
  return std::string(buf, ptr);
}

void write_report_csv(std::ostream& out, const std::vector<EvaluationRecord>& records) {
  out << "case_id,dsc,hd_mm,assd_mm,vol_pred_ml,vol_ref_ml,sensitivity,specificity,segments,time_sec\n";
  for (const auto& r : records) {
    out << r.case_id << ',' << format_number(r.dsc) << ',' << format_number(r.hd_mm) << ','
        << format_number(r.assd_mm) << ',' << format_number(r.volume_pred_ml) << ',' << format_number(r.volume_ref_ml)
        << ',' << format_number(r.sensitivity) << ',' << format_number(r.specificity) << ',' << r.segment_count << ','
        << format_number(r.time_sec) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<CohortReport>& reports) {
  static constexpr const char* kGroups[] = {"dsc", "hd_mm", "assd_mm", "time_sec", "vol_pred_ml", "sensitivity",
                                            "specificity"};
  out << "method,cases";
  for (const char* g : kGroups) out << ',' << g << "_median," << g << "_min," << g << "_max";
  out << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << r.cases;
    for (const auto* s : {&r.dsc, &r.hd_mm, &r.assd_mm, &r.time_sec, &r.volume_pred_ml, &r.sensitivity,
                          &r.specificity}) {
      if (*s) {
        out << ',' << format_number((*s)->median) << ',' << format_number((*s)->min) << ','
            << format_number((*s)->max);
      } else {
        out << ",,,";
      }
    }
    out << '\n';
  }
}

}  // namespace vseg
