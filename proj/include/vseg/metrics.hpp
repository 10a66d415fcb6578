#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// Binary voxel mask in Volume index order (x fastest).
struct BinaryMask {
  Index3 dims{0, 0, 0};
  std::vector<std::uint8_t> values;

  static BinaryMask from_volume(const Volume& volume);
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dsc(const BinaryMask& a, const BinaryMask& b);

// Surface voxels: set voxels with a 6-neighbour outside the mask or on the
// volume border. Returned as flat indices in ascending order.
std::vector<std::size_t> surface_voxels(const BinaryMask& mask);

// Exact Euclidean distance (mm) from every voxel to the nearest listed
// voxel, by separable lower-envelope transforms. +inf when `sources` is empty.
std::vector<double> distance_transform_mm(const Index3& dims, const Vec3& spacing,
                                          const std::vector<std::size_t>& sources);

// Symmetric Hausdorff distance between the surfaces of two nonempty masks, mm.
double hausdorff_mm(const BinaryMask& a, const BinaryMask& b, const Vec3& spacing);
// Mean nearest-surface distance pooled over both surfaces, mm.
double assd_mm(const BinaryMask& a, const BinaryMask& b, const Vec3& spacing);

double volume_ml(const BinaryMask& mask, const Vec3& spacing);

// Volume overloads check alignment and take the spacing from `a`.
double dsc(const Volume& a, const Volume& b);
double hausdorff_mm(const Volume& a, const Volume& b);
double assd_mm(const Volume& a, const Volume& b);
double volume_ml(const Volume& mask);

struct SegmentAnalysis {
  std::optional<double> sensitivity;  // absent when no segment is reference-positive
  std::optional<double> specificity;  // absent when no segment is reference-negative
  std::size_t segment_count = 0;
  std::size_t true_positive = 0, false_positive = 0, true_negative = 0, false_negative = 0;
};

// Quadrant protocol: every axial (z) slice touching the prostate is split
// into four segments by axis-aligned cuts through the slice's prostate
// centroid (voxels on a cut go to the upper side). A segment is positive for
// a mask when at least one of its prostate voxels is set.
SegmentAnalysis segment_sens_spec(const BinaryMask& pred, const BinaryMask& reference, const BinaryMask& prostate);

struct EvaluationRecord {
  std::string case_id;
  double dsc = 0.0;
  std::optional<double> hd_mm;    // absent when either mask is empty
  std::optional<double> assd_mm;  // absent when either mask is empty
  double volume_pred_ml = 0.0;
  double volume_ref_ml = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::size_t segment_count = 0;
  std::optional<double> time_sec;
};

// Scores a predicted GTV against the reference GTV; sensitivity/specificity
// are computed when a histology reference is supplied.
EvaluationRecord evaluate_case(std::string case_id, const Volume& pred, const Volume& reference,
                               const Volume& prostate, const Volume* histology = nullptr,
                               std::optional<double> time_sec = std::nullopt);

struct MetricSummary {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

// Median of an even count is the mean of the two middle values.
std::optional<MetricSummary> summarize(std::vector<double> values);

struct CohortReport {
  std::string method;
  std::size_t cases = 0;
  std::optional<MetricSummary> dsc, hd_mm, assd_mm, time_sec;
  std::optional<MetricSummary> volume_pred_ml, sensitivity, specificity;
};

CohortReport cohort_report(const std::vector<EvaluationRecord>& records, std::string method = "cnn");

// case_id,dsc,hd_mm,assd_mm,vol_pred_ml,vol_ref_ml,sensitivity,specificity,segments,time_sec
void write_report_csv(std::ostream& out, const std::vector<EvaluationRecord>& records);
// One row per method with median/min/max column triples in the order DSC,
// HD, ASSD, computation time, followed by volume, sensitivity, specificity.
void write_summary_csv(std::ostream& out, const std::vector<CohortReport>& reports);

// Shortest round-trip decimal form; empty for nullopt.
std::string format_number(std::optional<double> value);

}  // namespace vseg
