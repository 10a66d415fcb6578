// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
// Usage: vseg_acceptance [--work DIR] [criterion-name ...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "support/gradcheck.hpp"
#include "support/nrrd_builder.hpp"
#include "support/oracles.hpp"
#include "vseg/case.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/cli.hpp"
#include "vseg/error.hpp"
#include "vseg/loss.hpp"
#include "vseg/metrics.hpp"
#include "vseg/nrrd.hpp"
#include "vseg/ops.hpp"
#include "vseg/parallel.hpp"
#include "vseg/resample.hpp"
#include "vseg/unet.hpp"

using namespace vseg;
using namespace vseg::testing;
namespace fs = std::filesystem;

namespace {

// Pinned settings of the phantom regression run (fast mode).
constexpr int kPhantomCount = 50;         // 40 train + 10 eval
constexpr double kEvalFraction = 0.2;
constexpr int kPhantomGrid = 48;          // voxels per axis at 2 mm
constexpr int kCrop = 32;
constexpr int kBaseChannels = 8;
constexpr int kEpochs = 15;
constexpr std::uint64_t kSeed = 20240;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  std::ofstream log;
  bool regression_ran = false;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cli(Context& ctx, std::vector<std::string> args) {
  args.insert(args.begin(), "vseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  ctx.log << "$";
  for (const auto& a : args) ctx.log << ' ' << a;
  ctx.log << '\n';
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), ctx.log, ctx.log);
  ctx.log.flush();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite(Context&) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  std::map<std::string, double> errors;
  auto projected = [&](const std::string& name, Shape out_shape, std::vector<Tensor> inputs,
                       std::function<Tensor(const std::vector<Tensor>&)> op) {
    const auto w = random_weights(shape_numel(out_shape), rng);
    errors[name] =
        check_gradients([&](const std::vector<Tensor>& in) { return weighted_sum(op(in), w); }, std::move(inputs))
            .relative_error;
  };
  projected("conv3d", {2, 2, 6, 6, 6},
            {random_tensor({2, 2, 6, 6, 6}, rng), random_tensor({2, 2, 3, 3, 3}, rng), random_tensor({2}, rng)},
            [](const auto& in) { return conv3d(in[0], in[1], in[2], 1); });
  projected("conv3d-1x1x1", {2, 2, 6, 6, 6},
            {random_tensor({2, 2, 6, 6, 6}, rng), random_tensor({2, 2, 1, 1, 1}, rng), random_tensor({2}, rng)},
            [](const auto& in) { return conv3d(in[0], in[1], in[2], 0); });
  projected("conv_transpose3d", {2, 2, 6, 6, 6},
            {random_tensor({2, 2, 3, 3, 3}, rng), random_tensor({2, 2, 2, 2, 2}, rng), random_tensor({2}, rng)},
            [](const auto& in) { return conv_transpose3d(in[0], in[1], in[2]); });
  projected("maxpool3d", {2, 2, 3, 3, 3}, {random_tensor({2, 2, 6, 6, 6}, rng)},
            [](const auto& in) { return maxpool3d(in[0]).output; });
  projected("batchnorm3d", {2, 2, 6, 6, 6},
            {random_tensor({2, 2, 6, 6, 6}, rng), random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)},
            [](const auto& in) {
              auto stats = BatchNormStats::identity(2);
              return batchnorm3d(in[0], in[1], in[2], stats);
            });
  {
    std::vector<double> data(2 * 2 * 216);
    for (auto& v : data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 1.0);
    projected("relu", {2, 2, 6, 6, 6}, {Tensor::from_data({2, 2, 6, 6, 6}, data, true)},
              [](const auto& in) { return relu(in[0]); });
  }
  projected("sigmoid", {2, 2, 6, 6, 6}, {random_tensor({2, 2, 6, 6, 6}, rng, -4, 4)},
            [](const auto& in) { return sigmoid(in[0]); });
  projected("concat", {2, 2, 6, 6, 6}, {random_tensor({2, 1, 6, 6, 6}, rng), random_tensor({2, 1, 6, 6, 6}, rng)},
            [](const auto& in) { return concat_channels(in[0], in[1]); });
  {
    Tensor p = random_tensor({2, 1, 6, 6, 6}, rng, 0.05, 0.95);
    std::vector<std::uint8_t> y(p.numel());
    for (auto& v : y) v = rng.uniform() < 0.4;
    const LabelTensor labels(p.shape(), y);
    errors["dice_loss"] =
        check_gradients([&](const auto& in) { return dice_loss(in[0], labels); }, {p}).relative_error;
  }
  bool layers_ok = true;
  double worst = 0.0;
  for (const auto& [name, e] : errors) {
    layers_ok = layers_ok && e < 1e-4;
    worst = std::max(worst, e);
  }

  // End to end: dice loss of the fast-mode network on a 2 x 16^3 batch.
  auto net = UNet3d::build({.base_channels = kBaseChannels}, 11);
  const Tensor x = random_tensor({2, 2, 16, 16, 16}, rng, -1, 1, false);
  std::vector<std::uint8_t> y(2 * 4096);
  for (auto& v : y) v = rng.uniform() < 0.3;
  const LabelTensor labels({2, 1, 16, 16, 16}, y);
  std::vector<Tensor> params;
  for (auto& p : net.parameters()) params.push_back(p.tensor);
  const auto e2e = check_gradients(
      [&](const std::vector<Tensor>&) { return dice_loss(net.forward(x, true), labels); }, params, 1e-6, 4);
  const double t = seconds_since(start);
  const bool ok = layers_ok && e2e.relative_error < 1e-3 && t < 120.0;
  return {ok, std::to_string(errors.size()) + " layers, worst rel err " + fmt("%.2e", worst) +
                  " (<1e-4); U-Net 2x16^3 rel err " + fmt("%.2e", e2e.relative_error) + " over " +
                  std::to_string(e2e.entries_checked) + " parameter entries (<1e-3); " + fmt("%.1f s", t) +
                  " (<120 s)"};
}

Outcome architecture_census(Context&) {
  const auto c = UNet3d::build({}, 1).census();
  const bool ok = c.conv_blocks == 18 && c.conv3x3x3 == 17 && c.conv1x1x1 == 1 && c.maxpools == 3 &&
                  c.transposed_convs == 3 && c.concatenations == 3;
  return {ok, std::to_string(c.conv_blocks) + " conv blocks (" + std::to_string(c.conv3x3x3) + " 3x3x3, " +
                  std::to_string(c.conv1x1x1) + " 1x1x1), " + std::to_string(c.maxpools) + " max-pools, " +
                  std::to_string(c.transposed_convs) + " transposed convs, " + std::to_string(c.concatenations) +
                  " concatenations"};
}

Outcome metric_oracles(Context&) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(3);
  int pairs = 0, dsc_mismatch = 0;
  double worst_hd = 0.0, worst_assd = 0.0;
  while (pairs < 200) {
    const Index3 d{1 + rng.below(16), 1 + rng.below(16), 1 + rng.below(16)};
    const Vec3 s{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
    const auto a = random_mask(d, rng.uniform(0.02, 0.7), rng);
    const auto b = random_mask(d, rng.uniform(0.02, 0.7), rng);
    if (dsc(a, b) != set_dsc(a, b)) ++dsc_mismatch;
    if (a.empty() || b.empty()) continue;
    worst_hd = std::max(worst_hd, std::abs(hausdorff_mm(a, b, s) - brute_hausdorff(a, b, s)));
    worst_assd = std::max(worst_assd, std::abs(assd_mm(a, b, s) - brute_assd(a, b, s)));
    ++pairs;
  }
  const double t = seconds_since(start);
  const bool ok = worst_hd <= 1e-9 && worst_assd <= 1e-9 && dsc_mismatch == 0 && t < 60.0;
  return {ok, std::to_string(pairs) + " pairs: max |HD - oracle| " + fmt("%.1e", worst_hd) + " mm, max |ASSD - oracle| " +
                  fmt("%.1e", worst_assd) + " mm (<=1e-9), DSC mismatches " + std::to_string(dsc_mismatch) + "; " +
                  fmt("%.1f s", t) + " (<60 s)"};
}

Volume filled(Index3 dims, Vec3 spacing, const std::function<double(double, double, double)>& f) {
  Volume v = Volume::zeros(dims, spacing, {0, 0, 0}, VolumeKind::pet);
  for (std::size_t z = 0; z < dims[2]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[0]; ++x)
        v.at(x, y, z) = static_cast<float>(f(x * spacing[0], y * spacing[1], z * spacing[2]));
  return v;
}

Outcome resampling_properties(Context&) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(4);
  std::vector<std::string> failures;

  // Constant reproduction for every method.
  const Volume constant = filled({21, 17, 13}, {1.3, 0.9, 2.7}, [](double, double, double) { return 3.75; });
  for (auto m : {Interpolation::nearest, Interpolation::trilinear, Interpolation::bspline3, Interpolation::gaussian}) {
    const Volume r = resample(constant, {{2, 2, 2}, m});
    const double tol = m == Interpolation::gaussian ? 1e-3 : 1e-6;
    double worst = 0.0;
    for (float v : r.data) worst = std::max(worst, std::abs(v - 3.75));
    if (worst > tol) failures.push_back(std::string("constant/") + interpolation_name(m));
  }

  // Affine reproduction away from the border (12 voxels margin).
  const auto affine = [](double x, double y, double z) { return 0.5 + 0.25 * x - 0.125 * y + 0.0625 * z; };
  const Volume ramp = filled({40, 40, 40}, {1, 1, 1}, affine);
  double worst_affine = 0.0;
  for (auto m : {Interpolation::trilinear, Interpolation::bspline3}) {
    for (int i = 0; i < 500; ++i) {
      const Vec3 p{rng.uniform(12, 27), rng.uniform(12, 27), rng.uniform(12, 27)};
      worst_affine = std::max(worst_affine, std::abs(interpolate_at(ramp, p, m) - affine(p[0], p[1], p[2])));
    }
  }
  if (worst_affine > 1e-5) failures.push_back("affine");

  // Nearest keeps masks binary.
  Volume mask = Volume::zeros({19, 23, 11}, {0.8, 0.8, 3.0}, {0, 0, 0}, VolumeKind::mask);
  for (auto& v : mask.data) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
  const Volume rm = resample(mask, {{2, 2, 2}, Interpolation::nearest});
  for (float v : rm.data)
    if (v != 0.0f && v != 1.0f) {
      failures.push_back("mask-closure");
      break;
    }

  // Spacing scaling law.
  double worst_scale = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Index3 d{4 + rng.below(10), 4 + rng.below(10), 4 + rng.below(10)};
    const auto a = random_mask(d, 0.3, rng), b = random_mask(d, 0.3, rng);
    if (a.empty() || b.empty()) continue;
    const Vec3 s{rng.uniform(0.5, 3), rng.uniform(0.5, 3), rng.uniform(0.5, 3)};
    const double k = rng.uniform(0.25, 4.0);
    const Vec3 ks{k * s[0], k * s[1], k * s[2]};
    worst_scale = std::max({worst_scale, std::abs(hausdorff_mm(a, b, ks) - k * hausdorff_mm(a, b, s)),
                            std::abs(assd_mm(a, b, ks) - k * assd_mm(a, b, s)),
                            std::abs(volume_ml(a, ks) - k * k * k * volume_ml(a, s))});
  }
  if (worst_scale > 1e-9) failures.push_back("scaling");

  const double t = seconds_since(start);
  std::string failed;
  for (const auto& f : failures) failed += " " + f;
  return {failures.empty() && t < 60.0,
          "constant (4 methods), affine max err " + fmt("%.1e", worst_affine) + " (<=1e-5), mask closure, scaling max err " +
              fmt("%.1e", worst_scale) + " (<=1e-9); " + fmt("%.1f s", t) + " (<60 s)" +
              (failed.empty() ? "" : "; failed:" + failed)};
}

std::vector<std::string> train_args(const Context& ctx, const fs::path& out) {
  return {"--seed", std::to_string(kSeed), "--threads", "1", "train", "--manifest",
          (ctx.work / "phantoms/manifest.json").string(), "--epochs", std::to_string(kEpochs), "--crop",
          std::to_string(kCrop), "--base-channels", std::to_string(kBaseChannels), "--eval-fraction",
          fmt("%g", kEvalFraction), "--out", out.string()};
}

Outcome phantom_regression(Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  if (cli(ctx, {"--seed", std::to_string(kSeed), "--threads", "1", "phantom", "--count", std::to_string(kPhantomCount),
                "--out", (ctx.work / "phantoms").string(), "--dims",
                fmt("%.0f", kPhantomGrid) + "," + fmt("%.0f", kPhantomGrid) + "," + fmt("%.0f", kPhantomGrid)}) != 0) {
    return {false, "phantom generation failed (see log)"};
  }
  if (cli(ctx, train_args(ctx, ctx.work / "run1")) != 0) return {false, "training failed (see log)"};
  const double train_time = seconds_since(start);
  ctx.regression_ran = true;

  const auto curves = read_csv(ctx.work / "run1/curves.csv");
  if (curves.size() != kEpochs + 1) return {false, "curves.csv has unexpected row count"};
  const double train_first = std::stod(curves[1][1]), eval_first = std::stod(curves[1][2]);
  const double train_last = std::stod(curves.back()[1]), eval_last = std::stod(curves.back()[2]);
  const bool loss_down = train_last < train_first && eval_last < eval_first;
  const double gap = std::abs(eval_last - train_last);

  // Predict every phantom with the final checkpoint.
  const auto ckpt = (ctx.work / "run1/checkpoint_final.vseg").string();
  if (cli(ctx, {"--threads", "1", "predict", "--checkpoint", ckpt, "--manifest",
                (ctx.work / "run1/eval_manifest.json").string(), "--out", (ctx.work / "pred_eval").string()}) != 0 ||
      cli(ctx, {"--threads", "1", "predict", "--checkpoint", ckpt, "--manifest",
                (ctx.work / "run1/train_manifest.json").string(), "--out", (ctx.work / "pred_train").string()}) != 0) {
    return {false, "prediction failed (see log)"};
  }
  std::vector<double> eval_dsc;
  std::size_t predicted = 0, outside = 0;
  for (const auto* dir : {"pred_eval", "pred_train"}) {
    const auto refs = read_manifest(ctx.work / (std::string(dir) == "pred_eval" ? "run1/eval_manifest.json"
                                                                                 : "run1/train_manifest.json"));
    const auto preds = read_manifest(ctx.work / dir / "manifest.json");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Volume pred = read_nrrd(*preds[i].gtv_path, VolumeKind::mask);
      const Volume prostate = read_nrrd(refs[i].prostate_path, VolumeKind::mask);
      const Volume truth = read_nrrd(*refs[i].gtv_path, VolumeKind::mask);
      for (std::size_t v = 0; v < pred.data.size(); ++v) outside += pred.data[v] != 0.0f && prostate.data[v] == 0.0f;
      if (std::string(dir) == "pred_eval") eval_dsc.push_back(dsc(pred, truth));
      ++predicted;
    }
  }
  const double median_dsc = sort_median(eval_dsc);
  const double t = seconds_since(start);
  const bool ok = loss_down && gap < 0.15 && eval_dsc.size() == 10 && median_dsc >= 0.70 && outside == 0 &&
                  predicted == kPhantomCount && train_time <= 1800.0;
  return {ok, "train loss " + fmt("%.4f", train_first) + " -> " + fmt("%.4f", train_last) + ", eval loss " +
                  fmt("%.4f", eval_first) + " -> " + fmt("%.4f", eval_last) + " (gap " + fmt("%.3f", gap) +
                  " <0.15); median eval DSC " + fmt("%.3f", median_dsc) + " over " + std::to_string(eval_dsc.size()) +
                  " cases (>=0.70); voxels outside prostate " + std::to_string(outside) + " in " +
                  std::to_string(predicted) + " predictions; " + std::to_string(kEpochs) + " epochs, " +
                  fmt("%.0f s", t) + " (<=1800 s)"};
}

Outcome determinism(Context& ctx) {
  if (!ctx.regression_ran) return {false, "needs the phantom regression run"};
  const auto start = std::chrono::steady_clock::now();
  if (cli(ctx, train_args(ctx, ctx.work / "run2")) != 0) return {false, "rerun failed (see log)"};
  bool ok = true;
  std::string detail;
  for (const char* f : {"curves.csv", "checkpoint_final.vseg", "checkpoint_best.vseg"}) {
    const std::string a = slurp(ctx.work / "run1" / f), b = slurp(ctx.work / "run2" / f);
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    detail += std::string(f) + (same ? " identical" : " DIFFERS") + " (" + std::to_string(a.size()) + " B); ";
  }
  return {ok, detail + fmt("rerun %.0f s", seconds_since(start))};
}

Outcome timing_report(Context& ctx) {
  const fs::path dir = ctx.work / "timing";
  if (cli(ctx, {"--seed", "7", "--threads", "1", "phantom", "--count", "1", "--out", dir.string()}) != 0) {
    return {false, "phantom generation failed (see log)"};
  }
  // Inference cost does not depend on the weight values, so a seeded
  // full-width network at the 64^3 crop stands in for a trained one.
  UNetCheckpoint cp{UNet3d::build({}, 7), {2.0, 3.0, 1}, {}};
  cp.training_meta.crop = 64;
  save_checkpoint(cp, dir / "full_width.vseg");
  const Volume pet = read_nrrd(dir / "case_000/pet.nrrd");
  if (cli(ctx, {"--threads", "1", "predict", "--checkpoint", (dir / "full_width.vseg").string(), "--pet",
                (dir / "case_000/pet.nrrd").string(), "--prostate", (dir / "case_000/prostate.nrrd").string(), "--out",
                (dir / "gtv.nrrd").string()}) != 0) {
    return {false, "predict failed (see log)"};
  }
  const auto j = nlohmann::json::parse(slurp(dir / "gtv.nrrd.timing.json"));
  for (const char* k : {"load_sec", "compute_sec", "store_sec", "total_sec"}) {
    if (!j.contains(k)) return {false, std::string("timing JSON lacks ") + k};
  }
  const double total = j["total_sec"].get<double>();
  return {total < 10.0, std::to_string(pet.dims[0]) + "x" + std::to_string(pet.dims[1]) + "x" +
                            std::to_string(pet.dims[2]) + " phantom, 64^3 crop, base 32: load " +
                            fmt("%.3f", j["load_sec"].get<double>()) + " s, compute " +
                            fmt("%.3f", j["compute_sec"].get<double>()) + " s, store " +
                            fmt("%.3f", j["store_sec"].get<double>()) + " s, total " + fmt("%.3f s", total) +
                            " (<10 s, 1 thread)"};
}

Outcome table_report(Context& ctx) {
  if (!ctx.regression_ran) return {false, "needs the phantom regression run"};
  const fs::path out = ctx.work / "evaluate";
  if (cli(ctx, {"--threads", "1", "evaluate", "--pred-manifest", (ctx.work / "pred_eval/manifest.json").string(),
                "--ref-manifest", (ctx.work / "run1/eval_manifest.json").string(), "--out", out.string(), "--method",
                "gtv30"}) != 0) {
    return {false, "evaluate failed (see log)"};
  }
  const auto summary = read_csv(out / "summary.csv");
  const auto report = read_csv(out / "report_cnn.csv");
  if (summary.size() != 3 || report.size() != 11) return {false, "unexpected summary/report row counts"};
  const std::vector<std::string> head(summary[0].begin(), summary[0].begin() + 11);
  const std::vector<std::string> expect{"method",        "cases",      "dsc_median",     "dsc_min",
                                        "dsc_max",       "hd_mm_median", "hd_mm_min",    "hd_mm_max",
                                        "assd_mm_median", "assd_mm_min", "assd_mm_max"};
  bool ok = head == expect && summary[1][0] == "cnn" && summary[1][1] == "10" && summary[2][0] == "gtv30";

  // Medians, minima and maxima against a sort of the per-case columns.
  std::string detail;
  const std::map<std::string, std::size_t> report_column{{"dsc", 1}, {"hd_mm", 2}, {"assd_mm", 3}};
  for (const auto& [metric, col] : report_column) {
    std::vector<double> values;
    for (std::size_t r = 1; r < report.size(); ++r)
      if (!report[r][col].empty()) values.push_back(std::stod(report[r][col]));
    std::size_t at = 0;
    while (summary[0][at] != metric + "_median") ++at;
    const double median = std::stod(summary[1][at]);
    std::sort(values.begin(), values.end());
    const bool match = !values.empty() && median == sort_median(values) && std::stod(summary[1][at + 1]) == values.front() &&
                       std::stod(summary[1][at + 2]) == values.back();
    ok = ok && match;
    detail += metric + " median " + fmt("%.4g", median) + (match ? " = oracle; " : " != oracle; ");
  }
  return {ok, "summary columns method,cases,{dsc,hd_mm,assd_mm}_{median,min,max}; " + detail +
                  "rows cnn (10 cases) and gtv30"};
}

Outcome nrrd_roundtrip_fuzz(Context&) {
  Rng rng(9);
  // Round trips through hand-built files of every dtype/encoding/byte order.
  std::size_t roundtrips = 0, inexact = 0;
  for (auto t : {Dtype::u8, Dtype::i16, Dtype::u16, Dtype::i32, Dtype::f32, Dtype::f64})
    for (bool gz : {false, true})
      for (bool big : {false, true}) {
        NrrdFile f;
        f.type = t;
        f.gzip = gz;
        f.big_endian = big;
        f.nx = 7;
        f.ny = 5;
        f.nz = 3;
        f.values = representable_values(t, 105, rng);
        const Volume v = parse_nrrd(f.bytes(), VolumeKind::pet);
        for (std::size_t i = 0; i < 105; ++i) inexact += static_cast<double>(v.data[i]) != f.values[i];
        ++roundtrips;
      }
  // And through the writer for both volume kinds and encodings.
  Volume pet = Volume::zeros({9, 8, 7}, {2, 1.25, 3.5}, {-100.25, 3, 7.125}, VolumeKind::pet);
  for (auto& x : pet.data) x = static_cast<float>(rng.normal() * 1e3);
  Volume mask = Volume::mask_like(pet);
  for (auto& x : mask.data) x = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  for (const Volume* v : {&pet, &mask})
    for (auto enc : {NrrdEncoding::raw, NrrdEncoding::gzip}) {
      const Volume back = parse_nrrd(serialize_nrrd(*v, enc));
      inexact += back.data != v->data || back.spacing != v->spacing || back.origin != v->origin || back.kind != v->kind;
      ++roundtrips;
    }

  // Header mutation fuzzing.
  NrrdFile base;
  base.values = representable_values(Dtype::f32, 12, rng);
  const std::string header = base.header();
  const std::vector<std::string> junk = {"",        "-1",  "1e999",        "nan", "(",    "0", "99999999999999999999",
                                         "3 3 3 3", "raw", "(1,0,0)(0,1,0)", "\x01\xff", "big", ":",    "\n",
                                         "gzip",    "bzip2", "uchar",      "4294967297", ")", "inf"};
  std::size_t structured = 0, accepted = 0, unstructured = 0;
  for (int i = 0; i < 1000; ++i) {
    NrrdFile f = base;
    f.gzip = rng.below(2) == 1;
    std::string bytes = f.bytes();
    const std::size_t header_len = f.header().size();
    const int edits = 1 + static_cast<int>(rng.below(3));
    for (int e = 0; e < edits && !bytes.empty(); ++e) {
      const std::size_t at = rng.below(std::min(header_len, bytes.size()));
      switch (rng.below(5)) {
        case 0: bytes.erase(at, 1 + rng.below(6)); break;
        case 1: bytes.insert(at, junk[rng.below(junk.size())]); break;
        case 2: bytes[at] = static_cast<char>(rng.below(256)); break;
        case 3: {  // replace the value part of one header line
          const std::size_t line_start = bytes.rfind('\n', at) == std::string::npos ? 0 : bytes.rfind('\n', at) + 1;
          const std::size_t colon = bytes.find(':', line_start);
          const std::size_t line_end = bytes.find('\n', line_start);
          if (colon != std::string::npos && line_end != std::string::npos && colon < line_end) {
            bytes.replace(colon + 1, line_end - colon - 1, " " + junk[rng.below(junk.size())]);
          }
          break;
        }
        case 4: bytes.resize(rng.below(bytes.size())); break;
      }
    }
    try {
      (void)parse_nrrd(bytes);
      ++accepted;
    } catch (const Error&) {
      ++structured;
    } catch (...) {
      ++unstructured;
    }
  }
  const bool ok = inexact == 0 && unstructured == 0;
  return {ok, std::to_string(roundtrips) + " round trips (" + std::to_string(inexact) + " inexact); 1000 header mutations: " +
                  std::to_string(structured) + " structured errors, " + std::to_string(accepted) + " still valid, " +
                  std::to_string(unstructured) + " unstructured"};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "vseg_acceptance";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else {
      only.insert(a);
    }
  }
  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);
  ctx.log.open(ctx.work / "acceptance.log");
  set_thread_count(1);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"gradient-suite", gradient_suite},
      {"architecture-census", architecture_census},
      {"metric-oracles", metric_oracles},
      {"resampling-properties", resampling_properties},
      {"phantom-regression", phantom_regression},
      {"determinism", determinism},
      {"timing-report", timing_report},
      {"table-report", table_report},
      {"nrrd-roundtrip-fuzz", nrrd_roundtrip_fuzz},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name) && !(name == "determinism" && only.count("phantom-regression"))) continue;
    Outcome o;
    try {
      o = run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%-4s %-22s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %d criteria failed; log in %s\n", failed ? "FAILED" : "OK", failed,
              (ctx.work / "acceptance.log").string().c_str());
  return failed ? 1 : 0;
}
