#include "vseg/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>

#include "vseg/error.hpp"
#include "vseg/metrics.hpp"
#include "vseg/nrrd.hpp"
#include "vseg/parallel.hpp"
#include "vseg/phantom.hpp"
#include "vseg/predict.hpp"
#include "vseg/preprocess.hpp"
#include "vseg/random.hpp"
#include "vseg/resample.hpp"
#include "vseg/train.hpp"

namespace fs = std::filesystem;

namespace vseg {

namespace {

struct PhantomOptions {
  std::size_t count = 0;
  fs::path out;
  std::vector<std::size_t> dims{64, 64, 64};
  std::vector<double> spacing{2.0, 2.0, 2.0};
  double noise = PhantomSpec{}.noise_level;
};

struct ResampleOptions {
  fs::path in, out;
  std::string method = "trilinear";
  std::vector<double> spacing{2.0, 2.0, 2.0};
  std::string kind = "auto";
  std::string encoding = "gzip";
};

struct TrainOptions {
  fs::path manifest, out;
  TrainConfig config;
};

struct PredictOptions {
  fs::path checkpoint, pet, prostate, manifest, out;
};

struct EvaluateOptions {
  fs::path pred_manifest, ref_manifest, out;
  std::string method = "cnn";
};

Vec3 to_vec3(const std::vector<double>& v) { return {v.at(0), v.at(1), v.at(2)}; }

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::string case_dir_name(std::size_t i) {
  std::string s = std::to_string(i);
  return "case_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

void cmd_phantom(const PhantomOptions& o, std::uint64_t seed, std::ostream& out) {
  if (o.count == 0) throw ConfigError("--count must be at least 1");
  ensure_directory(o.out);
  std::vector<ManifestEntry> entries(o.count);
  parallel_for(o.count, [&](std::size_t i) {
    PhantomSpec spec;
    spec.seed = derive_seed(seed, "phantom/" + std::to_string(i));
    spec.dims = {o.dims.at(0), o.dims.at(1), o.dims.at(2)};
    spec.spacing = to_vec3(o.spacing);
    spec.noise_level = o.noise;
    const std::string name = case_dir_name(i);
    const CaseRecord c = generate_phantom(spec, "phantom_" + name.substr(5));
    const fs::path dir = o.out / name;
    ensure_directory(dir);
    ManifestEntry e{c.id, dir / "pet.nrrd", dir / "prostate.nrrd", dir / "gtv.nrrd", dir / "histo.nrrd", std::nullopt};
    write_nrrd(c.pet, e.pet_path, NrrdEncoding::gzip);
    write_nrrd(c.prostate, e.prostate_path, NrrdEncoding::gzip);
    write_nrrd(*c.gtv_label, *e.gtv_path, NrrdEncoding::gzip);
    write_nrrd(*c.histo_ref, *e.histo_path, NrrdEncoding::gzip);
    entries[i] = std::move(e);
  });
  write_manifest(o.out / "manifest.json", entries);
  out << "wrote " << o.count << " phantom cases and " << (o.out / "manifest.json").string() << '\n';
}

void cmd_resample(const ResampleOptions& o, std::ostream& out) {
  const auto method = parse_interpolation(o.method);
  if (!method) throw ConfigError("unknown interpolation method '" + o.method + "'");
  const auto encoding = parse_nrrd_encoding(o.encoding);
  if (!encoding) throw ConfigError("unknown encoding '" + o.encoding + "'");
  std::optional<VolumeKind> kind;
  if (o.kind == "pet") kind = VolumeKind::pet;
  else if (o.kind == "mask") kind = VolumeKind::mask;
  else if (o.kind != "auto") throw ConfigError("--kind must be auto, pet or mask");
  const Volume input = read_nrrd(o.in, kind);
  ResampleSpec spec;
  spec.target_spacing = to_vec3(o.spacing);
  spec.method = *method;
  const Volume result = resample(input, spec);
  if (o.out.has_parent_path()) ensure_directory(o.out.parent_path());
  write_nrrd(result, o.out, *encoding);
  out << "resampled " << o.in.string() << " (" << input.dims[0] << 'x' << input.dims[1] << 'x' << input.dims[2]
      << ") to " << result.dims[0] << 'x' << result.dims[1] << 'x' << result.dims[2] << " with "
      << interpolation_name(*method) << '\n';
}

void cmd_train(TrainOptions o, std::uint64_t seed, std::ostream& out) {
  o.config.seed = seed;
  o.config.validate();
  const auto entries = read_manifest(o.manifest);
  std::vector<CaseRecord> cases(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) { cases[i] = load_case(entries[i]); });
  ensure_directory(o.out);

  const auto result = train(cases, o.config, [&](const CurveRow& r) {
    out << "epoch " << r.epoch << " train_loss " << format_number(r.train_loss) << " eval_loss "
        << format_number(r.eval_loss) << " eval_dsc " << format_number(r.eval_dsc) << '\n';
    out.flush();
  });
  save_checkpoint(result.final_checkpoint, o.out / "checkpoint_final.vseg");
  save_checkpoint(result.best_checkpoint, o.out / "checkpoint_best.vseg");
  std::ofstream curves(o.out / "curves.csv", std::ios::trunc);
  if (!curves) throw IoError("cannot write " + (o.out / "curves.csv").string());
  result.curves.write_csv(curves);

  std::vector<ManifestEntry> train_entries, eval_entries;
  for (const auto& e : entries) {
    if (std::find(result.eval_ids.begin(), result.eval_ids.end(), e.id) != result.eval_ids.end()) {
      eval_entries.push_back(e);
    } else {
      train_entries.push_back(e);
    }
  }
  write_manifest(o.out / "train_manifest.json", train_entries);
  write_manifest(o.out / "eval_manifest.json", eval_entries);
  out << "trained " << result.final_checkpoint.training_meta.epochs << " epochs; best epoch "
      << result.best_checkpoint.training_meta.best_epoch << "; outputs in " << o.out.string() << '\n';
}

nlohmann::json timing_json(const PredictTiming& t) {
  return {{"load_sec", t.load_sec}, {"compute_sec", t.compute_sec}, {"store_sec", t.store_sec},
          {"total_sec", t.total_sec()}};
}

void cmd_predict(const PredictOptions& o, std::ostream& out) {
  if (!o.manifest.empty()) {
    if (!o.pet.empty() || !o.prostate.empty()) throw ConfigError("use either --manifest or --pet/--prostate");
    ensure_directory(o.out);
    auto entries = read_manifest(o.manifest);
    auto timings = nlohmann::json::object();
    std::vector<ManifestEntry> preds;
    for (const auto& e : entries) {
      const fs::path dir = o.out / e.id;
      ensure_directory(dir);
      const auto p = predict_files(o.checkpoint, e.pet_path, e.prostate_path, dir / "gtv_pred.nrrd");
      timings[e.id] = timing_json(p.timing);
      preds.push_back({e.id, e.pet_path, e.prostate_path, dir / "gtv_pred.nrrd", std::nullopt, p.timing.total_sec()});
    }
    write_manifest(o.out / "manifest.json", preds);
    write_text(o.out / "timing.json", timings.dump(2) + "\n");
    out << "predicted " << preds.size() << " cases; manifest " << (o.out / "manifest.json").string() << '\n';
    return;
  }
  if (o.pet.empty() || o.prostate.empty()) throw ConfigError("predict needs --pet and --prostate, or --manifest");
  if (o.out.has_parent_path()) ensure_directory(o.out.parent_path());
  const auto p = predict_files(o.checkpoint, o.pet, o.prostate, o.out);
  const std::string timing = timing_json(p.timing).dump(2);
  write_text(fs::path(o.out.string() + ".timing.json"), timing + "\n");
  out << timing << '\n';
}

Volume reference_mask(const CaseRecord& c) {
  if (c.gtv_label) return *c.gtv_label;
  if (c.histo_ref) return *c.histo_ref;
  throw PipelineError("reference case " + c.id + " has neither gtv_path nor histo_path");
}

void write_csv_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  body(f);
}

void cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  if (o.method != "cnn" && o.method != "gtv30") throw ConfigError("--method must be cnn or gtv30");
  const auto refs = read_manifest(o.ref_manifest);
  std::map<std::string, ManifestEntry> preds;
  if (!o.pred_manifest.empty()) {
    for (auto& e : read_manifest(o.pred_manifest)) preds.emplace(e.id, e);
  } else if (o.method != "gtv30") {
    throw ConfigError("--pred-manifest is required unless --method gtv30");
  }
  ensure_directory(o.out);

  std::vector<EvaluationRecord> cnn, gtv30;
  for (const auto& r : refs) {
    const CaseRecord ref = load_case(r);
    const Volume reference = reference_mask(ref);
    const Volume* histology = ref.histo_ref ? &*ref.histo_ref : nullptr;
    if (!o.pred_manifest.empty()) {
      const auto it = preds.find(r.id);
      if (it == preds.end()) throw PipelineError("no prediction for case " + r.id);
      if (!it->second.gtv_path) throw PipelineError("prediction entry " + r.id + " has no gtv_path");
      const Volume pred = read_nrrd(*it->second.gtv_path, VolumeKind::mask);
      cnn.push_back(evaluate_case(r.id, pred, reference, ref.prostate, histology, it->second.time_sec));
    }
    if (o.method == "gtv30") {
      const auto start = std::chrono::steady_clock::now();
      const Volume pred = threshold_gtv30(ref.pet, ref.prostate);
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      gtv30.push_back(evaluate_case(r.id, pred, reference, ref.prostate, histology, t));
    }
  }
  std::vector<CohortReport> reports;
  if (!cnn.empty()) {
    write_csv_file(o.out / "report_cnn.csv", [&](std::ostream& f) { write_report_csv(f, cnn); });
    reports.push_back(cohort_report(cnn, "cnn"));
  }
  if (!gtv30.empty()) {
    write_csv_file(o.out / "report_gtv30.csv", [&](std::ostream& f) { write_report_csv(f, gtv30); });
    reports.push_back(cohort_report(gtv30, "gtv30"));
  }
  write_csv_file(o.out / "summary.csv", [&](std::ostream& f) { write_summary_csv(f, reports); });
  for (const auto& rep : reports) {
    out << rep.method << ": " << rep.cases << " cases, median DSC " << format_number(rep.dsc->median) << '\n';
  }
}

std::size_t threads_from_env() {
  const char* v = std::getenv("VSEG_THREADS");
  if (!v || !*v) return 1;
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != std::string(v).size() || n < 1) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(std::string("VSEG_THREADS must be a positive integer, got '") + v + "'");
  }
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

// Effective configuration next to the command's outputs.
fs::path config_dump_path(const fs::path& out, bool out_is_directory) {
  return out_is_directory ? out / "vseg_config.ini" : fs::path(out.string() + ".config.ini");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volumetric PET tumour segmentation toolkit", "vseg"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value file; [command] sections or command.key names; flags win");
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  app.add_option("--seed", seed, "Master seed for every random stream")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads (falls back to VSEG_THREADS, then 1)");

  PhantomOptions ph;
  auto* phantom = app.add_subcommand("phantom", "Generate synthetic PET cases and a manifest");
  phantom->add_option("--count", ph.count, "Number of cases")->required();
  phantom->add_option("--out", ph.out, "Output directory")->required();
  phantom->add_option("--dims", ph.dims, "Grid size x,y,z")->delimiter(',')->expected(3)->capture_default_str();
  phantom->add_option("--spacing", ph.spacing, "Voxel spacing mm x,y,z")->delimiter(',')->expected(3)->capture_default_str();
  phantom->add_option("--noise", ph.noise, "Noise level (sd = noise * sqrt(SUV))")->capture_default_str();

  ResampleOptions rs;
  auto* resample_cmd = app.add_subcommand("resample", "Resample a NRRD volume to a new spacing");
  resample_cmd->add_option("--in", rs.in, "Input NRRD")->required();
  resample_cmd->add_option("--out", rs.out, "Output NRRD")->required();
  resample_cmd->add_option("--method", rs.method, "nearest, trilinear, bspline3 or gaussian")->capture_default_str();
  resample_cmd->add_option("--spacing", rs.spacing, "Target spacing mm x,y,z")->delimiter(',')->expected(3)->capture_default_str();
  resample_cmd->add_option("--kind", rs.kind, "auto, pet or mask")->capture_default_str();
  resample_cmd->add_option("--encoding", rs.encoding, "raw or gzip")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train the U-Net on a case manifest");
  train_cmd->add_option("--manifest", tr.manifest, "Case manifest JSON")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--lr", tr.config.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", tr.config.beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", tr.config.beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--batch", tr.config.batch, "Cases per step")->capture_default_str();
  train_cmd->add_option("--crop", tr.config.crop, "ROI cube edge in voxels (multiple of 8)")->capture_default_str();
  train_cmd->add_option("--eval-fraction", tr.config.eval_fraction, "Share of cases held out")->capture_default_str();
  train_cmd->add_option("--base-channels", tr.config.base_channels, "Channels of the first level")->capture_default_str();

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Segment the GTV of one case or a manifest");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--pet", pr.pet, "PET NRRD");
  predict_cmd->add_option("--prostate", pr.prostate, "Prostate mask NRRD");
  predict_cmd->add_option("--manifest", pr.manifest, "Predict every case of a manifest");
  predict_cmd->add_option("--out", pr.out, "Output NRRD, or directory with --manifest")->required();

  EvaluateOptions ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions and write per-case and cohort reports");
  evaluate_cmd->add_option("--pred-manifest", ev.pred_manifest, "Manifest whose gtv_path entries are predictions");
  evaluate_cmd->add_option("--ref-manifest", ev.ref_manifest, "Reference manifest")->required();
  evaluate_cmd->add_option("--out", ev.out, "Output directory")->required();
  evaluate_cmd->add_option("--method", ev.method, "cnn, or gtv30 to add the threshold baseline")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    set_thread_count(threads > 0 ? threads : threads_from_env());
    CLI::App* used = app.get_subcommands().front();
    const std::string effective = "seed=" + std::to_string(seed) + "\nthreads=" + std::to_string(thread_count()) +
                                  "\n[" + used->get_name() + "]\n" + used->config_to_str(true, false);
    if (phantom->parsed()) {
      ensure_directory(ph.out);
      write_text(config_dump_path(ph.out, true), effective);
      cmd_phantom(ph, seed, out);
    } else if (resample_cmd->parsed()) {
      if (rs.out.has_parent_path()) ensure_directory(rs.out.parent_path());
      write_text(config_dump_path(rs.out, false), effective);
      cmd_resample(rs, out);
    } else if (train_cmd->parsed()) {
      ensure_directory(tr.out);
      write_text(config_dump_path(tr.out, true), effective);
      cmd_train(tr, seed, out);
    } else if (predict_cmd->parsed()) {
      const bool dir = !pr.manifest.empty();
      if (dir) ensure_directory(pr.out);
      else if (pr.out.has_parent_path()) ensure_directory(pr.out.parent_path());
      write_text(config_dump_path(pr.out, dir), effective);
      cmd_predict(pr, out);
    } else if (evaluate_cmd->parsed()) {
      ensure_directory(ev.out);
      write_text(config_dump_path(ev.out, true), effective);
      cmd_evaluate(ev, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vseg
