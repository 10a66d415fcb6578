#include "vseg/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>

#include "vseg/error.hpp"

namespace vseg {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'E', 'G'};
constexpr std::uint8_t kDtypeFloat64 = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointCorruptError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                   std::to_string(pos_));
    }
  }
  template <typename T>
  T uint(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

double json_number(const nlohmann::json& j) {
  // NaN is stored as null since JSON has no NaN literal.
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void save_checkpoint(const UNetCheckpoint& checkpoint, const std::filesystem::path& path) {
  // state() needs mutable spans; the model itself is not modified.
  auto entries = const_cast<UNet3d&>(checkpoint.model).state();
  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kCheckpointFormatVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.uint<std::uint64_t>(d);
    w.uint<std::uint8_t>(kDtypeFloat64);
    w.uint<std::uint64_t>(e.values.size() * sizeof(double));
    for (double v : e.values) w.f64(v);
  }
  const auto& cfg = checkpoint.model.config();
  const auto& meta = checkpoint.training_meta;
  nlohmann::json j = {
      {"format_version", kCheckpointFormatVersion},
      {"config",
       {{"in_channels", cfg.in_channels},
        {"base_channels", cfg.base_channels},
        {"levels", cfg.levels},
        {"out_channels", cfg.out_channels}}},
      // Stats are also stored as exact bit patterns so a reload is bit-identical.
      {"norm_stats",
       {{"mean", checkpoint.norm_stats.mean},
        {"std", checkpoint.norm_stats.std},
        {"mean_bits", std::bit_cast<std::uint64_t>(checkpoint.norm_stats.mean)},
        {"std_bits", std::bit_cast<std::uint64_t>(checkpoint.norm_stats.std)},
        {"cohort_size", checkpoint.norm_stats.cohort_size}}},
      {"training_meta",
       {{"epochs", meta.epochs},
        {"best_epoch", meta.best_epoch},
        {"crop", meta.crop},
        {"final_train_loss", number_or_null(meta.final_train_loss)},
        {"final_eval_loss", number_or_null(meta.final_eval_loss)}}}};
  const std::string text = j.dump();
  w.uint<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

UNetCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));

  if (r.str(4, "magic") != std::string(kMagic, 4)) {
    throw CheckpointCorruptError("not a checkpoint (bad magic): " + path.string());
  }
  const auto version = r.uint<std::uint32_t>("format_version");
  if (version != kCheckpointFormatVersion) {
    throw CheckpointVersionError("checkpoint format_version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kCheckpointFormatVersion) + "): " + path.string());
  }
  struct Record {
    Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Record> records;
  const auto count = r.uint<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.uint<std::uint32_t>("name length");
    std::string name = r.str(name_len, "tensor name");
    const auto ndim = r.uint<std::uint32_t>("rank");
    if (ndim > 8) throw CheckpointCorruptError("tensor " + name + " has implausible rank " + std::to_string(ndim));
    Record rec;
    for (std::uint32_t d = 0; d < ndim; ++d) rec.shape.push_back(r.uint<std::uint64_t>("dims"));
    if (r.uint<std::uint8_t>("dtype") != kDtypeFloat64) {
      throw CheckpointCorruptError("tensor " + name + " has an unknown dtype");
    }
    const auto bytes = r.uint<std::uint64_t>("payload size");
    if (bytes % sizeof(double) != 0 || bytes > r.remaining()) {
      throw CheckpointCorruptError("tensor " + name + " payload size " + std::to_string(bytes) + " is invalid");
    }
    if (bytes / sizeof(double) != shape_numel(rec.shape)) {
      throw CheckpointCorruptError("tensor " + name + " payload does not match shape " + shape_to_string(rec.shape));
    }
    rec.values.resize(bytes / sizeof(double));
    for (auto& v : rec.values) v = r.f64("payload");
    if (!records.emplace(std::move(name), std::move(rec)).second) {
      throw CheckpointCorruptError("duplicate tensor record in checkpoint");
    }
  }
  const auto meta_len = r.uint<std::uint64_t>("metadata length");
  if (meta_len != r.remaining()) {
    throw CheckpointCorruptError("metadata block length " + std::to_string(meta_len) + " does not match " +
                                 std::to_string(r.remaining()) + " remaining bytes");
  }
  const std::string text = r.str(meta_len, "metadata");

  UNetCheckpoint cp;
  UNetConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<std::uint32_t>() != version) {
      throw CheckpointCorruptError("metadata format_version disagrees with header");
    }
    const auto& jc = j.at("config");
    cfg.in_channels = jc.at("in_channels").get<std::size_t>();
    cfg.base_channels = jc.at("base_channels").get<std::size_t>();
    cfg.levels = jc.at("levels").get<std::size_t>();
    cfg.out_channels = jc.at("out_channels").get<std::size_t>();
    const auto& jn = j.at("norm_stats");
    cp.norm_stats.mean = std::bit_cast<double>(jn.at("mean_bits").get<std::uint64_t>());
    cp.norm_stats.std = std::bit_cast<double>(jn.at("std_bits").get<std::uint64_t>());
    cp.norm_stats.cohort_size = jn.at("cohort_size").get<std::size_t>();
    const auto& jm = j.at("training_meta");
    cp.training_meta.epochs = jm.at("epochs").get<std::size_t>();
    cp.training_meta.best_epoch = jm.at("best_epoch").get<std::size_t>();
    cp.training_meta.crop = jm.at("crop").get<std::size_t>();
    cp.training_meta.final_train_loss = json_number(jm.at("final_train_loss"));
    cp.training_meta.final_eval_loss = json_number(jm.at("final_eval_loss"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint metadata is malformed: ") + e.what());
  }
  cfg.validate();

  cp.model = UNet3d::build(cfg, 0);
  auto entries = cp.model.state();
  if (entries.size() != records.size()) {
    throw CheckpointCorruptError("checkpoint holds " + std::to_string(records.size()) + " tensors, model expects " +
                                 std::to_string(entries.size()));
  }
  for (auto& e : entries) {
    auto it = records.find(e.name);
    if (it == records.end()) throw CheckpointCorruptError("checkpoint is missing tensor " + e.name);
    if (it->second.shape != e.shape) {
      throw CheckpointCorruptError("tensor " + e.name + " has shape " + shape_to_string(it->second.shape) +
                                   ", model expects " + shape_to_string(e.shape));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), e.values.begin());
  }
  return cp;
}

}  // namespace vseg
