#include "vseg/train.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "vseg/error.hpp"
#include "vseg/loss.hpp"
#include "vseg/metrics.hpp"
#include "vseg/parallel.hpp"
#include "vseg/preprocess.hpp"
#include "vseg/random.hpp"

namespace vseg {

void TrainConfig::validate() const {
  if (crop == 0 || crop % 8 != 0) throw ConfigError("crop must be a positive multiple of 8, got " + std::to_string(crop));
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (augmentation) throw ConfigError("data augmentation is not supported");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
}

void CurveLog::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,eval_loss,eval_dsc,eval_hd_mm,eval_assd_mm\n";
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : format_number(v); };
  for (const auto& r : rows) {
    out << r.epoch << ',' << num(r.train_loss) << ',' << num(r.eval_loss) << ',' << num(r.eval_dsc) << ','
        << num(r.eval_hd_mm) << ',' << num(r.eval_assd_mm) << '\n';
  }
}

namespace {

struct Sample {
  std::string id;
  Tensor input;
  LabelTensor labels;
  LabelTensor prostate;
  BinaryMask label_mask;
  Vec3 spacing;
};

Tensor stack_inputs(const std::vector<const Sample*>& batch) {
  if (batch.size() == 1) return batch.front()->input;
  Shape shape = batch.front()->input.shape();
  shape[0] = batch.size();
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto* s : batch) data.insert(data.end(), s->input.data().begin(), s->input.data().end());
  return Tensor::from_data(shape, std::move(data));
}

LabelTensor stack(const std::vector<const Sample*>& batch, LabelTensor Sample::*member) {
  const LabelTensor& first = batch.front()->*member;
  if (batch.size() == 1) return first;
  Shape shape = first.shape();
  shape[0] = batch.size();
  std::vector<std::uint8_t> values;
  for (const auto* s : batch) values.insert(values.end(), (s->*member).values().begin(), (s->*member).values().end());
  return LabelTensor(shape, std::move(values));
}

LabelTensor stack_labels(const std::vector<const Sample*>& batch) { return stack(batch, &Sample::labels); }
LabelTensor stack_prostates(const std::vector<const Sample*>& batch) { return stack(batch, &Sample::prostate); }

UNetCheckpoint snapshot(const UNet3d& model, const NormalizationStats& stats, const TrainingMeta& meta) {
  return UNetCheckpoint{model.clone(), stats, meta};
}

}  // namespace

TrainResult train(const std::vector<CaseRecord>& cases, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  for (const auto& c : cases) {
    if (!c.gtv_label) throw PipelineError("case " + c.id + " has no gtv_label; training needs labels");
  }
  const auto split = split_cohort(cases.size(), config.eval_fraction, config.seed);

  std::vector<CroppedCase> crops(cases.size());
  parallel_for(cases.size(), [&](std::size_t i) { crops[i] = crop_to_roi(cases[i], config.crop); });

  std::vector<Volume> train_pets;
  for (auto i : split.train) train_pets.push_back(crops[i].record.pet);
  const NormalizationStats stats = fit_normalization(train_pets);
  train_pets.clear();

  std::vector<Sample> samples(cases.size());
  parallel_for(cases.size(), [&](std::size_t i) {
    const auto& r = crops[i].record;
    const Volume label = mask_by(*r.gtv_label, r.prostate);
    samples[i] = Sample{r.id, make_input(r.pet, r.prostate, stats), make_labels(label), make_labels(r.prostate),
                        BinaryMask::from_volume(label), r.pet.spacing};
  });
  crops.clear();

  UNetConfig net_config;
  net_config.base_channels = config.base_channels;
  UNet3d model = UNet3d::build(net_config, derive_seed(config.seed, "init"));
  auto params = model.parameters();
  AdamState adam;
  adam.lr = config.lr;
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;

  TrainResult result;
  for (auto i : split.train) result.train_ids.push_back(cases[i].id);
  for (auto i : split.eval) result.eval_ids.push_back(cases[i].id);

  TrainingMeta meta;
  meta.crop = config.crop;
  Rng shuffle(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order = split.train;
  double best_eval = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle.below(i + 1)]);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch) {
      std::vector<const Sample*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + config.batch); ++k) batch.push_back(&samples[order[k]]);
      const Tensor prob = model.forward(stack_inputs(batch), true);
      Tensor loss = dice_loss(apply_mask(prob, stack_prostates(batch)), stack_labels(batch));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::string ids;
        for (const auto* s : batch) ids += (ids.empty() ? "" : ",") + s->id;
        throw TrainingError("loss is " + std::string(std::isnan(value) ? "NaN" : "infinite") + " at epoch " +
                            std::to_string(epoch) + ", case " + ids);
      }
      loss.backward();
      adam_step(params, adam);
      for (auto& p : params) p.tensor.zero_grad();
      loss_sum += value;
      ++steps;
    }

    CurveRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(steps);
    double eval_loss = 0.0, eval_dsc = 0.0, hd = 0.0, assd = 0.0;
    std::size_t distance_cases = 0;
    for (auto i : split.eval) {
      const auto& s = samples[i];
      const Tensor prob = model.infer(s.input);
      const double value = dice_loss(apply_mask(prob, s.prostate), s.labels).item();
      if (!std::isfinite(value)) {
        throw TrainingError("eval loss is " + std::string(std::isnan(value) ? "NaN" : "infinite") + " at epoch " +
                            std::to_string(epoch) + ", case " + s.id);
      }
      eval_loss += value;
      const LabelTensor pred = predict_mask(prob, s.prostate);
      BinaryMask pm{s.label_mask.dims, std::vector<std::uint8_t>(pred.values().begin(), pred.values().end())};
      eval_dsc += dsc(pm, s.label_mask);
      if (!pm.empty() && !s.label_mask.empty()) {
        hd += hausdorff_mm(pm, s.label_mask, s.spacing);
        assd += assd_mm(pm, s.label_mask, s.spacing);
        ++distance_cases;
      }
    }
    const double n_eval = static_cast<double>(split.eval.size());
    row.eval_loss = eval_loss / n_eval;
    row.eval_dsc = eval_dsc / n_eval;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.eval_hd_mm = distance_cases ? hd / static_cast<double>(distance_cases) : nan;
    row.eval_assd_mm = distance_cases ? assd / static_cast<double>(distance_cases) : nan;
    result.curves.rows.push_back(row);

    meta.epochs = epoch;
    meta.final_train_loss = row.train_loss;
    meta.final_eval_loss = row.eval_loss;
    if (row.eval_loss < best_eval) {
      best_eval = row.eval_loss;
      meta.best_epoch = epoch;
      result.best_checkpoint = snapshot(model, stats, meta);
    }
    if (on_epoch) on_epoch(row);
  }
  result.best_checkpoint.training_meta.best_epoch = meta.best_epoch;
  result.best_checkpoint.training_meta.epochs = meta.epochs;
  result.final_checkpoint = UNetCheckpoint{std::move(model), stats, meta};
  return result;
}

}  // namespace vseg
