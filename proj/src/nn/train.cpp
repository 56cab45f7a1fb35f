#include "voxgrid/nn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "voxgrid/errors.hpp"

namespace voxgrid::nn {
namespace {

using Items = std::vector<std::vector<Tensor<float>>>;

Items materialize(const Dataset& data) {
  Items items(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) items[i] = data.inputs(i, nullptr);
  return items;
}

std::vector<Tensor<float>> make_batch(const Items& items, std::span<const std::size_t> idx) {
  const std::size_t inputs = items[idx[0]].size();
  std::vector<Tensor<float>> batch;
  for (std::size_t k = 0; k < inputs; ++k) {
    std::vector<const Tensor<float>*> parts;
    for (std::size_t i : idx) parts.push_back(&items[i][k]);
    batch.push_back(stack(parts));
  }
  return batch;
}

std::vector<double> predict_items(Model<float>& model, std::span<const float> params, const Items& items,
                                  int batch) {
  std::vector<double> out;
  out.reserve(items.size());
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t b = 0; b < idx.size(); b += batch) {
    const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(batch));
    const Tensor<float> pred = model.forward(make_batch(items, std::span(idx).subspan(b, e - b)), params);
    for (float v : pred.data) out.push_back(v);
  }
  return out;
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
  return mse_loss<double>(pred, target);
}

}  // namespace

Tensor<float> stack(const std::vector<const Tensor<float>*>& items) {
  if (items.empty()) throw ArgumentError("stack: no items");
  Shape shape = items[0]->shape;
  const std::size_t item = items[0]->size();
  shape[0] = 0;
  for (const auto* t : items) {
    if (t->batch() != 1 || t->size() != item) throw ShapeError("stack: items must share a (1,...) shape");
    shape[0] += 1;
  }
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i]->data.begin(), items[i]->data.end(), out.data.begin() + i * item);
  }
  return out;
}

Dataset tensor_dataset(std::vector<std::vector<Tensor<float>>> inputs, std::vector<double> labels,
                       std::optional<grid::GridGeometry> geometry) {
  if (inputs.size() != labels.size()) throw ArgumentError("tensor_dataset: inputs and labels differ in length");
  auto store = std::make_shared<Items>(std::move(inputs));
  Dataset d;
  d.labels = std::move(labels);
  d.inputs = [store, geometry](std::size_t i, const grid::Rotation* rot) {
    const auto& item = (*store)[i];
    if (rot == nullptr || !geometry) return item;
    std::vector<Tensor<float>> out;
    for (const auto& t : item) {
      const int c = t.dim(1);
      grid::VoxelGrid g(*geometry, c, t.data);
      auto r = grid::rotate_resample(g, *rot, geometry->midpoint());
      out.emplace_back(t.shape, std::move(r).take_data());
    }
    return out;
  };
  return d;
}

TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (cfg.batch < 1) throw ArgumentError("batch size must be at least 1");
  if (cfg.epochs < 1) throw ArgumentError("epochs must be at least 1");
  if (cfg.patience < 0) throw ArgumentError("patience must not be negative");
  if (train_set.size() == 0 || val_set.size() == 0) {
    throw ArgumentError("training needs non-empty train and validation sets");
  }

  Rng seeds(cfg.seed);
  const std::uint64_t init_seed = seeds.next_u64();
  Rng order_rng(seeds.next_u64());
  Rng aug_rng(seeds.next_u64());

  std::vector<float> params = model.init_params(init_seed);
  std::vector<float> grads(params.size());
  TrainResult result;
  result.adam = AdamState(params.size(), cfg.lr);

  Items train_items;
  if (!cfg.augment) train_items = materialize(train_set);
  const Items val_items = materialize(val_set);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = INFINITY;
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      std::vector<Tensor<float>> batch;
      if (cfg.augment) {
        Items drawn;
        for (std::size_t i : idx) {
          const grid::Rotation rot = cfg.octahedral_only ? grid::random_octahedral_rotation(aug_rng)
                                                         : grid::random_rotation(aug_rng);
          drawn.push_back(train_set.inputs(i, &rot));
        }
        std::vector<std::size_t> local(idx.size());
        std::iota(local.begin(), local.end(), std::size_t{0});
        batch = make_batch(drawn, local);
      } else {
        batch = make_batch(train_items, idx);
      }
      std::vector<float> target;
      for (std::size_t i : idx) target.push_back(static_cast<float>(train_set.labels[i]));

      const Tensor<float> pred = model.forward(batch, params);
      Tensor<float> dpred(pred.shape);
      const double loss = mse_loss<float>(pred.data, target, dpred.data);
      if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch), epoch);
      sum += loss * static_cast<double>(idx.size());

      std::fill(grads.begin(), grads.end(), 0.0f);
      model.backward(dpred, params, grads);
      try {
        adam_step(params, grads, result.adam);
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " at epoch " + std::to_string(epoch), epoch);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(order.size());
    rec.val_loss = mse(predict_items(model, params, val_items, cfg.batch), val_set.labels);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch), epoch);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    if (cfg.patience > 0 && stale >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
    if (cfg.target_train_loss && rec.train_loss < *cfg.target_train_loss) break;
  }
  result.best_val_loss = best;
  return result;
}

std::vector<double> predict(Model<float>& model, std::span<const float> params, const Dataset& data,
                            int batch) {
  if (batch < 1) throw ArgumentError("batch size must be at least 1");
  if (data.size() == 0) return {};
  return predict_items(model, params, materialize(data), batch);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss);
    out += buf;
  }
  return out;
}

}  // namespace voxgrid::nn
