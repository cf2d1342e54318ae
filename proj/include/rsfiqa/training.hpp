#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsfiqa/model.hpp"

namespace rsfiqa {

// eta_min + (eta_max - eta_min)(1 + cos(pi * epoch / T_max)) / 2, epoch from 0.
double cosine_lr(const RunConfig& config, std::size_t epoch);

// Adam with decoupled weight decay over every parameter of the set.
class AdamW {
 public:
  AdamW(const ParameterSet& params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  // Consumes the accumulated gradients; parameters without one are skipped.
  void step(double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<NamedParameter> params_;
  std::vector<Tensor> m_, v_;
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_srcc = 0.0;  // NaN when there is no usable validation split
  bool operator==(const EpochLog&) const = default;
};

struct Checkpoint {
  RunConfig config;
  MosNormalization normalization;
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
};

// Normalizes MOS over `train`, optimizes the model and keeps the parameters
// of the epoch with the best validation SRCC (the last epoch without one).
// NonFiniteLoss names the epoch and batch.
Checkpoint train(const RunConfig& config, std::span<const PreparedSample> train_set,
                 std::span<const PreparedSample> val_set, const TrainOptions& options = {});

Checkpoint snapshot(const RsfiqaModel& model, const MosNormalization& normalization);
// Builds a model from the embedded config and copies the stored parameters in.
std::unique_ptr<RsfiqaModel> restore_model(const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// CorruptCheckpoint for bad magic, version, byte order, checksum or layout.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model outputs in [0, 1].
std::vector<double> predict_unit(const RsfiqaModel& model, std::span<const PreparedSample> samples);
// (image_id, score in MOS units).
std::vector<std::pair<std::string, double>> predict_mos(const RsfiqaModel& model,
                                                        const MosNormalization& normalization,
                                                        std::span<const PreparedSample> samples);

}  // namespace rsfiqa
