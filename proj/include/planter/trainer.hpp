#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planter/data.hpp"
#include "planter/distill.hpp"
#include "planter/model.hpp"
#include "planter/tensor.hpp"

namespace planter::trainer {

/// Step decay: the rate is multiplied by `factor` once per milestone passed,
/// so lr(epoch) = base * factor^(number of milestones <= epoch).
struct LrSchedule {
    std::vector<int> milestones;  // ascending epoch indices
    double factor = 1.0;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int batch_size = 128;
    int epochs = 1;
    LrSchedule schedule;
    /// Set for distillation training; empty means plain cross-entropy. A
    /// teacher network is required whenever kd->lambda < 1.
    std::optional<distill::LossConfig> kd;
    std::uint64_t seed = 0;

    void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// SGD with classical momentum and weight decay folded into the gradient:
///   g' = g + weight_decay * w;  v = momentum * v + g';  w -= lr * v.
/// Frozen elements are skipped outright — no velocity, no decay, no update —
/// so they stay bit-identical for the optimizer's whole lifetime.
class Sgd {
public:
    Sgd(double momentum, double weight_decay);

    /// One update across all parameter tensors; grads[i] pairs with
    /// params[i]. Velocity buffers are created on first use and must keep
    /// their shapes afterwards.
    void step(std::vector<model::ParamTensor>& params, const std::vector<const Tensor4*>& grads,
              double lr);

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

/// Teacher logits for a fixed dataset, computed once up front. Rows come out
/// bitwise identical to a fresh teacher forward on the same samples (the
/// kernels treat samples independently), so caching never changes results.
class TeacherCache {
public:
    TeacherCache(const model::PlantableNetwork& teacher, const Tensor4& images,
                 int batch_size = 256);

    /// Logit rows for the given sample indices, in order, as (n, classes, 1, 1).
    Tensor4 rows(const std::vector<int>& indices) const;
    const Tensor4& all() const { return logits_; }

private:
    Tensor4 logits_;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // objective mean over the epoch's samples
    double train_accuracy = 0.0;
    double val_loss = 0.0;  // same objective on the validation split
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    /// True when an epoch aborted on non-finite values; the network is then
    /// unusable and the log stops at the failed epoch.
    bool diverged = false;

    double final_val_loss() const;  // +inf when diverged or never evaluated
    std::string csv() const;        // epoch,lr,train_loss,train_acc,val_loss,val_acc
};

struct EvalResult {
    double loss = 0.0;  // lambda*CE + (1-lambda)*KL, or plain CE without a teacher
    double ce = 0.0;
    double kl = 0.0;
    double accuracy = 0.0;
};

/// Mean objective/accuracy over a dataset, evaluated in batches. Pass
/// teacher logits (aligned with `ds`) plus a loss config for the distilled
/// objective; pass null for plain cross-entropy.
EvalResult evaluate(const model::PlantableNetwork& net, const data::LabeledDataset& ds,
                    const Tensor4* teacher_logits, const distill::LossConfig* kd,
                    int batch_size = 256);

/// Minibatch SGD over `train_split` with seeded per-epoch shuffling,
/// evaluating on `val_split` after every epoch. The teacher (when given) is
/// only ever run forward. Mutates `net` in place; frozen elements are
/// guaranteed untouched. Divergence (NaN/Inf anywhere in an epoch) stops
/// training and is reported instead of thrown.
TrainResult train(model::PlantableNetwork& net, const model::PlantableNetwork* teacher,
                  const data::LabeledDataset& train_split, const data::LabeledDataset& val_split,
                  const TrainConfig& cfg);

}  // namespace planter::trainer
