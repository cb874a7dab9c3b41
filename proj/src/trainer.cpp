#include "planter/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "planter/io.hpp"
#include "planter/rng.hpp"

namespace planter::trainer {

namespace {

/// Contiguous record range [b0, b1) of a batch tensor, as its own tensor.
Tensor4 slice_rows(const Tensor4& src, int b0, int b1) {
    const Shape4 s = src.shape();
    Tensor4 out({b1 - b0, s.c, s.h, s.w});
    const std::size_t row = std::size_t(s.c) * s.h * s.w;
    std::copy(src.data() + std::size_t(b0) * row, src.data() + std::size_t(b1) * row, out.data());
    return out;
}

void check_teacher(const model::PlantableNetwork& net, const model::PlantableNetwork& teacher) {
    const auto& s = net.spec();
    const auto& t = teacher.spec();
    if (t.input_channels != s.input_channels || t.input_size != s.input_size ||
        t.classes != s.classes)
        throw std::invalid_argument("train: teacher geometry " + std::to_string(t.input_size) +
                                    "/" + std::to_string(t.classes) +
                                    " does not match the student's");
}

}  // namespace

void LrSchedule::validate() const {
    if (!(factor > 0.0 && factor <= 1.0))
        throw std::invalid_argument("schedule: factor must be in (0, 1]");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 0) throw std::invalid_argument("schedule: negative milestone");
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw std::invalid_argument("schedule: milestones must be ascending");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("train: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    schedule.validate();
    if (kd) kd->validate();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
    double lr = cfg.learning_rate;
    for (int m : cfg.schedule.milestones)
        if (m <= epoch) lr *= cfg.schedule.factor;
    return lr;
}

Sgd::Sgd(double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("sgd: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight_decay must be >= 0");
}

void Sgd::step(std::vector<model::ParamTensor>& params, const std::vector<const Tensor4*>& grads,
               double lr) {
    if (grads.size() != params.size())
        throw std::invalid_argument("sgd: " + std::to_string(grads.size()) + " gradients for " +
                                    std::to_string(params.size()) + " parameter tensors");
    if (velocity_.empty()) velocity_.resize(params.size());
    if (velocity_.size() != params.size())
        throw std::invalid_argument("sgd: parameter set changed under the optimizer");

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.any_trainable()) continue;
        const Tensor4& g = *grads[i];
        if (g.size() != p.value.size())
            throw std::invalid_argument("sgd: gradient shape mismatch for " + p.name);
        auto& v = velocity_[i];
        if (v.empty()) v.assign(p.value.size(), 0.0);
        if (v.size() != p.value.size())
            throw std::invalid_argument("sgd: " + p.name + " changed shape under the optimizer");

        for (std::size_t e = 0; e < p.value.size(); ++e) {
            if (p.frozen[e]) continue;
            const double adjusted = g[e] + weight_decay_ * p.value[e];
            v[e] = momentum_ * v[e] + adjusted;
            p.value[e] -= lr * v[e];
        }
    }
}

TeacherCache::TeacherCache(const model::PlantableNetwork& teacher, const Tensor4& images,
                           int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("TeacherCache: batch_size must be >= 1");
    const int n = images.shape().n;
    const int classes = teacher.spec().classes;
    logits_ = Tensor4({n, classes, 1, 1});
    for (int b0 = 0; b0 < n; b0 += batch_size) {
        const int b1 = std::min(n, b0 + batch_size);
        const Tensor4 out = teacher.forward(slice_rows(images, b0, b1));
        std::copy(out.data(), out.data() + out.size(),
                  logits_.data() + std::size_t(b0) * classes);
    }
}

Tensor4 TeacherCache::rows(const std::vector<int>& indices) const {
    const int classes = logits_.shape().c;
    Tensor4 out({int(indices.size()), classes, 1, 1});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= logits_.shape().n)
            throw std::out_of_range("TeacherCache: row " + std::to_string(src));
        std::copy(logits_.data() + std::size_t(src) * classes,
                  logits_.data() + std::size_t(src + 1) * classes,
                  out.data() + i * classes);
    }
    return out;
}

double TrainResult::final_val_loss() const {
    if (diverged || log.empty()) return std::numeric_limits<double>::infinity();
    return log.back().val_loss;
}

std::string TrainResult::csv() const {
    std::string out = "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + ',' + io::format_double(e.lr) + ',' +
               io::format_double(e.train_loss) + ',' + io::format_double(e.train_accuracy) + ',' +
               io::format_double(e.val_loss) + ',' + io::format_double(e.val_accuracy) + '\n';
    }
    return out;
}

EvalResult evaluate(const model::PlantableNetwork& net, const data::LabeledDataset& ds,
                    const Tensor4* teacher_logits, const distill::LossConfig* kd,
                    int batch_size) {
    if (ds.size() < 1) throw std::invalid_argument("evaluate: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    if ((teacher_logits == nullptr) != (kd == nullptr))
        throw std::invalid_argument("evaluate: teacher logits and loss config come together");
    if (teacher_logits && teacher_logits->shape().n != ds.size())
        throw std::invalid_argument("evaluate: teacher logits cover " +
                                    std::to_string(teacher_logits->shape().n) + " of " +
                                    std::to_string(ds.size()) + " samples");

    const int n = ds.size();
    double loss_sum = 0.0, ce_sum = 0.0, kl_sum = 0.0;
    long correct = 0;
    for (int b0 = 0; b0 < n; b0 += batch_size) {
        const int b1 = std::min(n, b0 + batch_size);
        const Tensor4 logits = net.forward(slice_rows(ds.images, b0, b1));
        const std::vector<int> labels(ds.labels.begin() + b0, ds.labels.begin() + b1);

        const double ce = distill::cross_entropy_value(logits, labels);
        double kl = 0.0, loss = ce;
        if (kd) {
            kl = distill::kl_value(slice_rows(*teacher_logits, b0, b1), logits, kd->kl);
            loss = kd->lambda * ce + (1.0 - kd->lambda) * kl;
        }
        const double w = b1 - b0;
        loss_sum += loss * w;
        ce_sum += ce * w;
        kl_sum += kl * w;
        correct += distill::correct_count(logits, labels);
    }

    EvalResult out;
    out.loss = loss_sum / n;
    out.ce = ce_sum / n;
    out.kl = kl_sum / n;
    out.accuracy = double(correct) / n;
    return out;
}

TrainResult train(model::PlantableNetwork& net, const model::PlantableNetwork* teacher,
                  const data::LabeledDataset& train_split, const data::LabeledDataset& val_split,
                  const TrainConfig& cfg) {
    cfg.validate();
    train_split.validate();
    val_split.validate();
    if (train_split.size() < 1 || val_split.size() < 1)
        throw std::invalid_argument("train: empty split");
    if (cfg.kd && cfg.kd->lambda < 1.0 && teacher == nullptr)
        throw std::invalid_argument("train: the distillation objective needs a teacher");
    if (teacher) check_teacher(net, *teacher);

    // lambda = 1 degenerates to plain CE, so a teacher is optional there
    const bool use_kd = cfg.kd.has_value() && teacher != nullptr;

    TrainResult out;
    try {
        std::optional<TeacherCache> cache_train, cache_val;
        if (use_kd) {
            cache_train.emplace(*teacher, train_split.images);
            cache_val.emplace(*teacher, val_split.images);
        }

        Sgd opt(cfg.momentum, cfg.weight_decay);
        const int n = train_split.size();
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double lr = lr_at_epoch(cfg, epoch);
            double loss_sum = 0.0;
            long correct = 0;

            const auto batches =
                data::batch_indices(n, cfg.batch_size, rng::derive(cfg.seed, epoch));
            for (const auto& batch : batches) {
                const auto mb = data::gather(train_split, batch);
                grad::GradTape tape;
                const auto bind = net.forward_on_tape(tape, mb.images);
                const grad::ValueId loss =
                    use_kd ? distill::combined_loss(tape, bind.logits, cache_train->rows(batch),
                                                    mb.labels, *cfg.kd)
                           : grad::softmax_cross_entropy(tape, bind.logits, mb.labels);
                tape.backward(loss);

                loss_sum += as_scalar(tape.value(loss)) * double(batch.size());
                correct += distill::correct_count(tape.value(bind.logits), mb.labels);

                std::vector<const Tensor4*> grads;
                grads.reserve(bind.param_ids.size());
                for (const auto id : bind.param_ids) grads.push_back(&tape.grad(id));
                opt.step(net.params(), grads, lr);

                // overflowed weights can hide behind dead relus, so forward
                // passes alone cannot be trusted to notice them
                for (const auto& p : net.params()) p.value.require_finite(p.name.c_str());
            }

            const EvalResult ev =
                evaluate(net, val_split, use_kd ? &cache_val->all() : nullptr,
                         use_kd ? &*cfg.kd : nullptr);
            out.log.push_back({epoch, lr, loss_sum / n, double(correct) / n, ev.loss,
                               ev.accuracy});
        }
    } catch (const NonFiniteError&) {
        out.diverged = true;
    }
    return out;
}

}  // namespace planter::trainer
