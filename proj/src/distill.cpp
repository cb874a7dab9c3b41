#include "planter/distill.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "planter/kernels.hpp"

namespace planter::distill {

namespace {

void check_logit_pair(const Shape4& teacher, const Shape4& student) {
    if (!(teacher == student))
        throw std::invalid_argument("kl_divergence: teacher " + teacher.str() + " vs student " +
                                    student.str());
    if (teacher.h != 1 || teacher.w != 1)
        throw std::invalid_argument("kl_divergence: logits must be (n,classes,1,1), got " +
                                    teacher.str());
}

/// log-softmax of every row of an (n,c,1,1) tensor.
std::vector<double> log_probs(const Tensor4& logits) {
    const int n = logits.shape().n, c = logits.shape().c;
    std::vector<double> lp(std::size_t(n) * c);
    for (int b = 0; b < n; ++b)
        kernels::log_softmax_row(logits.data() + std::size_t(b) * c, lp.data() + std::size_t(b) * c,
                                 c);
    return lp;
}

}  // namespace

void LossConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("LossConfig: lambda must lie in [0,1], got " +
                                    std::to_string(lambda));
}

grad::ValueId kl_divergence(grad::GradTape& t, grad::ValueId student_logits,
                            const Tensor4& teacher_logits, KlVariant variant) {
    const Tensor4& z = t.value(student_logits);
    check_logit_pair(teacher_logits.shape(), z.shape());
    teacher_logits.require_finite("kl_divergence teacher");
    const int n = z.shape().n, c = z.shape().c;

    auto lt = std::make_shared<std::vector<double>>(log_probs(teacher_logits));
    auto ls = std::make_shared<std::vector<double>>(log_probs(z));

    double total = 0.0;
    for (std::size_t i = 0; i < lt->size(); ++i) {
        const double pt = std::exp((*lt)[i]);
        total += variant == KlVariant::standard ? pt * ((*lt)[i] - (*ls)[i]) : pt * (*ls)[i];
    }
    Tensor4 out = Tensor4::scalar(total / n);
    out.require_finite("kl_divergence");

    auto backprop = [student_logits, lt, ls, n, c, variant](grad::GradTape& tape, int self) {
        const double up = tape.grad_mut(self)[0];
        if (up == 0.0) return;
        const double scale = up / n;
        Tensor4& dz = tape.grad_mut(student_logits);
        for (std::size_t i = 0; i < lt->size(); ++i) {
            const double diff = std::exp((*ls)[i]) - std::exp((*lt)[i]);  // p^S - p^L
            dz[i] += scale * (variant == KlVariant::standard ? diff : -diff);
        }
        (void)c;
    };
    return t.record(std::move(out), backprop, "kl_divergence");
}

grad::ValueId combined_loss(grad::GradTape& t, grad::ValueId student_logits,
                            const Tensor4& teacher_logits, const std::vector<int>& labels,
                            const LossConfig& cfg) {
    cfg.validate();
    auto ce = grad::softmax_cross_entropy(t, student_logits, labels);
    auto kl = kl_divergence(t, student_logits, teacher_logits, cfg.kl);
    return grad::scale_add(t, cfg.lambda, ce, 1.0 - cfg.lambda, kl);
}

double cross_entropy_value(const Tensor4& logits, const std::vector<int>& labels) {
    const int n = logits.shape().n, c = logits.shape().c;
    if (int(labels.size()) != n)
        throw std::invalid_argument("cross_entropy_value: batch/label count mismatch");
    std::vector<double> lp(c);
    double total = 0.0;
    for (int b = 0; b < n; ++b) {
        if (labels[b] < 0 || labels[b] >= c)
            throw std::invalid_argument("cross_entropy_value: label out of range");
        kernels::log_softmax_row(logits.data() + std::size_t(b) * c, lp.data(), c);
        total -= lp[labels[b]];
    }
    return total / n;
}

double kl_value(const Tensor4& teacher_logits, const Tensor4& student_logits, KlVariant variant) {
    check_logit_pair(teacher_logits.shape(), student_logits.shape());
    const int n = teacher_logits.shape().n;
    const auto lt = log_probs(teacher_logits);
    const auto ls = log_probs(student_logits);
    double total = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
        const double pt = std::exp(lt[i]);
        total += variant == KlVariant::standard ? pt * (lt[i] - ls[i]) : pt * ls[i];
    }
    return total / n;
}

double combined_value(const Tensor4& student_logits, const Tensor4& teacher_logits,
                      const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    return cfg.lambda * cross_entropy_value(student_logits, labels) +
           (1.0 - cfg.lambda) * kl_value(teacher_logits, student_logits, cfg.kl);
}

int correct_count(const Tensor4& logits, const std::vector<int>& labels) {
    const int n = logits.shape().n, c = logits.shape().c;
    if (int(labels.size()) != n)
        throw std::invalid_argument("correct_count: batch/label count mismatch");
    int hits = 0;
    for (int b = 0; b < n; ++b) {
        const double* row = logits.data() + std::size_t(b) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[b]) ++hits;
    }
    return hits;
}

}  // namespace planter::distill
