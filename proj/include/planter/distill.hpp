#pragma once

#include <vector>

#include "planter/tape.hpp"
#include "planter/tensor.hpp"

namespace planter::distill {

/// How the distillation divergence is computed from teacher logits z^L and
/// student logits z^S (softmax probabilities p^L, p^S):
///   standard    mean_b sum_i p^L_i (log p^L_i - log p^S_i), the usual
///               forward KL with the teacher as the target. Default.
///   as_printed  mean_b sum_i p^L_i log p^S_i. Kept selectable for
///               comparison runs; its gradient is the exact negative of the
///               standard form's.
enum class KlVariant { standard, as_printed };

struct LossConfig {
    double lambda = 0.0;  // weight on the hard-label term; 1-lambda on the KL term
    KlVariant kl = KlVariant::standard;

    void validate() const;  // throws unless 0 <= lambda <= 1
};

/// Distillation divergence between fixed teacher logits and the student's
/// logits node, mean over the batch. The teacher tensor is a constant: no
/// gradient ever flows to it.
grad::ValueId kl_divergence(grad::GradTape& t, grad::ValueId student_logits,
                            const Tensor4& teacher_logits,
                            KlVariant variant = KlVariant::standard);

/// lambda * CE(student, labels) + (1 - lambda) * KL(teacher, student).
grad::ValueId combined_loss(grad::GradTape& t, grad::ValueId student_logits,
                            const Tensor4& teacher_logits, const std::vector<int>& labels,
                            const LossConfig& cfg);

// Tape-free counterparts for evaluation loops; same numbers as the ops above.
double cross_entropy_value(const Tensor4& logits, const std::vector<int>& labels);
double kl_value(const Tensor4& teacher_logits, const Tensor4& student_logits,
                KlVariant variant = KlVariant::standard);
double combined_value(const Tensor4& student_logits, const Tensor4& teacher_logits,
                      const std::vector<int>& labels, const LossConfig& cfg);

/// Count of rows whose argmax logit equals the label (first index wins ties).
int correct_count(const Tensor4& logits, const std::vector<int>& labels);

}  // namespace planter::distill
