#pragma once

#include <string>

#include "isd/tensor.hpp"

namespace isd {

enum class Objective { isd, moco, byol };

const char* to_string(Objective objective);
Objective parse_objective(const std::string& name);

struct LossConfig {
  Objective objective = Objective::isd;
  /// Softmax temperature over cosine similarities; ignored by BYOL.
  double temperature = 0.02;
  bool operator==(const LossConfig&) const = default;
};

// All losses take either single embeddings ([d]) or batches ([b x d]) and
// average over rows. Teacher-side inputs are detached internally, so their
// gradient is identically zero.

/// cos(query_r, anchor_i) / tau for every row r and anchor i.
Tensor similarity_logits(const Tensor& queries, const Tensor& anchors, double temperature);

/// Softmax over anchors of cosine similarity / tau. Shape [n] or [b x n].
Tensor anchor_distribution(const Tensor& queries, const Tensor& anchors, double temperature);

/// Mean over rows of -sum_i target(i) log p_s(i), where p_s is the student's
/// anchor distribution. `target` is a fixed distribution per row.
Tensor distillation_loss(const Tensor& target, const Tensor& student, const Tensor& anchors, double temperature);

/// Cross-entropy H(p_t, p_s) from the teacher's to the student's anchor
/// distribution. Same student gradient as KL(p_t || p_s).
Tensor isd_loss(const Tensor& teacher_query, const Tensor& student_query, const Tensor& anchors,
                double temperature);

/// KL(p_t || p_s); differs from isd_loss by the teacher entropy H(p_t).
Tensor isd_kl_loss(const Tensor& teacher_query, const Tensor& student_query, const Tensor& anchors,
                   double temperature);

/// InfoNCE with the positive key in slot 0 followed by the anchors as negatives.
Tensor moco_loss(const Tensor& query, const Tensor& positive, const Tensor& anchors, double temperature);

/// 2 - 2 cos(student_pred, teacher_emb), averaged over rows. Non-symmetric.
Tensor byol_loss(const Tensor& student_pred, const Tensor& teacher_embedding);

/// Mean Shannon entropy (nats) of the rows of a distribution tensor.
double mean_entropy(const Tensor& distribution);

}  // namespace isd
