#include "isd/losses.hpp"

#include <cmath>
#include <string>

#include "isd/errors.hpp"

namespace isd {

namespace {

Tensor as_rows(const Tensor& t) { return t.rank() == 1 ? reshape(t, {1, t.cols()}) : t; }

Tensor frozen(const Tensor& t) { return t.requires_grad() ? t.detach() : t; }

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw NumericDomainError("temperature must be positive and finite, got " + std::to_string(temperature));
  }
}

void check_anchors(const Tensor& queries, const Tensor& anchors) {
  if (anchors.rank() != 2) throw DimensionError("anchors must be an [n x d] matrix, got " + shape_to_string(anchors.shape()));
  if (anchors.rows() < 2) throw ContractError("degenerate distribution: need at least 2 anchors");
  if (queries.cols() != anchors.cols()) {
    throw DimensionError("query width " + std::to_string(queries.cols()) + " does not match anchor width " +
                         std::to_string(anchors.cols()));
  }
}

// Restores the caller's rank: a single query yields a length-n result.
Tensor match_rank(const Tensor& result, const Tensor& query) {
  return query.rank() == 1 ? reshape(result, {result.cols()}) : result;
}

}  // namespace

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::isd: return "isd";
    case Objective::moco: return "moco";
    case Objective::byol: return "byol";
  }
  return "?";
}

Objective parse_objective(const std::string& name) {
  if (name == "isd") return Objective::isd;
  if (name == "moco") return Objective::moco;
  if (name == "byol") return Objective::byol;
  throw ContractError("unknown objective '" + name + "' (expected isd, moco or byol)");
}

Tensor similarity_logits(const Tensor& queries, const Tensor& anchors, double temperature) {
  check_temperature(temperature);
  check_anchors(queries, anchors);
  const Tensor keys = l2_normalize(frozen(anchors));
  const Tensor logits = scale(matmul(l2_normalize(as_rows(queries)), transpose(keys)), 1.0 / temperature);
  return match_rank(logits, queries);
}

Tensor anchor_distribution(const Tensor& queries, const Tensor& anchors, double temperature) {
  return softmax(similarity_logits(queries, anchors, temperature));
}

Tensor distillation_loss(const Tensor& target, const Tensor& student, const Tensor& anchors, double temperature) {
  const Tensor log_p = as_rows(log_softmax(similarity_logits(student, anchors, temperature)));
  const Tensor weights = as_rows(frozen(target));
  if (weights.shape() != log_p.shape()) {
    throw DimensionError("target distribution " + shape_to_string(target.shape()) + " does not match " +
                         shape_to_string(log_p.shape()));
  }
  return scale(sum(mul(weights, log_p)), -1.0 / static_cast<double>(log_p.rows()));
}

Tensor isd_loss(const Tensor& teacher_query, const Tensor& student_query, const Tensor& anchors,
                double temperature) {
  if (teacher_query.shape() != student_query.shape()) {
    throw DimensionError("isd_loss: teacher " + shape_to_string(teacher_query.shape()) + " vs student " +
                         shape_to_string(student_query.shape()));
  }
  const Tensor p_t = anchor_distribution(frozen(teacher_query), anchors, temperature);
  return distillation_loss(p_t, student_query, anchors, temperature);
}

Tensor isd_kl_loss(const Tensor& teacher_query, const Tensor& student_query, const Tensor& anchors,
                   double temperature) {
  if (teacher_query.shape() != student_query.shape()) {
    throw DimensionError("isd_kl_loss: teacher " + shape_to_string(teacher_query.shape()) + " vs student " +
                         shape_to_string(student_query.shape()));
  }
  const Tensor log_p_t = as_rows(log_softmax(similarity_logits(frozen(teacher_query), anchors, temperature)));
  const Tensor p_t = as_rows(softmax(similarity_logits(frozen(teacher_query), anchors, temperature)));
  const Tensor log_p_s = as_rows(log_softmax(similarity_logits(student_query, anchors, temperature)));
  return scale(sum(mul(p_t, sub(log_p_t, log_p_s))), 1.0 / static_cast<double>(log_p_s.rows()));
}

Tensor moco_loss(const Tensor& query, const Tensor& positive, const Tensor& anchors, double temperature) {
  if (query.shape() != positive.shape()) {
    throw DimensionError("moco_loss: query " + shape_to_string(query.shape()) + " vs positive " +
                         shape_to_string(positive.shape()));
  }
  check_temperature(temperature);
  check_anchors(query, anchors);
  const Tensor q = l2_normalize(as_rows(query));
  const Tensor k = l2_normalize(as_rows(frozen(positive)));
  const Tensor positive_logit = scale(row_sum(mul(q, k)), 1.0 / temperature);
  const Tensor negative_logits = scale(matmul(q, transpose(l2_normalize(frozen(anchors)))), 1.0 / temperature);
  const Tensor log_p = log_softmax(concat_cols(positive_logit, negative_logits));

  const auto rows = log_p.rows(), cols = log_p.cols();
  std::vector<double> one_hot(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) one_hot[r * cols] = 1.0;
  const Tensor target = Tensor::from({rows, cols}, std::move(one_hot));
  return scale(sum(mul(target, log_p)), -1.0 / static_cast<double>(rows));
}

Tensor byol_loss(const Tensor& student_pred, const Tensor& teacher_embedding) {
  if (student_pred.shape() != teacher_embedding.shape()) {
    throw DimensionError("byol_loss: student " + shape_to_string(student_pred.shape()) + " vs teacher " +
                         shape_to_string(teacher_embedding.shape()));
  }
  const Tensor p = l2_normalize(as_rows(student_pred));
  const Tensor z = l2_normalize(as_rows(frozen(teacher_embedding)));
  return add_scalar(scale(mean(row_sum(mul(p, z))), -2.0), 2.0);
}

double mean_entropy(const Tensor& distribution) {
  const auto rows = distribution.rows(), cols = distribution.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double p = distribution.at(r * cols + j);
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(rows);
}

}  // namespace isd
