#include "trg/losses.hpp"

#include <cmath>
#include <random>

#include "trg/errors.hpp"
#include "trg/ops.hpp"

namespace trg {

Projection::Projection(std::size_t student_dim, std::size_t teacher_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(student_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(student_dim * teacher_dim);
  for (auto& x : w) x = dist(rng);
  weight_ = Tensor({student_dim, teacher_dim}, std::move(w), true);
}

Projection::Projection(Tensor weight) : weight_(std::move(weight)) {
  if (weight_.rank() != 2) throw DimensionError("projection weight must be a matrix");
}

Tensor Projection::apply(const Tensor& student_tokens) const {
  return ops::matmul(student_tokens, weight_);
}

Tensor soften(const Tensor& logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softening temperature tau must be positive");
  return ops::softmax_rows(ops::scale(logits, 1.0 / tau));
}

Tensor kd_loss(const Tensor& p_student, const Tensor& p_teacher, double clamp_eps) {
  return ops::kl_rows(p_student, p_teacher, clamp_eps);
}

LogitLossParts logit_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                          std::span<const int> labels, double tau, double lambda,
                          bool tau_squared) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw DimensionError("logit_loss: student logits " + shape_str(student_logits.shape()) +
                         " vs teacher logits " + shape_str(teacher_logits.shape()));
  }
  LogitLossParts parts;
  parts.ce = ops::cross_entropy(student_logits, labels);
  parts.kd = kd_loss(soften(student_logits, tau), soften(teacher_logits, tau));
  const double weight = tau_squared ? lambda * tau * tau : lambda;
  parts.total = ops::add(parts.ce, ops::scale(parts.kd, weight));
  return parts;
}

Tensor local_loss(const Tensor& adjacency_student, const Tensor& adjacency_teacher) {
  if (adjacency_student.shape() != adjacency_teacher.shape() || adjacency_student.rank() != 2) {
    throw UsageError("local_loss: adjacency sizes differ, " + shape_str(adjacency_student.shape()) +
                     " vs " + shape_str(adjacency_teacher.shape()));
  }
  const double rows = static_cast<double>(adjacency_student.dim(0));
  return ops::scale(ops::kl_rows(ops::softmax_rows(adjacency_student),
                                 ops::softmax_rows(adjacency_teacher)),
                    rows);
}

Tensor local_loss(const TokenGraph& student, const TokenGraph& teacher, LocalSoftmax mode) {
  if (mode == LocalSoftmax::full_row) return local_loss(student.adjacency, teacher.adjacency);
  const auto& ms = student.neighbor_mask;
  const auto& mt = teacher.neighbor_mask;
  if (ms.size() != mt.size() || student.adjacency.shape() != teacher.adjacency.shape()) {
    throw UsageError("local_loss: graphs have different node counts");
  }
  const std::size_t s = ms.size();
  // Large finite offset drives excluded columns to exactly 0 after softmax.
  std::vector<double> offset(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      if (!ms(i, j) && !mt(i, j)) offset[i * s + j] = -1e30;
  const Tensor off({s, s}, std::move(offset));
  return ops::scale(ops::kl_rows(ops::softmax_rows(ops::add(student.adjacency, off)),
                                 ops::softmax_rows(ops::add(teacher.adjacency, off))),
                    static_cast<double>(s));
}

Tensor token_similarity(const Tensor& student_tokens, const Tensor& teacher_tokens,
                        const Projection& proj) {
  if (student_tokens.rank() != 2 || teacher_tokens.rank() != 2 ||
      student_tokens.dim(0) != teacher_tokens.dim(0)) {
    throw DimensionError("token_similarity: student " + shape_str(student_tokens.shape()) +
                         " vs teacher " + shape_str(teacher_tokens.shape()));
  }
  if (student_tokens.dim(1) != proj.in_dim() || teacher_tokens.dim(1) != proj.out_dim()) {
    throw DimensionError("token_similarity: projection " + shape_str(proj.weight().shape()) +
                         " does not map " + shape_str(student_tokens.shape()) + " onto " +
                         shape_str(teacher_tokens.shape()));
  }
  auto s = ops::row_normalize(proj.apply(student_tokens));
  auto t = ops::row_normalize(teacher_tokens);
  return ops::matmul(s, ops::transpose(t));
}

Tensor global_loss(const Tensor& similarity, double tau_g) {
  if (!(tau_g > 0.0)) throw ConfigError("graph temperature tau_g must be positive");
  if (similarity.rank() != 2 || similarity.dim(0) != similarity.dim(1)) {
    throw DimensionError("global_loss: similarity must be square, got " + shape_str(similarity.shape()));
  }
  auto log_p = ops::log_softmax_rows(ops::scale(similarity, 1.0 / tau_g));
  return ops::scale(ops::sum(ops::diagonal(log_p)), -1.0);
}

Tensor contextual_similarity(const Tensor& features) {
  if (features.rank() == 2) {
    auto batched = ops::reshape(features, {1, features.dim(0), features.dim(1)});
    auto out = contextual_similarity(batched);
    return ops::reshape(out, {features.dim(0), features.dim(0)});
  }
  if (features.rank() != 3) {
    throw DimensionError("contextual_similarity: expected [N x D] or [B x N x D], got " +
                         shape_str(features.shape()));
  }
  const double d = static_cast<double>(features.dim(2));
  auto gram = ops::bmm(features, ops::transpose_last2(features));
  return ops::softmax_rows(ops::scale(gram, 1.0 / std::sqrt(d)));
}

Tensor inner_loss(const Tensor& cs_teacher, const Tensor& cs_student) {
  if (cs_teacher.shape() != cs_student.shape()) {
    throw UsageError("inner_loss: contextual similarity shapes differ, " +
                     shape_str(cs_teacher.shape()) + " vs " + shape_str(cs_student.shape()));
  }
  // Every instance has the same N x N block, so the global mean equals the
  // mean of per-instance MSEs.
  return ops::mse(cs_teacher, cs_student);
}

TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights) {
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0) {
    throw ConfigError("loss coefficients must be non-negative");
  }
  if (!terms.logit.defined()) throw UsageError("total_loss: logit term is required");
  TotalLoss out;
  auto& b = out.breakdown;
  b.alpha = weights.alpha;
  b.beta = weights.beta;
  b.gamma = weights.gamma;
  b.logit_term = terms.logit.item();
  out.value = terms.logit;
  auto fold = [&](const Tensor& term, double coeff, double& slot) {
    if (!term.defined()) return;
    slot = term.item();
    out.value = ops::add(out.value, ops::scale(term, coeff));
  };
  fold(terms.inner, weights.alpha, b.inner_term);
  fold(terms.local, weights.beta, b.local_term);
  fold(terms.global, weights.gamma, b.global_term);
  b.total = out.value.item();
  return out;
}

}  // namespace trg
