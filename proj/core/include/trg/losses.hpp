#pragma once

#include <cstdint>
#include <span>

#include "trg/graph.hpp"
#include "trg/tensor.hpp"

namespace trg {

// Bias-free linear map from student token width to teacher token width,
// trained together with the student.
class Projection {
 public:
  Projection() = default;
  Projection(std::size_t student_dim, std::size_t teacher_dim, std::uint64_t seed);
  explicit Projection(Tensor weight);

  Tensor apply(const Tensor& student_tokens) const;
  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }
  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }

 private:
  Tensor weight_;  // [D_s x D_t]
};

struct LossBreakdown {
  double ce_term = 0.0;
  double kd_term = 0.0;
  double logit_term = 0.0;
  double inner_term = 0.0;
  double local_term = 0.0;
  double global_term = 0.0;
  double total = 0.0;

  double lambda = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
  double tau_g = 0.0;
};

// softmax(z / tau) per row.
Tensor soften(const Tensor& logits, double tau);

// (1/N) sum_i KL(pS_i || pT_i), student distribution first.
Tensor kd_loss(const Tensor& p_student, const Tensor& p_teacher, double clamp_eps = 1e-12);

struct LogitLossParts {
  Tensor ce;
  Tensor kd;
  Tensor total;  // ce + lambda * kd (* tau^2 when scaled)
};

LogitLossParts logit_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                          std::span<const int> labels, double tau, double lambda,
                          bool tau_squared = false);

enum class LocalSoftmax {
  full_row,        // softmax over every column, zeros included
  neighbors_only,  // columns outside both graphs' neighbor sets are dropped
};

// sum_i KL(softmax_j(A^S_ij) || softmax_j(A^T_ij)).
Tensor local_loss(const TokenGraph& student, const TokenGraph& teacher,
                  LocalSoftmax mode = LocalSoftmax::full_row);
// Same on raw adjacency matrices (full-row softmax).
Tensor local_loss(const Tensor& adjacency_student, const Tensor& adjacency_teacher);

// Cosine similarity between Proj(student token i) and teacher token j.
Tensor token_similarity(const Tensor& student_tokens, const Tensor& teacher_tokens,
                        const Projection& proj);

// InfoNCE with the positive for row i at column i; every other column of
// the row is a negative.
Tensor global_loss(const Tensor& similarity, double tau_g);

// softmax_rows(F F^T / sqrt(D)) for [N x D], or per instance for [B x N x D].
Tensor contextual_similarity(const Tensor& features);

// MSE between teacher and student contextual similarities, averaged over
// instances when batched.
Tensor inner_loss(const Tensor& cs_teacher, const Tensor& cs_student);

struct LossTerms {
  Tensor logit;   // required
  Tensor inner;   // undefined when the term is removed
  Tensor local;
  Tensor global;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown breakdown;
};

// logit + alpha * inner + beta * local + gamma * global. Removed terms are
// absent from the graph; zero coefficients keep the term with weight 0.
TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace trg
