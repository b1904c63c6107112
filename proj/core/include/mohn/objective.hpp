#pragma once

#include <span>
#include <vector>

#include "mohn/memory_bank.hpp"
#include "mohn/numeric.hpp"

namespace mohn {

struct LossConfig {
  double temperature = 0.2;
  // Weight of the key-view term; the query-view term gets 1 - view_weight.
  double view_weight = 0.1;
  // Fraction of the bank kept for the key-view denominator.
  double hard_fraction = 0.2;
  SelectionBasis basis = SelectionBasis::query;
};

void validate(const LossConfig& cfg);  // ConfigInvalid

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> grad_q;
};

// Softmax cross-entropy against the positive logit:
//   loss = log( sum_j exp(l_j) ) - l_0,   l_0 = q.k_pos / t,  l_i = q.neg_i / t.
// Inputs must be unit-norm.  Gradient is taken with respect to q only;
// the key and the negatives are treated as constants.
InfoNceResult info_nce(std::span<const double> q, std::span<const double> k_pos,
                       const Matrix& negatives, double temperature);

struct LossOutput {
  double total = 0.0;
  double query_term = 0.0;
  double key_term = 0.0;
  std::vector<double> grad_q;  // the only gradient this objective produces
};

// total = (1 - view_weight) * query term + view_weight * key term, where the
// key term anchors on k: its positive logit is k.q and its negatives are
// k.neg_i.  Only the positive logit of the key term depends on q, so its
// gradient contribution is (softmax_0 - 1) * k / t.
LossOutput dual_view_loss(std::span<const double> q, std::span<const double> k,
                          const Matrix& negatives, const LossConfig& cfg);

// Same shape as dual_view_loss, but the query term runs over every filled
// bank row while the key term keeps only the ceil(hard_fraction * filled)
// rows farthest (smallest cosine) from the configured anchor.
LossOutput filtered_dual_view_loss(std::span<const double> q,
                                   std::span<const double> k,
                                   const MemoryBank& bank,
                                   const LossConfig& cfg);

struct BatchLoss {
  double total = 0.0;       // batch means
  double query_term = 0.0;
  double key_term = 0.0;
  Matrix grad_q;            // rows already scaled by 1/batch
};

BatchLoss batch_filtered_loss(const Matrix& q, const Matrix& k,
                              const MemoryBank& bank, const LossConfig& cfg);

}  // namespace mohn
