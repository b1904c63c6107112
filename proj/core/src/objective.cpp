#include "mohn/objective.hpp"

#include <cmath>
#include <string>

#include "mohn/error.hpp"

namespace mohn {

void validate(const LossConfig& cfg) {
  if (!(cfg.temperature > 0.0))
    throw Error(ErrorKind::config_invalid, "loss temperature must be > 0");
  if (!(cfg.view_weight >= 0.0 && cfg.view_weight <= 1.0))
    throw Error(ErrorKind::config_invalid, "view_weight must lie in [0, 1]");
  if (!(cfg.hard_fraction > 0.0 && cfg.hard_fraction <= 1.0))
    throw Error(ErrorKind::config_invalid, "hard_fraction must lie in (0, 1]");
}

namespace {

// Rows of a matrix, optionally routed through an index subset.
struct NegativeView {
  const Matrix* rows;
  const std::vector<std::size_t>* indices = nullptr;

  std::size_t count = 0;
  std::span<const double> row(std::size_t i) const {
    return rows->row(indices ? (*indices)[i] : i);
  }
};

void check_unit(std::span<const double> v, const char* what) {
  if (!is_unit_norm(v))
    throw Error(ErrorKind::not_normalized,
                std::string(what) + " must be unit-norm");
}

struct NceTerms {
  double loss = 0.0;
  std::vector<double> probs;  // softmax over [positive, negatives...]
};

// Shared kernel for both views: logits are dot products against the anchor,
// scaled by 1/temperature, with the positive at index 0.
NceTerms nce_terms(std::span<const double> anchor,
                   std::span<const double> positive, const NegativeView& view,
                   double temperature) {
  std::vector<double> logits(1 + view.count);
  logits[0] = dot(anchor, positive) / temperature;
  for (std::size_t i = 0; i < view.count; ++i)
    logits[1 + i] = dot(anchor, view.row(i)) / temperature;
  const double lse = log_sum_exp(logits);
  NceTerms terms;
  terms.loss = lse - logits[0];
  terms.probs.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j)
    terms.probs[j] = std::exp(logits[j] - lse);
  return terms;
}

// grad wrt anchor of nce_terms' loss: ((p0 - 1) * positive + sum p_i neg_i) / t.
std::vector<double> nce_grad_anchor(std::span<const double> positive,
                                    const NegativeView& view,
                                    const NceTerms& terms, double temperature) {
  std::vector<double> grad(positive.size(), 0.0);
  const double w0 = (terms.probs[0] - 1.0) / temperature;
  for (std::size_t c = 0; c < positive.size(); ++c) grad[c] = w0 * positive[c];
  for (std::size_t i = 0; i < view.count; ++i) {
    const auto neg = view.row(i);
    const double w = terms.probs[1 + i] / temperature;
    for (std::size_t c = 0; c < neg.size(); ++c) grad[c] += w * neg[c];
  }
  return grad;
}

LossOutput dual_view_from(std::span<const double> q, std::span<const double> k,
                          const NegativeView& query_view,
                          const NegativeView& key_view, const LossConfig& cfg) {
  const NceTerms query_terms = nce_terms(q, k, query_view, cfg.temperature);
  std::vector<double> grad_query =
      nce_grad_anchor(k, query_view, query_terms, cfg.temperature);

  // Key view: anchor k, positive q.  Negatives do not involve q, so only
  // the positive logit feeds the gradient.
  const NceTerms key_terms = nce_terms(k, q, key_view, cfg.temperature);
  const double w0 = (key_terms.probs[0] - 1.0) / cfg.temperature;

  LossOutput out;
  out.query_term = query_terms.loss;
  out.key_term = key_terms.loss;
  const double m = cfg.view_weight;
  out.total = (1.0 - m) * out.query_term + m * out.key_term;
  out.grad_q.resize(q.size());
  for (std::size_t c = 0; c < q.size(); ++c)
    out.grad_q[c] = (1.0 - m) * grad_query[c] + m * (w0 * k[c]);
  return out;
}

}  // namespace

InfoNceResult info_nce(std::span<const double> q, std::span<const double> k_pos,
                       const Matrix& negatives, double temperature) {
  if (!(temperature > 0.0))
    throw Error(ErrorKind::config_invalid, "temperature must be > 0");
  if (negatives.rows == 0)
    throw Error(ErrorKind::empty_input, "info_nce: need at least one negative");
  if (q.size() != k_pos.size() || negatives.cols != q.size())
    throw Error(ErrorKind::dimension_mismatch, "info_nce: dims disagree");
  check_unit(q, "q");
  check_unit(k_pos, "k_pos");
  for (std::size_t r = 0; r < negatives.rows; ++r)
    if (!is_unit_norm(negatives.row(r)))
      throw Error(ErrorKind::not_normalized,
                  "info_nce: negative row " + std::to_string(r) +
                      " is not unit-norm");

  const NegativeView view{&negatives, nullptr, negatives.rows};
  const NceTerms terms = nce_terms(q, k_pos, view, temperature);
  InfoNceResult result;
  result.loss = terms.loss;
  result.grad_q = nce_grad_anchor(k_pos, view, terms, temperature);
  return result;
}

LossOutput dual_view_loss(std::span<const double> q, std::span<const double> k,
                          const Matrix& negatives, const LossConfig& cfg) {
  validate(cfg);
  if (negatives.rows == 0)
    throw Error(ErrorKind::empty_input, "dual_view_loss: need at least one negative");
  if (q.size() != k.size() || negatives.cols != q.size())
    throw Error(ErrorKind::dimension_mismatch, "dual_view_loss: dims disagree");
  check_unit(q, "q");
  check_unit(k, "k");
  for (std::size_t r = 0; r < negatives.rows; ++r)
    if (!is_unit_norm(negatives.row(r)))
      throw Error(ErrorKind::not_normalized,
                  "dual_view_loss: negative row " + std::to_string(r) +
                      " is not unit-norm");

  const NegativeView view{&negatives, nullptr, negatives.rows};
  return dual_view_from(q, k, view, view, cfg);
}

LossOutput filtered_dual_view_loss(std::span<const double> q,
                                   std::span<const double> k,
                                   const MemoryBank& bank,
                                   const LossConfig& cfg) {
  validate(cfg);
  if (q.size() != k.size() || bank.dim != q.size())
    throw Error(ErrorKind::dimension_mismatch,
                "filtered_dual_view_loss: dims disagree");
  check_unit(q, "q");
  check_unit(k, "k");

  // Bank rows carry the unit-norm invariant already (enqueue enforces it),
  // so they are not re-checked per call.
  std::size_t f_n = static_cast<std::size_t>(
      std::ceil(cfg.hard_fraction * static_cast<double>(bank.filled)));
  if (f_n > bank.filled) f_n = bank.filled;

  const auto anchor = cfg.basis == SelectionBasis::query ? q : k;
  const NegativeSelection selection =
      select_hard_negatives(bank, anchor, f_n, cfg.basis);

  const NegativeView query_view{&bank.storage, nullptr, bank.filled};
  const NegativeView key_view{&bank.storage, &selection.indices,
                              selection.indices.size()};
  return dual_view_from(q, k, query_view, key_view, cfg);
}

BatchLoss batch_filtered_loss(const Matrix& q, const Matrix& k,
                              const MemoryBank& bank, const LossConfig& cfg) {
  if (q.rows == 0) throw Error(ErrorKind::empty_batch, "batch_filtered_loss: empty batch");
  if (q.rows != k.rows || q.cols != k.cols)
    throw Error(ErrorKind::dimension_mismatch,
                "batch_filtered_loss: q and k shapes disagree");
  BatchLoss batch;
  batch.grad_q = Matrix(q.rows, q.cols);
  const double inv_b = 1.0 / static_cast<double>(q.rows);
  for (std::size_t b = 0; b < q.rows; ++b) {
    const LossOutput out = filtered_dual_view_loss(q.row(b), k.row(b), bank, cfg);
    batch.total += out.total;
    batch.query_term += out.query_term;
    batch.key_term += out.key_term;
    for (std::size_t c = 0; c < q.cols; ++c)
      batch.grad_q.at(b, c) = out.grad_q[c] * inv_b;
  }
  batch.total *= inv_b;
  batch.query_term *= inv_b;
  batch.key_term *= inv_b;
  return batch;
}

}  // namespace mohn
