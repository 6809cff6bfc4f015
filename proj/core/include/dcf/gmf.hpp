#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcf/batch.hpp"

namespace dcf {

struct OptimizerConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int embedding_dim = 32;
  bool plain_mf = false;  // fix the output weights at all-ones and freeze them

  void validate() const;
};

// Generalized matrix factorization: y_hat = sigmoid(h . (p ⊙ q)) with user
// embeddings P, item embeddings Q and a learnable output weight vector h.
// Owns Adam first/second moment state for every parameter.
class GmfModel {
 public:
  GmfModel() = default;  // empty placeholder; real models come from the seeded constructor
  GmfModel(std::int32_t num_users, std::int32_t num_items, int dim, std::uint64_t seed);

  std::int32_t num_users() const { return num_users_; }
  std::int32_t num_items() const { return num_items_; }
  int dim() const { return dim_; }

  std::span<const double> user_row(std::int32_t user) const;
  std::span<const double> item_row(std::int32_t item) const;
  std::span<const double> output_weights() const { return {h_.data(), h_.size()}; }

  std::span<double> mutable_user_row(std::int32_t user);
  std::span<double> mutable_item_row(std::int32_t item);
  std::span<double> mutable_output_weights() { return {h_.data(), h_.size()}; }

  double logit(std::int32_t user, std::int32_t item) const;
  double predict(std::int32_t user, std::int32_t item) const;

  // Items not in `exclude_sorted`, by descending logit, ties by ascending
  // item index.
  std::vector<std::int32_t> score_all_items(std::int32_t user,
                                            std::span<const std::int32_t> exclude_sorted) const;

  struct ExampleGradient {
    std::vector<double> user;    // (y_hat - y) * (h ⊙ q)
    std::vector<double> item;    // (y_hat - y) * (h ⊙ p)
    std::vector<double> output;  // (y_hat - y) * (p ⊙ q)
  };
  ExampleGradient example_gradient(std::int32_t user, std::int32_t item, double label) const;

  // One Adam step on the mean BCE over weight-1 examples. weight 0 marks
  // dropped samples. Returns the mean retained loss, or nullopt (no-op)
  // when every example is dropped.
  std::optional<double> backward_and_step(std::span<const BatchExample> batch,
                                          std::span<const std::uint8_t> weights,
                                          const OptimizerConfig& opt);

  bool all_finite() const;

  const std::vector<double>& raw_user_embeddings() const { return p_; }
  const std::vector<double>& raw_item_embeddings() const { return q_; }

 private:
  std::int32_t num_users_ = 0;
  std::int32_t num_items_ = 0;
  int dim_ = 0;
  std::vector<double> p_, q_, h_;
  std::vector<double> m_p_, v_p_, m_q_, v_q_, m_h_, v_h_;
  std::int64_t step_ = 0;

  // per-batch gradient scratch, zeroed via the touched lists
  std::vector<double> grad_p_, grad_q_, grad_h_;
  std::vector<std::int32_t> touched_users_, touched_items_;

  void adam_update(std::vector<double>& param, std::vector<double>& m, std::vector<double>& v,
                   const std::vector<double>& grad, const OptimizerConfig& opt);

  friend void save_checkpoint(const GmfModel& model, const std::string& path);
  friend GmfModel load_checkpoint(const std::string& path);
};

double sigmoid(double z);

// Clamps y_hat into [1e-7, 1 - 1e-7] before the logarithms.
double bce_loss(double y_hat, double y);

// Text header "DCF-CKPT v1 <num_users> <num_items> <k>" followed by P, Q, h
// as little-endian 64-bit floats, row-major. Optimizer state is not stored.
void save_checkpoint(const GmfModel& model, const std::string& path);
GmfModel load_checkpoint(const std::string& path);

}  // namespace dcf
