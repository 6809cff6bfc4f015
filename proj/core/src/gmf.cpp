#include "dcf/gmf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dcf/rng.hpp"

namespace dcf {

namespace {
constexpr double kProbClamp = 1e-7;
constexpr double kInitStddev = 0.01;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
}  // namespace

void OptimizerConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be positive");
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
    throw std::invalid_argument("beta1/beta2 must lie in (0, 1)");
  }
  if (epsilon <= 0) throw std::invalid_argument("epsilon must be positive");
  if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
}

double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(double y_hat, double y) {
  const double p = std::clamp(y_hat, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

GmfModel::GmfModel(std::int32_t num_users, std::int32_t num_items, int dim, std::uint64_t seed)
    : num_users_(num_users), num_items_(num_items), dim_(dim) {
  if (num_users < 1 || num_items < 1) throw std::invalid_argument("model needs users and items");
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");

  const std::size_t pn = static_cast<std::size_t>(num_users) * static_cast<std::size_t>(dim);
  const std::size_t qn = static_cast<std::size_t>(num_items) * static_cast<std::size_t>(dim);
  p_.resize(pn);
  q_.resize(qn);
  h_.assign(static_cast<std::size_t>(dim), 1.0);

  Rng rng(derive_seed(seed, RngStream::kModelInit));
  for (auto& x : p_) x = rng.normal(0.0, kInitStddev);
  for (auto& x : q_) x = rng.normal(0.0, kInitStddev);

  m_p_.assign(pn, 0.0);
  v_p_.assign(pn, 0.0);
  m_q_.assign(qn, 0.0);
  v_q_.assign(qn, 0.0);
  m_h_.assign(h_.size(), 0.0);
  v_h_.assign(h_.size(), 0.0);

  grad_p_.assign(pn, 0.0);
  grad_q_.assign(qn, 0.0);
  grad_h_.assign(h_.size(), 0.0);
}

std::span<const double> GmfModel::user_row(std::int32_t user) const {
  if (user < 0 || user >= num_users_) throw std::invalid_argument("user index out of range");
  return {p_.data() + static_cast<std::size_t>(user) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<const double> GmfModel::item_row(std::int32_t item) const {
  if (item < 0 || item >= num_items_) throw std::invalid_argument("item index out of range");
  return {q_.data() + static_cast<std::size_t>(item) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<double> GmfModel::mutable_user_row(std::int32_t user) {
  if (user < 0 || user >= num_users_) throw std::invalid_argument("user index out of range");
  return {p_.data() + static_cast<std::size_t>(user) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<double> GmfModel::mutable_item_row(std::int32_t item) {
  if (item < 0 || item >= num_items_) throw std::invalid_argument("item index out of range");
  return {q_.data() + static_cast<std::size_t>(item) * dim_, static_cast<std::size_t>(dim_)};
}

double GmfModel::logit(std::int32_t user, std::int32_t item) const {
  const auto p = user_row(user);
  const auto q = item_row(item);
  double z = 0.0;
  for (int j = 0; j < dim_; ++j) z += h_[static_cast<std::size_t>(j)] * p[j] * q[j];
  return z;
}

double GmfModel::predict(std::int32_t user, std::int32_t item) const {
  return sigmoid(logit(user, item));
}

std::vector<std::int32_t> GmfModel::score_all_items(
    std::int32_t user, std::span<const std::int32_t> exclude_sorted) const {
  std::vector<std::int32_t> items;
  items.reserve(static_cast<std::size_t>(num_items_));
  for (std::int32_t item = 0; item < num_items_; ++item) {
    if (!std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), item)) {
      items.push_back(item);
    }
  }
  std::vector<double> logits(static_cast<std::size_t>(num_items_));
  for (const std::int32_t item : items) {
    logits[static_cast<std::size_t>(item)] = logit(user, item);
  }
  std::sort(items.begin(), items.end(), [&](std::int32_t a, std::int32_t b) {
    const double la = logits[static_cast<std::size_t>(a)];
    const double lb = logits[static_cast<std::size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  });
  return items;
}

GmfModel::ExampleGradient GmfModel::example_gradient(std::int32_t user, std::int32_t item,
                                                     double label) const {
  const auto p = user_row(user);
  const auto q = item_row(item);
  const double g = predict(user, item) - label;
  ExampleGradient grad;
  grad.user.resize(static_cast<std::size_t>(dim_));
  grad.item.resize(static_cast<std::size_t>(dim_));
  grad.output.resize(static_cast<std::size_t>(dim_));
  for (int j = 0; j < dim_; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    grad.user[ju] = g * h_[ju] * q[j];
    grad.item[ju] = g * h_[ju] * p[j];
    grad.output[ju] = g * p[j] * q[j];
  }
  return grad;
}

std::optional<double> GmfModel::backward_and_step(std::span<const BatchExample> batch,
                                                  std::span<const std::uint8_t> weights,
                                                  const OptimizerConfig& opt) {
  if (batch.size() != weights.size()) {
    throw std::invalid_argument("backward_and_step: batch/weights size mismatch");
  }
  std::size_t retained = 0;
  for (const auto w : weights) retained += (w != 0);
  if (retained == 0) return std::nullopt;

  // zero the rows touched by the previous batch
  for (const std::int32_t u : touched_users_) {
    std::fill_n(grad_p_.begin() + static_cast<std::size_t>(u) * dim_, dim_, 0.0);
  }
  for (const std::int32_t i : touched_items_) {
    std::fill_n(grad_q_.begin() + static_cast<std::size_t>(i) * dim_, dim_, 0.0);
  }
  std::fill(grad_h_.begin(), grad_h_.end(), 0.0);
  touched_users_.clear();
  touched_items_.clear();

  const double inv_m = 1.0 / static_cast<double>(retained);
  double loss_sum = 0.0;
  for (std::size_t idx = 0; idx < batch.size(); ++idx) {
    if (weights[idx] == 0) continue;
    const auto& ex = batch[idx];
    const auto p = user_row(ex.user);
    const auto q = item_row(ex.item);
    double z = 0.0;
    for (int j = 0; j < dim_; ++j) z += h_[static_cast<std::size_t>(j)] * p[j] * q[j];
    const double y_hat = sigmoid(z);
    const double y = static_cast<double>(ex.label);
    loss_sum += bce_loss(y_hat, y);

    const double g = (y_hat - y) * inv_m;  // d(mean loss)/d(logit)
    double* gp = grad_p_.data() + static_cast<std::size_t>(ex.user) * dim_;
    double* gq = grad_q_.data() + static_cast<std::size_t>(ex.item) * dim_;
    for (int j = 0; j < dim_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      gp[j] += g * h_[ju] * q[j];
      gq[j] += g * h_[ju] * p[j];
      grad_h_[ju] += g * p[j] * q[j];
    }
    touched_users_.push_back(ex.user);
    touched_items_.push_back(ex.item);
  }

  ++step_;
  adam_update(p_, m_p_, v_p_, grad_p_, opt);
  adam_update(q_, m_q_, v_q_, grad_q_, opt);
  if (!opt.plain_mf) adam_update(h_, m_h_, v_h_, grad_h_, opt);

  return loss_sum * inv_m;
}

void GmfModel::adam_update(std::vector<double>& param, std::vector<double>& m,
                           std::vector<double>& v, const std::vector<double>& grad,
                           const OptimizerConfig& opt) {
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
  }
}

bool GmfModel::all_finite() const {
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(p_) && finite(q_) && finite(h_);
}

void save_checkpoint(const GmfModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "DCF-CKPT v1 " << model.num_users_ << ' ' << model.num_items_ << ' ' << model.dim_
      << '\n';
  const auto dump = [&out](const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  dump(model.p_);
  dump(model.q_);
  dump(model.h_);
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

GmfModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  std::int32_t num_users = 0, num_items = 0;
  int dim = 0;
  hs >> magic >> version >> num_users >> num_items >> dim;
  if (magic != "DCF-CKPT" || version != "v1" || !hs) {
    throw std::runtime_error("bad checkpoint header in " + path);
  }
  GmfModel model(num_users, num_items, dim, /*seed=*/0);
  const auto slurp = [&in, &path](std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  };
  slurp(model.p_);
  slurp(model.q_);
  slurp(model.h_);
  std::fill(model.m_p_.begin(), model.m_p_.end(), 0.0);
  std::fill(model.v_p_.begin(), model.v_p_.end(), 0.0);
  std::fill(model.m_q_.begin(), model.m_q_.end(), 0.0);
  std::fill(model.v_q_.begin(), model.v_q_.end(), 0.0);
  std::fill(model.m_h_.begin(), model.m_h_.end(), 0.0);
  std::fill(model.v_h_.begin(), model.v_h_.end(), 0.0);
  model.step_ = 0;
  return model;
}

}  // namespace dcf
