#include "stlsgd/objective.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "stlsgd/errors.hpp"

namespace stlsgd {

Vec Objective::full_gradient(const Vec& x) const {
  Vec out;
  full_gradient(x, out);
  return out;
}

Vec Objective::client_gradient(std::size_t client, const Vec& x) const {
  Vec out;
  client_gradient(client, x, out);
  return out;
}

Vec Objective::stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                                   std::size_t batch) const {
  Vec out;
  stochastic_gradient(x, client, rng, batch, out);
  return out;
}

void Objective::set_optimum(Optimum opt) {
  if (opt.x.size() != dim()) throw std::invalid_argument("optimum dimension mismatch");
  optimum_ = std::move(opt);
}

void Objective::check_dim(const Vec& x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("dimension mismatch: expected " + std::to_string(dim()) +
                                ", got " + std::to_string(x.size()));
  }
}

void Objective::check_client(std::size_t client) const {
  if (client >= num_clients()) {
    throw std::invalid_argument("client index " + std::to_string(client) + " out of range");
  }
}

double objective_value(const Objective& obj, const Vec& x) { return obj.value(x); }

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow for large z.
double log1pexp(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

class LogisticObjective final : public Objective {
 public:
  LogisticObjective(std::shared_ptr<const Dataset> data, double lambda, Shards shards)
      : data_(std::move(data)), lambda_(lambda), shards_(std::move(shards)) {
    if (!data_ || data_->size() == 0) throw std::invalid_argument("empty dataset");
    if (lambda_ < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    for (double y : data_->labels) {
      if (y != 1.0 && y != -1.0) throw std::invalid_argument("labels must be +1 or -1");
    }
    if (shards_.empty()) {
      shards_.emplace_back(data_->size());
      std::iota(shards_[0].begin(), shards_[0].end(), 0u);
    }
    for (const auto& shard : shards_) {
      if (shard.empty()) throw std::invalid_argument("empty client shard");
      for (auto i : shard) {
        if (i >= data_->size()) throw std::invalid_argument("shard row index out of range");
      }
    }
    double max_norm2 = 0.0;
    for (const auto& row : data_->rows) {
      double n2 = 0.0;
      for (double v : row.val) n2 += v * v;
      max_norm2 = std::max(max_norm2, n2);
    }
    constants_.L = 0.25 * max_norm2 + lambda_;
    if (lambda_ > 0.0) constants_.mu = lambda_;
    if (shards_.size() == 1) constants_.zeta_star = 0.0;
  }

  std::size_t dim() const override { return data_->num_features; }
  std::size_t num_clients() const override { return shards_.size(); }

  double value(const Vec& x) const override {
    check_dim(x);
    double total = 0.0;
    for (std::size_t c = 0; c < shards_.size(); ++c) total += shard_loss(c, x);
    return total / static_cast<double>(shards_.size()) + 0.5 * lambda_ * norm_sq(x);
  }

  double client_value(std::size_t client, const Vec& x) const override {
    check_client(client);
    check_dim(x);
    return shard_loss(client, x) + 0.5 * lambda_ * norm_sq(x);
  }

  void full_gradient(const Vec& x, Vec& out) const override {
    check_dim(x);
    out.assign(x.size(), 0.0);
    for (std::size_t c = 0; c < shards_.size(); ++c) {
      add_shard_loss_gradient(c, x, 1.0 / static_cast<double>(shards_.size()), out);
    }
    axpy(lambda_, x, out);
  }

  void client_gradient(std::size_t client, const Vec& x, Vec& out) const override {
    check_client(client);
    check_dim(x);
    out.assign(x.size(), 0.0);
    add_shard_loss_gradient(client, x, 1.0, out);
    axpy(lambda_, x, out);
  }

  void stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                           std::size_t batch, Vec& out) const override {
    check_client(client);
    check_dim(x);
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    out.assign(x.size(), 0.0);
    const auto& shard = shards_[client];
    const double w = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      auto i = shard[rng.next_below(shard.size())];
      add_example_gradient(i, x, w, out);
    }
    axpy(lambda_, x, out);
  }

 private:
  double shard_loss(std::size_t c, const Vec& x) const {
    const auto& shard = shards_[c];
    double s = 0.0;
    for (auto i : shard) s += log1pexp(-data_->labels[i] * row_dot(i, x));
    return s / static_cast<double>(shard.size());
  }

  void add_shard_loss_gradient(std::size_t c, const Vec& x, double scale, Vec& out) const {
    const auto& shard = shards_[c];
    const double w = scale / static_cast<double>(shard.size());
    for (auto i : shard) add_example_gradient(i, x, w, out);
  }

  // d/dx log(1 + exp(-y a.x)) = -y sigmoid(-y a.x) a
  void add_example_gradient(std::size_t i, const Vec& x, double w, Vec& out) const {
    double y = data_->labels[i];
    double coeff = -y * sigmoid(-y * row_dot(i, x)) * w;
    const auto& row = data_->rows[i];
    for (std::size_t j = 0; j < row.idx.size(); ++j) out[row.idx[j]] += coeff * row.val[j];
  }

  double row_dot(std::size_t i, const Vec& x) const {
    const auto& row = data_->rows[i];
    double s = 0.0;
    for (std::size_t j = 0; j < row.idx.size(); ++j) s += row.val[j] * x[row.idx[j]];
    return s;
  }

  std::shared_ptr<const Dataset> data_;
  double lambda_;
  Shards shards_;
};

class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::vector<Vec> centers, double sigma2)
      : centers_(std::move(centers)), sigma2_(sigma2) {
    if (centers_.empty()) throw std::invalid_argument("at least one center required");
    if (sigma2_ < 0.0) throw std::invalid_argument("sigma2 must be nonnegative");
    for (const auto& c : centers_) check_same_dim(centers_[0], c);
    const auto n = static_cast<double>(centers_.size());
    Vec mean = centers_[0];
    for (std::size_t i = 1; i < centers_.size(); ++i) axpy(1.0, centers_[i], mean);
    for (auto& v : mean) v /= n;
    double zeta = 0.0;
    double fstar = 0.0;
    for (const auto& c : centers_) {
      double d2 = dist_sq(mean, c);
      zeta += d2;
      fstar += 0.5 * d2;
    }
    constants_.L = 1.0;
    constants_.mu = 1.0;
    constants_.sigma2 = sigma2_;
    constants_.zeta_star = zeta / n;
    noise_std_ = std::sqrt(sigma2_ / static_cast<double>(centers_[0].size()));
    set_optimum({std::move(mean), fstar / n});
  }

  std::size_t dim() const override { return centers_[0].size(); }
  std::size_t num_clients() const override { return centers_.size(); }

  double value(const Vec& x) const override {
    check_dim(x);
    double s = 0.0;
    for (const auto& c : centers_) s += 0.5 * dist_sq(x, c);
    return s / static_cast<double>(centers_.size());
  }

  double client_value(std::size_t client, const Vec& x) const override {
    check_client(client);
    check_dim(x);
    return 0.5 * dist_sq(x, centers_[client]);
  }

  void full_gradient(const Vec& x, Vec& out) const override {
    check_dim(x);
    out.assign(x.size(), 0.0);
    const double w = 1.0 / static_cast<double>(centers_.size());
    for (const auto& c : centers_) {
      for (std::size_t j = 0; j < x.size(); ++j) out[j] += w * (x[j] - c[j]);
    }
  }

  void client_gradient(std::size_t client, const Vec& x, Vec& out) const override {
    check_client(client);
    check_dim(x);
    out.resize(x.size());
    const auto& c = centers_[client];
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - c[j];
  }

  void stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                           std::size_t batch, Vec& out) const override {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    client_gradient(client, x, out);
    if (noise_std_ == 0.0) return;
    const double w = noise_std_ / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (auto& v : out) v += w * rng.next_gaussian();
    }
  }

 private:
  std::vector<Vec> centers_;
  double sigma2_;
  double noise_std_ = 0.0;
};

// x^2 + 3 sin^2 x, identical on every client.  |f''| <= 8 and f'' >= -4.
class PlObjective final : public Objective {
 public:
  PlObjective(double sigma2, std::size_t num_clients)
      : sigma2_(sigma2), num_clients_(num_clients) {
    if (num_clients_ == 0) throw std::invalid_argument("at least one client required");
    if (sigma2_ < 0.0) throw std::invalid_argument("sigma2 must be nonnegative");
    constants_.L = 8.0;
    constants_.rho = 4.0;
    constants_.mu = kPlMu;
    constants_.sigma2 = sigma2_;
    constants_.zeta_star = 0.0;
    noise_std_ = std::sqrt(sigma2_);
    set_optimum({Vec{0.0}, 0.0});
  }

  std::size_t dim() const override { return 1; }
  std::size_t num_clients() const override { return num_clients_; }

  double value(const Vec& x) const override {
    check_dim(x);
    double s = std::sin(x[0]);
    return x[0] * x[0] + 3.0 * s * s;
  }

  double client_value(std::size_t client, const Vec& x) const override {
    check_client(client);
    return value(x);
  }

  void full_gradient(const Vec& x, Vec& out) const override {
    check_dim(x);
    out.resize(1);
    out[0] = 2.0 * x[0] + 3.0 * std::sin(2.0 * x[0]);
  }

  void client_gradient(std::size_t client, const Vec& x, Vec& out) const override {
    check_client(client);
    full_gradient(x, out);
  }

  void stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                           std::size_t batch, Vec& out) const override {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    client_gradient(client, x, out);
    if (noise_std_ == 0.0) return;
    const double w = noise_std_ / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) out[0] += w * rng.next_gaussian();
  }

 private:
  double sigma2_;
  std::size_t num_clients_;
  double noise_std_ = 0.0;
};

}  // namespace

ObjectivePtr logistic_objective(std::shared_ptr<const Dataset> data, double lambda,
                                Shards shards) {
  return std::make_shared<LogisticObjective>(std::move(data), lambda, std::move(shards));
}

ObjectivePtr quadratic_objective(std::vector<Vec> centers, double sigma2) {
  return std::make_shared<QuadraticObjective>(std::move(centers), sigma2);
}

ObjectivePtr pl_objective(double sigma2, std::size_t num_clients) {
  return std::make_shared<PlObjective>(sigma2, num_clients);
}

ProxObjective::ProxObjective(std::shared_ptr<const Objective> inner, Vec center, double gamma)
    : inner_(std::move(inner)), center_(std::move(center)), gamma_(gamma) {
  if (!inner_) throw std::invalid_argument("inner objective is null");
  if (gamma_ <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (center_.size() != inner_->dim()) throw std::invalid_argument("center dimension mismatch");
  const auto& ic = inner_->constants();
  const double inv = 1.0 / gamma_;
  constants_.L = ic.L + inv;
  constants_.sigma2 = ic.sigma2;
  if (ic.rho) {
    if (inv > *ic.rho) {
      constants_.mu = inv - *ic.rho;
    } else {
      constants_.rho = *ic.rho - inv;
    }
  } else {
    constants_.mu = ic.mu.value_or(0.0) + inv;
  }
}

std::size_t ProxObjective::dim() const { return inner_->dim(); }
std::size_t ProxObjective::num_clients() const { return inner_->num_clients(); }

double ProxObjective::value(const Vec& x) const {
  check_dim(x);
  return inner_->value(x) + dist_sq(x, center_) / (2.0 * gamma_);
}

double ProxObjective::client_value(std::size_t client, const Vec& x) const {
  check_dim(x);
  return inner_->client_value(client, x) + dist_sq(x, center_) / (2.0 * gamma_);
}

void ProxObjective::full_gradient(const Vec& x, Vec& out) const {
  inner_->full_gradient(x, out);
  add_prox_term(x, out);
}

void ProxObjective::client_gradient(std::size_t client, const Vec& x, Vec& out) const {
  inner_->client_gradient(client, x, out);
  add_prox_term(x, out);
}

void ProxObjective::stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                                        std::size_t batch, Vec& out) const {
  inner_->stochastic_gradient(x, client, rng, batch, out);
  add_prox_term(x, out);
}

void ProxObjective::add_prox_term(const Vec& x, Vec& out) const {
  const double inv = 1.0 / gamma_;
  for (std::size_t j = 0; j < x.size(); ++j) out[j] += inv * (x[j] - center_[j]);
}

std::shared_ptr<ProxObjective> prox_wrap(std::shared_ptr<const Objective> inner, Vec center,
                                         double gamma) {
  return std::make_shared<ProxObjective>(std::move(inner), std::move(center), gamma);
}

double estimate_sigma2(const Objective& obj, const Vec& x0, std::uint64_t seed,
                       std::size_t draws) {
  if (draws == 0) throw std::invalid_argument("draws must be positive");
  const std::size_t n = obj.num_clients();
  std::vector<Vec> means(n);
  for (std::size_t c = 0; c < n; ++c) obj.client_gradient(c, x0, means[c]);
  double acc = 0.0;
  Vec g;
  for (std::size_t i = 0; i < draws; ++i) {
    std::size_t c = i % n;
    RngStream rng(seed, kMetaStream + 2, i);
    obj.stochastic_gradient(x0, c, rng, 1, g);
    acc += dist_sq(g, means[c]);
  }
  return acc / static_cast<double>(draws);
}

}  // namespace stlsgd
