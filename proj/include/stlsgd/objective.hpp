#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "stlsgd/dataset.hpp"
#include "stlsgd/partition.hpp"
#include "stlsgd/rng.hpp"
#include "stlsgd/vec.hpp"

namespace stlsgd {

struct ObjectiveConstants {
  double L = 0.0;                   // smoothness
  std::optional<double> mu;         // strong-convexity or PL constant
  std::optional<double> rho;        // weak-convexity constant; unset means convex
  double sigma2 = 0.0;              // declared per-draw noise second moment; 0 = unknown
  std::optional<double> zeta_star;  // (1/N) sum_i ||grad f_i(x*)||^2
};

struct Optimum {
  Vec x;
  double value = 0.0;
};

// f(x) averaged over clients; per-client pieces are reachable individually and
// through with-replacement stochastic draws.  Instances are immutable during
// runs; set_optimum is a setup-phase step.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t num_clients() const = 0;

  virtual double value(const Vec& x) const = 0;
  virtual double client_value(std::size_t client, const Vec& x) const = 0;
  virtual void full_gradient(const Vec& x, Vec& out) const = 0;
  virtual void client_gradient(std::size_t client, const Vec& x, Vec& out) const = 0;
  // Mean over `batch` draws sampled with replacement from the client's shard.
  virtual void stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                                   std::size_t batch, Vec& out) const = 0;

  Vec full_gradient(const Vec& x) const;
  Vec client_gradient(std::size_t client, const Vec& x) const;
  Vec stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                          std::size_t batch = 1) const;

  const ObjectiveConstants& constants() const { return constants_; }
  const std::optional<Optimum>& optimum() const { return optimum_; }
  void set_optimum(Optimum opt);

 protected:
  void check_dim(const Vec& x) const;
  void check_client(std::size_t client) const;

  ObjectiveConstants constants_;
  std::optional<Optimum> optimum_;
};

using ObjectivePtr = std::shared_ptr<Objective>;

// PL constant of x^2 + 3 sin^2 x, determined by grid search over [-10, 10]
// (step 1e-4) of ||f'||^2 / (2 f); the ratio tends to 8 near the minimum and
// bottoms out near |x| = 2.2017.
inline constexpr double kPlMu = 0.17553098598906502;

// Regularized logistic loss over a sparse dataset; clients sample from their
// shards (one shard covering everything when none are given).
ObjectivePtr logistic_objective(std::shared_ptr<const Dataset> data, double lambda,
                                Shards shards = {});

// Client i owns (1/2)||x - c_i||^2; stochastic draws add isotropic Gaussian
// noise with total second moment sigma2 per draw.
ObjectivePtr quadratic_objective(std::vector<Vec> centers, double sigma2);

// Scalar x^2 + 3 sin^2 x replicated on every client: 8-smooth, 4-weakly
// convex, PL with constant kPlMu; noise as in the quadratic.
ObjectivePtr pl_objective(double sigma2 = 0.0, std::size_t num_clients = 1);

// f(x) + ||x - center||^2 / (2 gamma): the convexified stage objective.
class ProxObjective final : public Objective {
 public:
  ProxObjective(std::shared_ptr<const Objective> inner, Vec center, double gamma);

  using Objective::client_gradient;
  using Objective::full_gradient;
  using Objective::stochastic_gradient;

  std::size_t dim() const override;
  std::size_t num_clients() const override;
  double value(const Vec& x) const override;
  double client_value(std::size_t client, const Vec& x) const override;
  void full_gradient(const Vec& x, Vec& out) const override;
  void client_gradient(std::size_t client, const Vec& x, Vec& out) const override;
  void stochastic_gradient(const Vec& x, std::size_t client, RngStream& rng,
                           std::size_t batch, Vec& out) const override;

  double gamma() const { return gamma_; }
  const Vec& center() const { return center_; }

 private:
  void add_prox_term(const Vec& x, Vec& out) const;

  std::shared_ptr<const Objective> inner_;
  Vec center_;
  double gamma_;
};

std::shared_ptr<ProxObjective> prox_wrap(std::shared_ptr<const Objective> inner,
                                         Vec center, double gamma);

double objective_value(const Objective& obj, const Vec& x);

// Empirical mean of ||g - grad f_i(x0)||^2 over single-example draws, clients
// visited round-robin.  Backfills sigma2 when no closed form exists.
double estimate_sigma2(const Objective& obj, const Vec& x0, std::uint64_t seed,
                       std::size_t draws = 1000);

}  // namespace stlsgd
