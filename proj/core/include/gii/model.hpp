#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gii/smoothing.hpp"

namespace gii::sim {

/// The five structural models.
///
///   M1  u_t = b x_t + e_t,            e_t = r e_{t-1} + eta_t, e_0 = 0
///   M2  u_t = b1 x_t + b2 y_{t-1} + e_t, same AR(1) errors, y_0 = 0
///   M3  M2 with the first s choices unobserved
///   M4  static trinomial probit with correlated errors
///   M5  selection model: wage w and work utility u
enum class ModelId { M1 = 1, M2, M3, M4, M5 };

ModelId parse_model_id(const std::string& name);
std::string to_string(ModelId id);

/// Parameter layout per model:
///   M1      (b, r)
///   M2, M3  (b1, r, b2)
///   M4      (b10, b11, b12, b20, b21, b22, c1, c2)
///   M5      (b10, b11, b20, b21, b22, c1, c2)
std::vector<std::string> parameter_names(ModelId id);
int parameter_count(ModelId id);

struct StructuralConfig {
  ModelId model = ModelId::M1;
  Eigen::VectorXd beta;
  int n = 1;
  int periods = 1;     // T; 1 for M4 and M5
  int unobserved = 0;  // s; nonzero only for M3

  int alternatives() const noexcept;        // J (2 for M5's work choice)
  int shocks_per_period() const noexcept;   // dimension of eta_it
  int covariates_per_period() const noexcept;
  int observed_periods() const noexcept { return periods - unobserved; }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
};

/// Covariates and simulation shocks, drawn once and reused for every beta.
///
/// Panel m = 0 drives the "observed" data; m = 1..M are simulation draws.
/// Every draw is addressed by (seed, m, i, t, j) through a counter-based
/// generator, so regenerating with the same seed is bit-identical and any
/// prefix of the simulation panels is independent of M.
class ShockSet {
 public:
  /// Draws covariates and M + 1 shock panels.
  ShockSet(const StructuralConfig& cfg, int sims, std::uint64_t seed);
  /// Uses caller-supplied covariates (n x T*dx, period-major columns).
  ShockSet(const StructuralConfig& cfg, int sims, std::uint64_t seed,
           Eigen::MatrixXd covariates);

  int sims() const noexcept { return sims_; }
  int n() const noexcept { return static_cast<int>(covariates_.rows()); }
  int periods() const noexcept { return periods_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// n x (T * dx); column t*dx + k holds covariate k of period t.
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  /// n x (T * d_eta) for panel m; column t*d_eta + j.
  const Eigen::MatrixXd& shocks(int m) const;

  /// FNV-1a hash over the raw bits of panel m.
  std::uint64_t fingerprint(int m) const;

 private:
  void draw_shocks(const StructuralConfig& cfg);

  int sims_;
  int periods_;
  std::uint64_t seed_;
  Eigen::MatrixXd covariates_;
  std::vector<Eigen::MatrixXd> shocks_;
};

/// Latent utilities of one simulation panel.
///
/// utilities: n x (T*(J-1)). For M2/M3 the lagged-choice term is excluded
/// (column holds b1 x_t + e_t) because the smoothed lag is resolved in
/// smooth_choices. For M5 the single column is the work utility u and
/// `wage` holds w.
struct LatentPanel {
  Eigen::MatrixXd utilities;
  Eigen::VectorXd wage;
};

LatentPanel simulate_latent(const StructuralConfig& cfg,
                            const ShockSet& shocks, int m);

enum class DynMode { product, nested };

DynMode parse_dyn_mode(const std::string& name);
std::string to_string(DynMode mode);

/// Smoothed outcomes y(beta, lambda) for one panel.
///
/// Column layout of y:
///   M1-M3  column t-1 holds period t (all T periods, including M3's
///          unobserved ones)
///   M4     (y_1, y_2)
///   M5     (K[u], w * K[u])
struct SmoothedPanel {
  Eigen::MatrixXd y;
  double lambda = 0.0;
  std::vector<bool> discrete;
};

SmoothedPanel smooth_choices(const StructuralConfig& cfg,
                             const ShockSet& shocks, int m, double lambda,
                             DynMode mode = DynMode::product,
                             const smooth::Kernel& kernel = {});

/// The econometrician's view of panel m = 0 at lambda = 0.
///
/// outcomes uses the SmoothedPanel column layout; entries the econometrician
/// cannot see are NaN (M3's first s periods; M5's wage column holds w*y, so a
/// non-worker contributes 0 there and `wage` is NaN).
struct ObservedData {
  ModelId model = ModelId::M1;
  int unobserved = 0;
  Eigen::MatrixXd outcomes;
  Eigen::MatrixXd covariates;
  Eigen::VectorXd wage;  // M5 only

  int n() const noexcept { return static_cast<int>(outcomes.rows()); }
  /// Number of periods with observed choices.
  int observed_choice_periods() const noexcept;
};

ObservedData generate_observed(const StructuralConfig& cfg,
                               const ShockSet& shocks);

}  // namespace gii::sim
