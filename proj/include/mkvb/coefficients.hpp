#pragma once

// Coefficient sets (b, sigma, gamma, (p_l)) evaluated on stopped particle
// paths and stopped environment measures, with runtime bound checks and the
// built-in families.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mkvb/genealogy.hpp"
#include "mkvb/paths.hpp"
#include "mkvb/transport.hpp"

namespace mkvb {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Declared bounds and Lipschitz data of a coefficient set.
struct CoefficientBounds {
  double gamma_bar = 1.0;                // cap on the death rate
  double progeny_mean_cap = 1.0;         // M, cap on sum_l l p_l
  double drift_sup = kInfinity;          // sup |b|, checked when finite
  double diffusion_sup = kInfinity;      // sup |sigma| (Frobenius), checked when finite
  double lipschitz = 0.0;                // L
  std::vector<double> progeny_lipschitz; // C_l, l = 0..L_max
  /// M' = sum_l l C_l.
  double progeny_lipschitz_mean() const noexcept;
  /// Throws InvalidArgument on non-positive or non-finite caps.
  void validate() const;
};

/// Per-label function f^k(x) = base(x) * beta^{|k|}. Bases act on one
/// coordinate x_c (or on |x|^2 for the Gaussian bump).
class LabelFunction {
 public:
  enum class Base { zero, one, coordinate, sine, cosine, tanh, gaussian };

  LabelFunction() = default;
  LabelFunction(Base base, double beta = 1.0, std::size_t coordinate = 0);

  /// "one", "zero", "x", "sin", "cos", "tanh", "gauss", optionally suffixed
  /// with "@beta" (e.g. "sin@0.5").
  static LabelFunction parse(const std::string& text);
  std::string name() const;

  Base base() const noexcept { return base_; }
  double beta() const noexcept { return beta_; }
  std::size_t coordinate() const noexcept { return coordinate_; }

  double weight(const Label& k) const;
  double base_value(std::span<const double> x) const;
  double value(const Label& k, std::span<const double> x) const {
    return base_value(x) * weight(k);
  }
  /// Gradient of f^k at x into out (size d).
  void gradient(const Label& k, std::span<const double> x, std::span<double> out) const;
  /// Hessian of f^k at x into out (d x d, row-major).
  void hessian(const Label& k, std::span<const double> x, std::span<double> out) const;
  /// Constant C with |<e1, f> - <e2, f>| <= C d_E(e1, e2), i.e.
  /// max(Lip f, 2 sup |f|) (sup |f| alone for the constant base); infinite
  /// for the coordinate base.
  double bound() const noexcept;

 private:
  Base base_ = Base::one;
  double beta_ = 1.0;
  std::size_t coordinate_ = 0;
};

/// <e, f> = sum_k f^k(x^k).
double pairing(const ParticleConfiguration& e, const LabelFunction& f);

/// F(t, m) = sum_i w_i <z_i(t), f> over the support of m (stopped at t).
double mean_field_functional(const LabelFunction& f, double t, const EnvironmentMeasure& m);

/// Evaluator for (b, sigma, gamma, (p_l)). Implementations must be pure and
/// reentrant. Inputs are the stopped particle path and the environment
/// already stopped at t; nothing else is passed, so evaluations are
/// progressive by construction.
class CoefficientSet {
 public:
  CoefficientSet(std::size_t dim, CoefficientBounds bounds);
  virtual ~CoefficientSet() = default;

  std::size_t dim() const noexcept { return dim_; }
  const CoefficientBounds& bounds() const noexcept { return bounds_; }

  virtual std::string family() const = 0;
  /// Named scalar parameters for manifests.
  virtual std::vector<std::pair<std::string, double>> parameters() const { return {}; }
  /// False when no coefficient reads the environment; lets simulators skip
  /// building interaction snapshots.
  virtual bool uses_environment() const { return true; }

  virtual void drift(double t, const ParticleView& x, const EnvironmentMeasure& m,
                     std::span<double> out) const = 0;
  /// Row-major d x d matrix.
  virtual void diffusion(double t, const ParticleView& x, const EnvironmentMeasure& m,
                         std::span<double> out) const = 0;
  virtual double death_rate(double t, const ParticleView& x, const EnvironmentMeasure& m) const = 0;
  /// (p_0, ..., p_L) into out.
  virtual void progeny(double t, const ParticleView& x, const EnvironmentMeasure& m,
                       std::vector<double>& out) const = 0;

 protected:
  /// Fresh key for EnvironmentMeasure::memo.
  static std::uint64_t next_memo_key() noexcept;

 private:
  std::size_t dim_;
  CoefficientBounds bounds_;
};

using CoefficientPtr = std::shared_ptr<const CoefficientSet>;

/// Checked evaluations: throw BoundViolation when the value leaves the
/// declared bounds.
void checked_drift(const CoefficientSet& c, double t, const ParticleView& x,
                   const EnvironmentMeasure& m, std::span<double> out);
void checked_diffusion(const CoefficientSet& c, double t, const ParticleView& x,
                       const EnvironmentMeasure& m, std::span<double> out);
double checked_death_rate(const CoefficientSet& c, double t, const ParticleView& x,
                          const EnvironmentMeasure& m);
void checked_progeny(const CoefficientSet& c, double t, const ParticleView& x,
                     const EnvironmentMeasure& m, std::vector<double>& out);

struct CoefficientValues {
  std::vector<double> drift;
  std::vector<double> diffusion;
  double death_rate = 0.0;
  std::vector<double> progeny;
};

CoefficientValues eval_all(const CoefficientSet& c, double t, const ParticleView& x,
                           const EnvironmentMeasure& m);

/// The unique l with u in [p_0 + ... + p_{l-1}, p_0 + ... + p_l). When
/// rounding leaves u above the total mass, the last l with positive mass is
/// returned. Throws InvalidArgument for u outside [0, 1).
std::size_t offspring_interval_index(double u, std::span<const double> masses);
std::size_t offspring_interval_index(double u, const CountingDistribution& p);

/// Constant (b0, sigma0, gamma0, P0): linear branching diffusion.
class ConstantCoefficients : public CoefficientSet {
 public:
  /// sigma0 is d x d row-major. gamma_bar >= gamma0 and M >= mean(P0) are
  /// enforced; M defaults to the progeny mean.
  ConstantCoefficients(std::size_t dim, std::vector<double> b0, std::vector<double> sigma0,
                       double gamma0, std::vector<double> p0, double gamma_bar,
                       double progeny_mean_cap = -1.0);

  std::string family() const override { return "constant"; }
  std::vector<std::pair<std::string, double>> parameters() const override;
  bool uses_environment() const override { return false; }
  void drift(double, const ParticleView&, const EnvironmentMeasure&, std::span<double>) const override;
  void diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                 std::span<double>) const override;
  double death_rate(double, const ParticleView&, const EnvironmentMeasure&) const override;
  void progeny(double, const ParticleView&, const EnvironmentMeasure&,
               std::vector<double>&) const override;

 private:
  std::vector<double> b0_, sigma0_, p0_;
  double gamma0_;
};

/// Crowding death rate gamma = clamp(gamma0 (1 + a F(t, m)), 0, gamma_bar)
/// with F the mean-field functional of f; constant drift, diffusion and
/// progeny. Declared L = gamma0 |a| C_f.
class MeanFieldLogistic : public CoefficientSet {
 public:
  MeanFieldLogistic(std::size_t dim, std::vector<double> b0, std::vector<double> sigma0,
                    double gamma0, double a, LabelFunction f, std::vector<double> p0,
                    double gamma_bar, double progeny_mean_cap = -1.0);

  std::string family() const override { return "mean_field_logistic"; }
  std::vector<std::pair<std::string, double>> parameters() const override;
  void drift(double, const ParticleView&, const EnvironmentMeasure&, std::span<double>) const override;
  void diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                 std::span<double>) const override;
  double death_rate(double t, const ParticleView&, const EnvironmentMeasure& m) const override;
  void progeny(double, const ParticleView&, const EnvironmentMeasure&,
               std::vector<double>&) const override;

  double functional(double t, const EnvironmentMeasure& m) const;

 private:
  std::vector<double> b0_, sigma0_, p0_;
  double gamma0_, a_;
  LabelFunction f_;
  std::uint64_t key_;
};

/// Attraction to the mean-field barycenter:
/// b = -kappa (proj(x_t) - sum_i w_i bary(z_i(t))), where proj is the radial
/// projection onto the ball of radius R and bary(e) is the mean projected
/// position of the atoms of e (0 for the null configuration). Constant
/// diffusion, death rate and progeny. Declared L = kappa max(2R, 1).
class PositionCoupled : public CoefficientSet {
 public:
  PositionCoupled(std::size_t dim, double kappa, double radius, std::vector<double> sigma0,
                  double gamma0, std::vector<double> p0, double gamma_bar,
                  double progeny_mean_cap = -1.0);

  std::string family() const override { return "position_coupled"; }
  std::vector<std::pair<std::string, double>> parameters() const override;
  void drift(double t, const ParticleView& x, const EnvironmentMeasure& m,
             std::span<double> out) const override;
  void diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                 std::span<double>) const override;
  double death_rate(double, const ParticleView&, const EnvironmentMeasure&) const override;
  void progeny(double, const ParticleView&, const EnvironmentMeasure&,
               std::vector<double>&) const override;

  std::vector<double> barycenter(double t, const EnvironmentMeasure& m) const;

 private:
  void project(std::span<const double> x, std::span<double> out) const;

  double kappa_, radius_;
  std::vector<double> sigma0_, p0_;
  double gamma0_;
  std::uint64_t key_;
};

/// gamma~ = clamp(gamma + eps, 0, gamma_bar) on top of a base set; all other
/// coefficients delegate.
class ShiftedDeathRate : public CoefficientSet {
 public:
  ShiftedDeathRate(CoefficientPtr base, double eps);

  std::string family() const override { return base_->family() + "+gamma_shift"; }
  std::vector<std::pair<std::string, double>> parameters() const override;
  bool uses_environment() const override { return base_->uses_environment(); }
  void drift(double t, const ParticleView& x, const EnvironmentMeasure& m,
             std::span<double> out) const override {
    base_->drift(t, x, m, out);
  }
  void diffusion(double t, const ParticleView& x, const EnvironmentMeasure& m,
                 std::span<double> out) const override {
    base_->diffusion(t, x, m, out);
  }
  double death_rate(double t, const ParticleView& x, const EnvironmentMeasure& m) const override;
  void progeny(double t, const ParticleView& x, const EnvironmentMeasure& m,
               std::vector<double>& out) const override {
    base_->progeny(t, x, m, out);
  }

 private:
  CoefficientPtr base_;
  double eps_;
};

/// User-supplied callables; the library-API route for custom coefficients.
class FunctionCoefficients : public CoefficientSet {
 public:
  using VectorFn = std::function<void(double, const ParticleView&, const EnvironmentMeasure&,
                                      std::span<double>)>;
  using ScalarFn = std::function<double(double, const ParticleView&, const EnvironmentMeasure&)>;
  using ProgenyFn = std::function<void(double, const ParticleView&, const EnvironmentMeasure&,
                                       std::vector<double>&)>;

  FunctionCoefficients(std::size_t dim, CoefficientBounds bounds, VectorFn drift,
                       VectorFn diffusion, ScalarFn death_rate, ProgenyFn progeny,
                       bool uses_environment = true, std::string name = "user");

  std::string family() const override { return name_; }
  bool uses_environment() const override { return uses_environment_; }
  void drift(double t, const ParticleView& x, const EnvironmentMeasure& m,
             std::span<double> out) const override {
    drift_(t, x, m, out);
  }
  void diffusion(double t, const ParticleView& x, const EnvironmentMeasure& m,
                 std::span<double> out) const override {
    diffusion_(t, x, m, out);
  }
  double death_rate(double t, const ParticleView& x, const EnvironmentMeasure& m) const override {
    return death_rate_(t, x, m);
  }
  void progeny(double t, const ParticleView& x, const EnvironmentMeasure& m,
               std::vector<double>& out) const override {
    progeny_(t, x, m, out);
  }

 private:
  VectorFn drift_, diffusion_;
  ScalarFn death_rate_;
  ProgenyFn progeny_;
  bool uses_environment_;
  std::string name_;
};

/// sigma0 = s I_d.
std::vector<double> scaled_identity(std::size_t dim, double s);

}  // namespace mkvb
