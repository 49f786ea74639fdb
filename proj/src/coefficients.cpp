#include "mkvb/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mkvb/error.hpp"

namespace mkvb {

namespace {

constexpr double kBoundTol = 1e-12;

double progeny_mean(std::span<const double> p) {
  double s = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) s += static_cast<double>(l) * p[l];
  return s;
}

void check_matrix(const std::vector<double>& sigma0, std::size_t dim) {
  if (sigma0.size() != dim * dim) throw InvalidArgument("diffusion matrix must have d*d entries");
  for (double v : sigma0) {
    if (!std::isfinite(v)) throw InvalidArgument("diffusion matrix entries must be finite");
  }
}

void check_vector(const std::vector<double>& v, std::size_t dim, const std::string& what) {
  if (v.size() != dim) throw InvalidArgument(what + " must have d entries");
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidArgument(what + " entries must be finite");
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Bounds shared by the built-in families: constant progeny, death rate at
// most gamma_bar, M defaulting to the progeny mean.
CoefficientBounds family_bounds(const std::vector<double>& p0, double gamma_bar, double cap,
                                double lipschitz, double drift_sup, double diffusion_sup) {
  check_probability_vector(p0, "progeny distribution");
  CoefficientBounds b;
  b.gamma_bar = gamma_bar;
  const double mean = progeny_mean(p0);
  b.progeny_mean_cap = cap < 0.0 ? std::max(mean, 1e-300) : cap;
  if (b.progeny_mean_cap + kBoundTol < mean) {
    throw InvalidArgument("progeny mean exceeds the declared cap M");
  }
  b.lipschitz = lipschitz;
  b.drift_sup = drift_sup;
  b.diffusion_sup = diffusion_sup;
  b.progeny_lipschitz.assign(p0.size(), 0.0);
  return b;
}

std::vector<std::pair<std::string, double>> vector_parameters(const std::string& name,
                                                              const std::vector<double>& v) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(name + "_" + std::to_string(i), v[i]);
  return out;
}

}  // namespace

double CoefficientBounds::progeny_lipschitz_mean() const noexcept {
  double s = 0.0;
  for (std::size_t l = 0; l < progeny_lipschitz.size(); ++l) {
    s += static_cast<double>(l) * progeny_lipschitz[l];
  }
  return s;
}

void CoefficientBounds::validate() const {
  if (!(gamma_bar > 0.0) || !std::isfinite(gamma_bar)) {
    throw InvalidArgument("gamma_bar must be positive and finite");
  }
  if (!(progeny_mean_cap > 0.0) || !std::isfinite(progeny_mean_cap)) {
    throw InvalidArgument("progeny mean cap M must be positive and finite");
  }
  if (!(drift_sup > 0.0) || !(diffusion_sup >= 0.0)) {
    throw InvalidArgument("sup-norm bounds must be nonnegative");
  }
  if (!(lipschitz >= 0.0)) throw InvalidArgument("Lipschitz constant must be nonnegative");
  for (double c : progeny_lipschitz) {
    if (!(c >= 0.0)) throw InvalidArgument("progeny Lipschitz constants must be nonnegative");
  }
}

// ---------------------------------------------------------------------------
// LabelFunction

LabelFunction::LabelFunction(Base base, double beta, std::size_t coordinate)
    : base_(base), beta_(beta), coordinate_(coordinate) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InvalidArgument("label weight beta must lie in (0, 1]");
}

LabelFunction LabelFunction::parse(const std::string& text) {
  std::string head = text;
  double beta = 1.0;
  if (auto at = text.find('@'); at != std::string::npos) {
    head = text.substr(0, at);
    try {
      std::size_t used = 0;
      beta = std::stod(text.substr(at + 1), &used);
      if (used != text.size() - at - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidArgument("bad label weight in test function '" + text + "'");
    }
  }
  static const std::pair<const char*, Base> names[] = {
      {"zero", Base::zero}, {"one", Base::one},   {"x", Base::coordinate}, {"sin", Base::sine},
      {"cos", Base::cosine}, {"tanh", Base::tanh}, {"gauss", Base::gaussian}};
  for (const auto& [name, base] : names) {
    if (head == name) return LabelFunction(base, beta);
  }
  throw InvalidArgument("unknown test function '" + text + "'");
}

std::string LabelFunction::name() const {
  std::string head;
  switch (base_) {
    case Base::zero: head = "zero"; break;
    case Base::one: head = "one"; break;
    case Base::coordinate: head = "x"; break;
    case Base::sine: head = "sin"; break;
    case Base::cosine: head = "cos"; break;
    case Base::tanh: head = "tanh"; break;
    case Base::gaussian: head = "gauss"; break;
  }
  if (beta_ != 1.0) head += "@" + format_real(beta_);
  return head;
}

double LabelFunction::weight(const Label& k) const {
  if (beta_ == 1.0) return 1.0;
  return std::pow(beta_, static_cast<double>(k.depth()));
}

double LabelFunction::base_value(std::span<const double> x) const {
  const double xc = x.empty() ? 0.0 : x[std::min(coordinate_, x.size() - 1)];
  switch (base_) {
    case Base::zero: return 0.0;
    case Base::one: return 1.0;
    case Base::coordinate: return xc;
    case Base::sine: return std::sin(xc);
    case Base::cosine: return std::cos(xc);
    case Base::tanh: return std::tanh(xc);
    case Base::gaussian: {
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      return std::exp(-0.5 * r2);
    }
  }
  return 0.0;
}

void LabelFunction::gradient(const Label& k, std::span<const double> x,
                             std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (x.empty()) return;
  const double w = weight(k);
  const std::size_t c = std::min(coordinate_, x.size() - 1);
  const double xc = x[c];
  switch (base_) {
    case Base::zero:
    case Base::one: break;
    case Base::coordinate: out[c] = w; break;
    case Base::sine: out[c] = w * std::cos(xc); break;
    case Base::cosine: out[c] = -w * std::sin(xc); break;
    case Base::tanh: {
      const double th = std::tanh(xc);
      out[c] = w * (1.0 - th * th);
      break;
    }
    case Base::gaussian: {
      const double g = base_value(x);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = -w * x[i] * g;
      break;
    }
  }
}

void LabelFunction::hessian(const Label& k, std::span<const double> x,
                            std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (x.empty()) return;
  const std::size_t d = x.size();
  const double w = weight(k);
  const std::size_t c = std::min(coordinate_, d - 1);
  const double xc = x[c];
  switch (base_) {
    case Base::zero:
    case Base::one:
    case Base::coordinate: break;
    case Base::sine: out[c * d + c] = -w * std::sin(xc); break;
    case Base::cosine: out[c * d + c] = -w * std::cos(xc); break;
    case Base::tanh: {
      const double th = std::tanh(xc);
      out[c * d + c] = -2.0 * w * th * (1.0 - th * th);
      break;
    }
    case Base::gaussian: {
      const double g = base_value(x);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          out[i * d + j] = w * g * (x[i] * x[j] - (i == j ? 1.0 : 0.0));
        }
      }
      break;
    }
  }
}

double LabelFunction::bound() const noexcept {
  // |f(x) - f(y)| <= min(Lip |x - y|, 2 sup |f|) <= max(Lip, 2 sup) (|x - y| ^ 1).
  switch (base_) {
    case Base::zero: return 0.0;
    case Base::one: return 1.0;
    case Base::coordinate: return kInfinity;
    default: return 2.0;
  }
}

double pairing(const ParticleConfiguration& e, const LabelFunction& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += f.value(e.label(i), e.position(i));
  return s;
}

double mean_field_functional(const LabelFunction& f, double t, const EnvironmentMeasure& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double v = 0.0;
    if (f.base() == LabelFunction::Base::zero) {
      v = 0.0;
    } else if (f.base() == LabelFunction::Base::one && f.beta() == 1.0) {
      v = static_cast<double>(m.count_at(i, t));
    } else {
      v = pairing(m.configuration_at(i, t), f);
    }
    total += m.weight(i) * v;
  }
  return total;
}

// ---------------------------------------------------------------------------
// CoefficientSet and checked evaluation

CoefficientSet::CoefficientSet(std::size_t dim, CoefficientBounds bounds)
    : dim_(dim), bounds_(std::move(bounds)) {
  if (dim == 0) throw InvalidArgument("dimension must be positive");
  bounds_.validate();
}

std::uint64_t CoefficientSet::next_memo_key() noexcept {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void checked_drift(const CoefficientSet& c, double t, const ParticleView& x,
                   const EnvironmentMeasure& m, std::span<double> out) {
  c.drift(t, x, m, out);
  for (double v : out) {
    if (!std::isfinite(v)) throw BoundViolation("drift is not finite at t=" + format_real(t));
  }
  const double sup = c.bounds().drift_sup;
  if (std::isfinite(sup) && norm(out) > sup * (1.0 + kBoundTol) + kBoundTol) {
    throw BoundViolation("drift norm " + format_real(norm(out)) + " exceeds declared bound " +
                         format_real(sup));
  }
}

void checked_diffusion(const CoefficientSet& c, double t, const ParticleView& x,
                       const EnvironmentMeasure& m, std::span<double> out) {
  c.diffusion(t, x, m, out);
  for (double v : out) {
    if (!std::isfinite(v)) throw BoundViolation("diffusion is not finite at t=" + format_real(t));
  }
  const double sup = c.bounds().diffusion_sup;
  if (std::isfinite(sup) && norm(out) > sup * (1.0 + kBoundTol) + kBoundTol) {
    throw BoundViolation("diffusion norm " + format_real(norm(out)) +
                         " exceeds declared bound " + format_real(sup));
  }
}

double checked_death_rate(const CoefficientSet& c, double t, const ParticleView& x,
                          const EnvironmentMeasure& m) {
  const double g = c.death_rate(t, x, m);
  const double cap = c.bounds().gamma_bar;
  if (!(g >= 0.0) || !(g <= cap * (1.0 + kBoundTol))) {
    throw BoundViolation("death rate " + format_real(g) + " outside [0, gamma_bar=" +
                         format_real(cap) + "] at t=" + format_real(t) + " for particle " +
                         x.label().to_string());
  }
  return g;
}

void checked_progeny(const CoefficientSet& c, double t, const ParticleView& x,
                     const EnvironmentMeasure& m, std::vector<double>& out) {
  c.progeny(t, x, m, out);
  if (out.empty()) throw BoundViolation("empty progeny distribution");
  try {
    check_probability_vector(out, "progeny distribution");
  } catch (const InvalidArgument& e) {
    throw BoundViolation(e.what());
  }
  const double mean = progeny_mean(out);
  if (mean > c.bounds().progeny_mean_cap + kBoundTol) {
    throw BoundViolation("progeny mean " + format_real(mean) + " exceeds declared cap M=" +
                         format_real(c.bounds().progeny_mean_cap));
  }
}

CoefficientValues eval_all(const CoefficientSet& c, double t, const ParticleView& x,
                           const EnvironmentMeasure& m) {
  CoefficientValues v;
  v.drift.resize(c.dim());
  v.diffusion.resize(c.dim() * c.dim());
  checked_drift(c, t, x, m, v.drift);
  checked_diffusion(c, t, x, m, v.diffusion);
  v.death_rate = checked_death_rate(c, t, x, m);
  checked_progeny(c, t, x, m, v.progeny);
  return v;
}

std::size_t offspring_interval_index(double u, std::span<const double> masses) {
  if (!(u >= 0.0 && u < 1.0)) throw InvalidArgument("offspring uniform must lie in [0, 1)");
  double upper = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t l = 0; l < masses.size(); ++l) {
    if (masses[l] <= 0.0) continue;
    upper += masses[l];
    last_positive = l;
    if (u < upper) return l;
  }
  return last_positive;
}

std::size_t offspring_interval_index(double u, const CountingDistribution& p) {
  return offspring_interval_index(u, p.masses());
}

std::vector<double> scaled_identity(std::size_t dim, double s) {
  std::vector<double> m(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] = s;
  return m;
}

// ---------------------------------------------------------------------------
// Built-in families

ConstantCoefficients::ConstantCoefficients(std::size_t dim, std::vector<double> b0,
                                           std::vector<double> sigma0, double gamma0,
                                           std::vector<double> p0, double gamma_bar,
                                           double progeny_mean_cap)
    : CoefficientSet(dim, family_bounds(p0, gamma_bar, progeny_mean_cap, 0.0, kInfinity,
                                        kInfinity)),
      b0_(std::move(b0)),
      sigma0_(std::move(sigma0)),
      p0_(std::move(p0)),
      gamma0_(gamma0) {
  check_vector(b0_, dim, "drift b0");
  check_matrix(sigma0_, dim);
  if (!(gamma0 >= 0.0) || gamma0 > gamma_bar) {
    throw InvalidArgument("gamma0 must lie in [0, gamma_bar]");
  }
}

std::vector<std::pair<std::string, double>> ConstantCoefficients::parameters() const {
  auto out = vector_parameters("b0", b0_);
  auto s = vector_parameters("sigma0", sigma0_);
  out.insert(out.end(), s.begin(), s.end());
  out.emplace_back("gamma0", gamma0_);
  auto p = vector_parameters("p", p0_);
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

void ConstantCoefficients::drift(double, const ParticleView&, const EnvironmentMeasure&,
                                 std::span<double> out) const {
  std::copy(b0_.begin(), b0_.end(), out.begin());
}

void ConstantCoefficients::diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                                     std::span<double> out) const {
  std::copy(sigma0_.begin(), sigma0_.end(), out.begin());
}

double ConstantCoefficients::death_rate(double, const ParticleView&,
                                        const EnvironmentMeasure&) const {
  return gamma0_;
}

void ConstantCoefficients::progeny(double, const ParticleView&, const EnvironmentMeasure&,
                                   std::vector<double>& out) const {
  out = p0_;
}

MeanFieldLogistic::MeanFieldLogistic(std::size_t dim, std::vector<double> b0,
                                     std::vector<double> sigma0, double gamma0, double a,
                                     LabelFunction f, std::vector<double> p0, double gamma_bar,
                                     double progeny_mean_cap)
    : CoefficientSet(dim, family_bounds(p0, gamma_bar, progeny_mean_cap,
                                        a == 0.0 ? 0.0 : gamma0 * std::fabs(a) * f.bound(),
                                        kInfinity, kInfinity)),
      b0_(std::move(b0)),
      sigma0_(std::move(sigma0)),
      p0_(std::move(p0)),
      gamma0_(gamma0),
      a_(a),
      f_(f),
      key_(next_memo_key()) {
  check_vector(b0_, dim, "drift b0");
  check_matrix(sigma0_, dim);
  if (!(gamma0 >= 0.0) || !std::isfinite(a)) throw InvalidArgument("gamma0 >= 0 and finite a required");
}

std::vector<std::pair<std::string, double>> MeanFieldLogistic::parameters() const {
  auto out = vector_parameters("b0", b0_);
  auto s = vector_parameters("sigma0", sigma0_);
  out.insert(out.end(), s.begin(), s.end());
  out.emplace_back("gamma0", gamma0_);
  out.emplace_back("a", a_);
  out.emplace_back("f_beta", f_.beta());
  auto p = vector_parameters("p", p0_);
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

double MeanFieldLogistic::functional(double t, const EnvironmentMeasure& m) const {
  return m.memo(key_, t, [&] { return std::vector<double>{mean_field_functional(f_, t, m)}; })[0];
}

void MeanFieldLogistic::drift(double, const ParticleView&, const EnvironmentMeasure&,
                              std::span<double> out) const {
  std::copy(b0_.begin(), b0_.end(), out.begin());
}

void MeanFieldLogistic::diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                                  std::span<double> out) const {
  std::copy(sigma0_.begin(), sigma0_.end(), out.begin());
}

double MeanFieldLogistic::death_rate(double t, const ParticleView&,
                                     const EnvironmentMeasure& m) const {
  const double g = gamma0_ * (1.0 + a_ * functional(t, m));
  return std::clamp(g, 0.0, bounds().gamma_bar);
}

void MeanFieldLogistic::progeny(double, const ParticleView&, const EnvironmentMeasure&,
                                std::vector<double>& out) const {
  out = p0_;
}

PositionCoupled::PositionCoupled(std::size_t dim, double kappa, double radius,
                                 std::vector<double> sigma0, double gamma0,
                                 std::vector<double> p0, double gamma_bar,
                                 double progeny_mean_cap)
    : CoefficientSet(dim, family_bounds(p0, gamma_bar, progeny_mean_cap,
                                        kappa * std::max(2.0 * radius, 1.0),
                                        std::max(2.0 * kappa * radius, 1e-300), kInfinity)),
      kappa_(kappa),
      radius_(radius),
      sigma0_(std::move(sigma0)),
      p0_(std::move(p0)),
      gamma0_(gamma0),
      key_(next_memo_key()) {
  check_matrix(sigma0_, dim);
  if (!(kappa >= 0.0) || !(radius > 0.0)) throw InvalidArgument("kappa >= 0 and radius > 0 required");
  if (!(gamma0 >= 0.0) || gamma0 > gamma_bar) {
    throw InvalidArgument("gamma0 must lie in [0, gamma_bar]");
  }
}

std::vector<std::pair<std::string, double>> PositionCoupled::parameters() const {
  std::vector<std::pair<std::string, double>> out{{"kappa", kappa_}, {"radius", radius_}};
  auto s = vector_parameters("sigma0", sigma0_);
  out.insert(out.end(), s.begin(), s.end());
  out.emplace_back("gamma0", gamma0_);
  auto p = vector_parameters("p", p0_);
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

void PositionCoupled::project(std::span<const double> x, std::span<double> out) const {
  const double r = norm(x);
  const double scale = r > radius_ ? radius_ / r : 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale;
}

std::vector<double> PositionCoupled::barycenter(double t, const EnvironmentMeasure& m) const {
  return m.memo(key_, t, [&] {
    const std::size_t d = dim();
    std::vector<double> total(d, 0.0), proj(d);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto e = m.configuration_at(i, t);
      if (e.is_empty()) continue;
      std::vector<double> mean(d, 0.0);
      for (std::size_t a = 0; a < e.size(); ++a) {
        project(e.position(a), proj);
        for (std::size_t c = 0; c < d; ++c) mean[c] += proj[c];
      }
      const double w = m.weight(i) / static_cast<double>(e.size());
      for (std::size_t c = 0; c < d; ++c) total[c] += w * mean[c];
    }
    return total;
  });
}

void PositionCoupled::drift(double t, const ParticleView& x, const EnvironmentMeasure& m,
                            std::span<double> out) const {
  const auto bary = barycenter(t, m);
  project(x.current(), out);
  for (std::size_t c = 0; c < dim(); ++c) out[c] = -kappa_ * (out[c] - bary[c]);
}

void PositionCoupled::diffusion(double, const ParticleView&, const EnvironmentMeasure&,
                                std::span<double> out) const {
  std::copy(sigma0_.begin(), sigma0_.end(), out.begin());
}

double PositionCoupled::death_rate(double, const ParticleView&, const EnvironmentMeasure&) const {
  return gamma0_;
}

void PositionCoupled::progeny(double, const ParticleView&, const EnvironmentMeasure&,
                              std::vector<double>& out) const {
  out = p0_;
}

ShiftedDeathRate::ShiftedDeathRate(CoefficientPtr base, double eps)
    : CoefficientSet(base->dim(), base->bounds()), base_(std::move(base)), eps_(eps) {}

std::vector<std::pair<std::string, double>> ShiftedDeathRate::parameters() const {
  auto out = base_->parameters();
  out.emplace_back("gamma_shift", eps_);
  return out;
}

double ShiftedDeathRate::death_rate(double t, const ParticleView& x,
                                    const EnvironmentMeasure& m) const {
  return std::clamp(base_->death_rate(t, x, m) + eps_, 0.0, bounds().gamma_bar);
}

FunctionCoefficients::FunctionCoefficients(std::size_t dim, CoefficientBounds bounds,
                                           VectorFn drift, VectorFn diffusion,
                                           ScalarFn death_rate, ProgenyFn progeny,
                                           bool uses_environment, std::string name)
    : CoefficientSet(dim, std::move(bounds)),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      death_rate_(std::move(death_rate)),
      progeny_(std::move(progeny)),
      uses_environment_(uses_environment),
      name_(std::move(name)) {
  if (!drift_ || !diffusion_ || !death_rate_ || !progeny_) {
    throw InvalidArgument("all four coefficient callables are required");
  }
}

}  // namespace mkvb
