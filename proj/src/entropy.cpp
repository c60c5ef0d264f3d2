#include "gecal/entropy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gecal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void domain_fail(const char* what, double x) {
  throw std::domain_error(std::string(what) + " evaluated outside its domain at " +
                          std::to_string(x));
}

}  // namespace

EntropySpec::EntropySpec(EntropyKind kind, double param) : kind_(kind), param_(param) {
  switch (kind_) {
    case EntropyKind::SquaredLoss:
    case EntropyKind::PseudoHuber:
      domain_ = {-kInf, kInf};
      break;
    case EntropyKind::ShiftedExpTilting:
    case EntropyKind::CrossEntropy:
      domain_ = {1.0, kInf};
      break;
    default:
      domain_ = {0.0, kInf};
      break;
  }
  switch (kind_) {
    case EntropyKind::SquaredLoss:
    case EntropyKind::ExponentialTilting:
    case EntropyKind::ShiftedExpTilting:
      range_ = {-kInf, kInf};
      break;
    case EntropyKind::PseudoHuber:
      range_ = {-param_, param_};
      break;
    case EntropyKind::Renyi:
      range_ = param_ > 0 ? Interval{0.0, kInf} : Interval{-kInf, 0.0};
      break;
    default:  // el, ce, hd, inv all map onto the negative half-line
      range_ = {-kInf, 0.0};
      break;
  }
}

EntropySpec EntropySpec::make(EntropyKind kind, const std::vector<double>& params) {
  const bool parametric = kind == EntropyKind::PseudoHuber || kind == EntropyKind::Renyi;
  if (!parametric && !params.empty())
    throw std::invalid_argument("entropy takes no parameters");
  if (parametric && params.size() != 1)
    throw std::invalid_argument("entropy requires exactly one parameter");

  double param = parametric ? params[0] : 0.0;
  if (kind == EntropyKind::PseudoHuber && !(param > 0))
    throw std::invalid_argument("PseudoHuber requires M > 0");
  if (kind == EntropyKind::Renyi) {
    if (!std::isfinite(param) || param == 0.0 || param == -1.0)
      throw std::invalid_argument("Renyi requires r not in {0, -1}");
  }
  return EntropySpec(kind, param);
}

bool EntropySpec::has_param() const {
  return kind_ == EntropyKind::PseudoHuber || kind_ == EntropyKind::Renyi;
}

void EntropySpec::check_primal(double w) const {
  if (!domain_.contains(w)) domain_fail("G/g", w);
}

void EntropySpec::check_dual(double u) const {
  if (!range_.contains(u)) domain_fail("f/F", u);
}

double EntropySpec::G(double w) const {
  check_primal(w);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return 0.5 * w * w;
    case EntropyKind::EmpiricalLikelihood:
      return -std::log(w);
    case EntropyKind::ExponentialTilting:
      return w * std::log(w) - w;
    case EntropyKind::ShiftedExpTilting:
      return (w - 1.0) * std::log(w - 1.0) - w;
    case EntropyKind::CrossEntropy:
      return (w - 1.0) * std::log(w - 1.0) - w * std::log(w);
    case EntropyKind::PseudoHuber: {
      const double t = w / param_;
      return param_ * param_ * std::sqrt(1.0 + t * t);
    }
    case EntropyKind::Hellinger:
      return -4.0 * std::sqrt(w);
    case EntropyKind::Inverse:
      return 0.5 / w;
    case EntropyKind::Renyi:
      return std::pow(w, param_ + 1.0) / (param_ * (param_ + 1.0));
  }
  return 0.0;
}

double EntropySpec::g(double w) const {
  check_primal(w);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return w;
    case EntropyKind::EmpiricalLikelihood:
      return -1.0 / w;
    case EntropyKind::ExponentialTilting:
      return std::log(w);
    case EntropyKind::ShiftedExpTilting:
      return std::log(w - 1.0);
    case EntropyKind::CrossEntropy:
      return std::log1p(-1.0 / w);
    case EntropyKind::PseudoHuber: {
      const double t = w / param_;
      return w / std::sqrt(1.0 + t * t);
    }
    case EntropyKind::Hellinger:
      return -2.0 / std::sqrt(w);
    case EntropyKind::Inverse:
      return -0.5 / (w * w);
    case EntropyKind::Renyi:
      return std::pow(w, param_) / param_;
  }
  return 0.0;
}

double EntropySpec::gprime(double w) const {
  check_primal(w);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return 1.0;
    case EntropyKind::EmpiricalLikelihood:
      return 1.0 / (w * w);
    case EntropyKind::ExponentialTilting:
      return 1.0 / w;
    case EntropyKind::ShiftedExpTilting:
      return 1.0 / (w - 1.0);
    case EntropyKind::CrossEntropy:
      return 1.0 / (w * w - w);
    case EntropyKind::PseudoHuber: {
      const double t = w / param_;
      return std::pow(1.0 + t * t, -1.5);
    }
    case EntropyKind::Hellinger:
      return std::pow(w, -1.5);
    case EntropyKind::Inverse:
      return std::pow(w, -3.0);
    case EntropyKind::Renyi:
      return std::pow(w, param_ - 1.0);
  }
  return 0.0;
}

double EntropySpec::f(double u) const {
  check_dual(u);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return u;
    case EntropyKind::EmpiricalLikelihood:
      return -1.0 / u;
    case EntropyKind::ExponentialTilting:
      return std::exp(u);
    case EntropyKind::ShiftedExpTilting:
      return 1.0 + std::exp(u);
    case EntropyKind::CrossEntropy:
      return -1.0 / std::expm1(u);
    case EntropyKind::PseudoHuber: {
      const double t = u / param_;
      return u / std::sqrt(1.0 - t * t);
    }
    case EntropyKind::Hellinger:
      return 4.0 / (u * u);
    case EntropyKind::Inverse:
      return 1.0 / std::sqrt(-2.0 * u);
    case EntropyKind::Renyi:
      return std::pow(param_ * u, 1.0 / param_);
  }
  return 0.0;
}

double EntropySpec::F(double u) const {
  check_dual(u);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return 0.5 * u * u;
    case EntropyKind::EmpiricalLikelihood:
      return -std::log(-u) - 1.0;
    case EntropyKind::ExponentialTilting:
      return std::exp(u);
    case EntropyKind::ShiftedExpTilting:
      return 1.0 + u + std::exp(u);
    case EntropyKind::CrossEntropy:
      return u - std::log(-std::expm1(u));
    case EntropyKind::PseudoHuber: {
      const double t = u / param_;
      return -param_ * param_ * std::sqrt(1.0 - t * t);
    }
    case EntropyKind::Hellinger:
      return -4.0 / u;
    case EntropyKind::Inverse:
      return -std::sqrt(-2.0 * u);
    case EntropyKind::Renyi:
      return param_ / (param_ + 1.0) * u * std::pow(param_ * u, 1.0 / param_);
  }
  return 0.0;
}

double EntropySpec::fprime(double u) const {
  check_dual(u);
  switch (kind_) {
    case EntropyKind::SquaredLoss:
      return 1.0;
    case EntropyKind::EmpiricalLikelihood:
      return 1.0 / (u * u);
    case EntropyKind::ExponentialTilting:
      return std::exp(u);
    case EntropyKind::ShiftedExpTilting:
      return std::exp(u);
    case EntropyKind::CrossEntropy: {
      const double e = std::expm1(u);
      return std::exp(u) / (e * e);
    }
    case EntropyKind::PseudoHuber: {
      const double t = u / param_;
      return std::pow(1.0 - t * t, -1.5);
    }
    case EntropyKind::Hellinger:
      return -8.0 / (u * u * u);
    case EntropyKind::Inverse:
      return std::pow(-2.0 * u, -1.5);
    case EntropyKind::Renyi:
      return std::pow(param_ * u, (1.0 - param_) / param_);
  }
  return 0.0;
}

std::string EntropySpec::name() const {
  switch (kind_) {
    case EntropyKind::SquaredLoss: return "sq";
    case EntropyKind::EmpiricalLikelihood: return "el";
    case EntropyKind::ExponentialTilting: return "et";
    case EntropyKind::ShiftedExpTilting: return "set";
    case EntropyKind::CrossEntropy: return "ce";
    case EntropyKind::PseudoHuber: return "ph";
    case EntropyKind::Hellinger: return "hd";
    case EntropyKind::Inverse: return "inv";
    case EntropyKind::Renyi: return "renyi";
  }
  return "?";
}

double eval(const EntropySpec& spec, EntropyFn which, double point) {
  switch (which) {
    case EntropyFn::G: return spec.G(point);
    case EntropyFn::g: return spec.g(point);
    case EntropyFn::gprime: return spec.gprime(point);
    case EntropyFn::f: return spec.f(point);
    case EntropyFn::F: return spec.F(point);
  }
  return 0.0;
}

std::pair<double, double> debias_covariate(const EntropySpec& spec, double d) {
  return {spec.g(d), 1.0 / spec.gprime(d)};
}

EntropyKind entropy_kind_from_name(std::string_view name) {
  if (name == "sq") return EntropyKind::SquaredLoss;
  if (name == "el") return EntropyKind::EmpiricalLikelihood;
  if (name == "et") return EntropyKind::ExponentialTilting;
  if (name == "set") return EntropyKind::ShiftedExpTilting;
  if (name == "ce") return EntropyKind::CrossEntropy;
  if (name == "ph") return EntropyKind::PseudoHuber;
  if (name == "hd") return EntropyKind::Hellinger;
  if (name == "inv") return EntropyKind::Inverse;
  if (name == "renyi") return EntropyKind::Renyi;
  throw std::invalid_argument("unknown entropy name: " + std::string(name));
}

}  // namespace gecal
