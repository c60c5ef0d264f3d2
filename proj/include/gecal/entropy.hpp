#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gecal {

// Generalized entropies G with derivative g = G', inverse f = g^{-1} and
// convex conjugate F(u) = -G(f(u)) + f(u)*u.  All evaluations are exact
// closed forms; f is never obtained by numeric inversion.
//
//   kind   G(w)                     g(w)              1/g'(w)        domain V
//   sq     w^2/2                    w                 1              (-inf,inf)
//   el     -log w                   -1/w              w^2            (0,inf)
//   et     w log w - w              log w             w              (0,inf)
//   set    (w-1)log(w-1) - w        log(w-1)          w-1            (1,inf)
//   ce     (w-1)log(w-1) - w log w  log(1-1/w)        w^2-w          (1,inf)
//   ph     M^2 sqrt(1+(w/M)^2)      w/sqrt(1+(w/M)^2) (w/g)^3        (-inf,inf)
//   hd     -4 sqrt(w)               -2/sqrt(w)        w^{3/2}        (0,inf)
//   inv    1/(2w)                   -1/(2w^2)         w^3            (0,inf)
//   renyi  w^{r+1}/(r(r+1))         w^r/r             w^{1-r}        (0,inf)
//
// PseudoHuber requires M > 0, Renyi requires r not in {0,-1}.

enum class EntropyKind {
  SquaredLoss,
  EmpiricalLikelihood,
  ExponentialTilting,
  ShiftedExpTilting,
  CrossEntropy,
  PseudoHuber,
  Hellinger,
  Inverse,
  Renyi,
};

enum class EntropyFn { G, g, gprime, f, F };

// Open interval, endpoints may be +-infinity.
struct Interval {
  double lo;
  double hi;
  bool contains(double x) const { return x > lo && x < hi; }
};

class EntropySpec {
 public:
  // Builds the spec for `kind`.  `params` holds M for PseudoHuber or r for
  // Renyi and must be empty for every other kind.  Throws
  // std::invalid_argument on bad parameters.
  static EntropySpec make(EntropyKind kind, const std::vector<double>& params = {});

  EntropyKind kind() const { return kind_; }
  double param() const { return param_; }
  bool has_param() const;

  Interval domain() const { return domain_; }       // V
  Interval dual_domain() const { return range_; }   // g(V)

  // Primal-side evaluations; `w` must lie strictly inside V.
  double G(double w) const;
  double g(double w) const;
  double gprime(double w) const;

  // Dual-side evaluations; `u` must lie strictly inside g(V).
  double f(double u) const;
  double F(double u) const;
  double fprime(double u) const;

  // Short name as accepted by the CLI (sq, el, et, set, ce, ph, hd, inv, renyi).
  std::string name() const;

 private:
  EntropySpec(EntropyKind kind, double param);
  void check_primal(double w) const;
  void check_dual(double u) const;

  EntropyKind kind_;
  double param_;
  Interval domain_;
  Interval range_;
};

// Dispatch by function tag; mirrors the member evaluators.
double eval(const EntropySpec& spec, EntropyFn which, double point);

// Returns (g(d), 1/g'(d)) for a design weight d in V.  The second component
// is the regression weight attached to unit i by the debiasing constraint.
std::pair<double, double> debias_covariate(const EntropySpec& spec, double d);

// Parses a CLI short name; throws std::invalid_argument on unknown names.
EntropyKind entropy_kind_from_name(std::string_view name);

}  // namespace gecal
