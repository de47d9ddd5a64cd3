#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twlab {

using Vec = std::vector<double>;

/// Reaction terms f : R^n -> R^n with closed-form first and second partials.
/// Jacobians are row-major n*n (jac[i*n+j] = df_i/du_j); Hessians are
/// n*n*n (hess[(i*n+j)*n+k] = d2f_i/du_j du_k).
class Kinetics {
 public:
  virtual ~Kinetics() = default;
  virtual std::size_t dim() const = 0;
  virtual void eval(std::span<const double> u, std::span<double> out) const = 0;
  /// f at N nodes at once; u and out are component-major (u[i*N + j]).
  virtual void eval_nodes(std::span<const double> u, std::size_t N, std::span<double> out) const;
  virtual void jacobian(std::span<const double> u, std::span<double> jac) const = 0;
  virtual void hessian(std::span<const double> u, std::span<double> hess) const = 0;
};

/// Two-component epidemic kinetics h = -a1 v1 + hbar(v2), g = -a2 v2 + gbar(v1).
class EpidemicKinetics : public Kinetics {
 public:
  struct Scalar {
    double value;
    double d1;
    double d2;
  };

  EpidemicKinetics(double a1, double a2) : a1_(a1), a2_(a2) {}

  virtual Scalar hbar(double x) const = 0;
  virtual Scalar gbar(double x) const = 0;
  virtual double hbar_value(double x) const { return hbar(x).value; }
  virtual double gbar_value(double x) const { return gbar(x).value; }

  double a1() const { return a1_; }
  double a2() const { return a2_; }

  std::size_t dim() const override { return 2; }
  void eval(std::span<const double> u, std::span<double> out) const override;
  void eval_nodes(std::span<const double> u, std::size_t N, std::span<double> out) const override;
  void jacobian(std::span<const double> u, std::span<double> jac) const override;
  void hessian(std::span<const double> u, std::span<double> hess) const override;

 private:
  double a1_;
  double a2_;
};

struct Holling2Params {
  double a1 = 1, a2 = 1;
  double d1 = 1, d2 = 1;
  double alpha1 = 2, alpha2 = 2;
  double beta1 = 1, beta2 = 1;
  double gamma1 = 1, gamma2 = 1;
};

struct RickerParams {
  double a = 0.5;
  double a1 = 1, a2 = 1;
  double d1 = 1, d2 = 1;
  double p = 4, q = 1, m = 1;
};

/// f_i(u) = b_i + sum_j L_ij u_j + sum_jk Q_ijk u_j u_k.
struct QuadraticTables {
  std::size_t n = 0;
  Vec constant;   // n
  Vec linear;     // n*n row-major
  Vec quadratic;  // n*n*n
};

/// An n-component discrete diffusion system with equilibria 0 and K.
/// Immutable once built; copies share the kinetics.
struct ReactionSystem {
  std::string name;
  Vec d;
  Vec K;
  std::shared_ptr<const Kinetics> kinetics;

  std::size_t n() const { return d.size(); }

  void f(std::span<const double> u, std::span<double> out) const { kinetics->eval(u, out); }
  Vec f(std::span<const double> u) const;
  Eigen::MatrixXd jacobian(std::span<const double> u) const;
  Vec hessian(std::span<const double> u) const;

  /// Non-null for the two-component epidemic models.
  const EpidemicKinetics* epidemic() const {
    return dynamic_cast<const EpidemicKinetics*>(kinetics.get());
  }
};

/// Jacobians of f at the two equilibria.
struct JacobianData {
  Eigen::MatrixXd A0;
  Eigen::MatrixXd AK;
};

JacobianData jacobians(const ReactionSystem& sys);

ReactionSystem make_holling2_model(const Holling2Params& p);
ReactionSystem make_ricker_model(const RickerParams& p);

/// Validates shapes, d >= 0 and K > 0; does not require f(K) = 0 (the audit
/// reports that).
ReactionSystem make_quadratic_model(std::string name, Vec d, Vec K, QuadraticTables tables);

/// max_i |f_i(point)|. Throws Domain when point lies outside [0, K].
double equilibrium_residual(const ReactionSystem& sys, std::span<const double> point);

/// Scale used for equilibrium tolerances: max(1, |K|_inf * |df(K)|_inf).
double equilibrium_scale(const ReactionSystem& sys);

/// max over a uniform sample of [0,K] of the row-sum norm of df.
double lipschitz_bound(const ReactionSystem& sys, int samples_per_axis = 21);

/// max over a uniform sample of [0,K] of |df_i/du_i|, per component.
Vec diagonal_slope_bound(const ReactionSystem& sys, int samples_per_axis = 41);

// ---------------------------------------------------------------------------
// Hypothesis audit

enum class Verdict { Pass, Fail, NotApplicable };

const char* verdict_name(Verdict v);

struct Witness {
  Vec point;
  std::string quantity;
  double value = 0.0;
};

struct HypothesisResult {
  std::string name;
  Verdict verdict = Verdict::NotApplicable;
  std::string detail;
  std::vector<Witness> witnesses;
};

struct HypothesisReport {
  int samples_per_axis = 0;
  std::vector<HypothesisResult> results;
  std::vector<std::string> caveats;

  const HypothesisResult& at(std::string_view name) const;
  bool passed(std::string_view name) const { return at(name).verdict == Verdict::Pass; }
  /// True when no applicable hypothesis failed.
  bool all_pass() const;
};

/// Evaluates (H1)-(H4), (A1)/(A2)/(A4) and, for epidemic models, (B1)-(B4).
/// Failures are reported, never thrown.
HypothesisReport audit_hypotheses(const ReactionSystem& sys, int samples_per_axis);

}  // namespace twlab
