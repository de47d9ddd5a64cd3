#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "twlab/model.hpp"

namespace twlab {

enum class At { Zero, K };

/// Linearization data for the characteristic polynomials at 0 and K.
struct CharParams {
  Vec d;
  Eigen::MatrixXd A0;
  Eigen::MatrixXd AK;

  std::size_t n() const { return d.size(); }
  const Eigen::MatrixXd& A(At at) const { return at == At::Zero ? A0 : AK; }

  static CharParams from(const ReactionSystem& sys);
};

/// e^l + e^-l - 2, evaluated without cancellation near 0.
double shift_symbol(double lambda);

double eval_f_i(std::size_t i, double lambda, double c, const CharParams& p, At at = At::Zero);

/// J(lambda, c): diagonal d_i E(lambda) - c lambda + a_ii, off-diagonal a_ij.
Eigen::MatrixXd char_matrix(double lambda, double c, const CharParams& p, At at = At::Zero);

/// P(lambda, c) (or the barred version at K). n = 2 uses f1 f2 - b1 b2.
double eval_char_poly(double lambda, double c, const CharParams& p, At at = At::Zero);

/// The determinant path, used for n != 2 and as a cross-check for n = 2.
double eval_char_poly_det(double lambda, double c, const CharParams& p, At at = At::Zero);

enum class BracketKind {
  Negative,        // (-inf, 0)
  LowerPositive,   // (0, peak): contains lambda1
  UpperPositive,   // (peak, lambda_m^+): contains lambda2
  BeyondMax,       // (lambda_M^+, inf)
};

struct RootBracket {
  double lo = 0;
  double hi = 0;
  BracketKind kind = BracketKind::Negative;
};

/// Roots lambda_i^- < 0 < lambda_i^+ of f_i(., c), searched within [-50, 0) and (0, 50].
struct FiRoots {
  double minus;
  double plus;
};

FiRoots f_i_roots(std::size_t i, double c, const CharParams& p, At at = At::Zero);

struct PositiveRoots {
  double lambda1;
  double lambda2;
  double lambda_peak;   // maximizer of P on (0, lambda_m^+)
  double peak_value;
  double lambda_m_plus;
  double residual_scale;
};

/// Upper end of the positive search interval: min_i lambda_i^+.
double lambda_m_plus(double c, const CharParams& p);

/// Maximizer and maximum of P(., c) over (0, lambda_m^+).
std::pair<double, double> char_poly_peak(double c, const CharParams& p);

std::optional<PositiveRoots> find_positive_roots(double c, const CharParams& p);

/// Smallest c with a nonnegative peak of P; the returned value lies on the
/// side where two roots exist, within 1e-8 of the tangency.
double compute_c_star(const CharParams& p);

struct LowerThreshold {
  enum class Kind { Minimum, ZeroInfimum, InfimumAtInfinity, MinusInfinity };
  double value = 0;
  Kind kind = Kind::Minimum;
  double argmin = 0;  // NaN unless kind == Minimum
};

const char* lower_threshold_kind_name(LowerThreshold::Kind k);

/// min over lambda > 0 of (d_M E(lambda) + alpha_M) / lambda.
LowerThreshold compute_c_star_lower(const CharParams& p);
LowerThreshold compute_c_star_lower(double d_max, double alpha_max);

/// First positive crossing of the barred polynomial from negative to positive.
double find_lambda_bar(double c, const CharParams& p);

/// Decay rate rho > 0 of the approach to K: the root -rho of the barred
/// polynomial nearest to 0 on the negative axis.
double k_side_decay_rate(double c, const CharParams& p);

struct SignDeterminantEntry {
  int k = 0;  // leading block size
  int j = 0;  // appended row/column (1-based)
  double det = 0;
  bool ok = false;
};

struct SignDeterminantLedger {
  bool ok = true;
  std::vector<SignDeterminantEntry> entries;
};

/// (-1)^(k-1) det(A_{1..k, j}) > 0 for every k and j > k, plus a11 < 0.
SignDeterminantLedger check_sign_determinants(const Eigen::MatrixXd& A);

/// x > 0 with A x < 0, or nullopt when the determinant conditions fail.
std::optional<Vec> positive_vector(const Eigen::MatrixXd& A);

class Weight {
 public:
  Weight(double gamma, double xi0) : gamma_(gamma), xi0_(xi0) {}
  double operator()(double xi) const { return xi <= xi0_ ? omega1(xi) : 1.0; }
  double omega1(double xi) const;
  double gamma() const { return gamma_; }
  double xi0() const { return xi0_; }

 private:
  double gamma_;
  double xi0_;
};

Weight build_weight(double gamma, double xi0);

/// Positive null vector of J(lambda1, c), normalized to max entry 1.
Vec kernel_eigenvector(double lambda1, double c, const CharParams& p);

struct WeightParams {
  double epsilon;
  double gamma;
  double P_gamma;
  Vec pq;
};

/// gamma = lambda1 + epsilon and the positive vector of J(gamma, c)^T.
/// epsilon defaults to 0.1 (lambda2 - lambda1).
WeightParams select_weight_params(double c, const CharParams& p, std::optional<double> epsilon = {});

struct SpectralReport {
  std::size_t n = 0;
  Vec d;
  Eigen::MatrixXd A0;
  Eigen::MatrixXd AK;
  double c = 0;
  double c_star = 0;
  LowerThreshold c_star_lower;
  double lambda1 = 0;
  double lambda2 = 0;
  double lambda_bar = 0;
  double rho = 0;
  double epsilon = 0;
  double gamma = 0;
  double P_gamma = 0;
  double xi0 = 0;
  Vec eta;
  Vec pq;
  SignDeterminantLedger pq_ledger;

  CharParams params() const { return {d, A0, AK}; }
  /// FNV-1a digest of the scalar fields, printed in profile headers.
  std::string digest() const;
};

/// Assembles every field except xi0 (which needs the profile).
SpectralReport spectral_report(const ReactionSystem& sys, double c, std::optional<double> epsilon = {});

/// c from either an absolute speed or a multiplier of c*.
struct SpeedChoice {
  std::optional<double> c;
  std::optional<double> multiplier;
};

double resolve_speed(const CharParams& p, const SpeedChoice& s, double* c_star_out = nullptr);

}  // namespace twlab
