#pragma once

#include <cmath>
#include <random>

#include "twlab/model.hpp"
#include "twlab/profile.hpp"
#include "twlab/spectral.hpp"

namespace fixture {

// high-precision oracle values (tests/oracle/oracles.py)
inline constexpr double holling_c_star = 2.0734446842053410047;
inline constexpr double holling_lambda_star = 0.90710329357628993426;
inline constexpr double holling_lambda1 = 0.60244574005006104999;  // at 1.1 c*
inline constexpr double holling_lambda2 = 1.3200710935363883278;
inline constexpr double holling_rho = 0.20138131745369126647;
inline constexpr double holling_gap_near_tangency = 0.00228539282763;  // at c*(1 + 1e-6)
inline constexpr double ricker_c_star = 1.3081478043352384857;
inline constexpr double ricker_lambda1 = 0.40125510642363144424;
inline constexpr double ricker_lambda2 = 0.92269719719249729093;
inline constexpr double lower_unit_value = 2.0734446842053410047;  // d = 1, alpha = 1
inline constexpr double lower_unit_argmin = 0.90710329357628993426;

inline twlab::ReactionSystem holling() { return twlab::make_holling2_model({}); }
inline twlab::ReactionSystem ricker() { return twlab::make_ricker_model({}); }

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Converged profile at 1.1 c*, cached per (model, m, L, tol).
const twlab::ProfileSolution& profile(const std::string& model, int m = 10, double L = 40, double tol = 1e-8);

}  // namespace fixture
