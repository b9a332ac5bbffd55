#pragma once

// Tolerances shared by the library and its test suites.

namespace prpl::tol {

inline constexpr float kFiniteDiffStep = 1e-3f;
inline constexpr double kGradRelError = 1e-4;
inline constexpr double kScheduleAbs = 1e-6;
inline constexpr double kForwardNoiseEndpoint = 1e-5;
inline constexpr double kAlphaGuard = 1e-8;
inline constexpr double kVariancePreserving = 1e-6;
inline constexpr double kNormalizeRoundTrip = 1e-5;
inline constexpr double kStdFloor = 1e-6;
inline constexpr double kStatsReproduce = 1e-5;
inline constexpr double kParallelReorder = 1e-5;

}  // namespace prpl::tol
