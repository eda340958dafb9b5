#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "goat/common.hpp"

namespace goat::env {

struct HoldRecord {
  double width = 0.0;   // mm
  double length = 0.0;  // mm
  double height = 0.0;  // mm
};

// How hold records turn into width observations: a hold graspable at 90° also
// presents its length as a width.
enum class WidthFrom { kWidthOnly, kBothOrientations };

struct BivariateLogNormal {
  std::array<double, 2> mu{};     // means of (ln width, ln height)
  std::array<double, 2> sigma{};  // log-domain standard deviations
  double rho = 0.0;
};

struct RectRegion {
  double omega_lo = 0.0, omega_hi = 0.0;  // width bounds, mm
  double h_lo = 0.0, h_hi = 0.0;          // height bounds, mm
};

BivariateLogNormal fit_lognormal(const std::vector<HoldRecord>& records,
                                 WidthFrom width_from);

double pdf(const BivariateLogNormal& model, double width, double height);

// Midpoint-rule double sum on a near-square uniform grid of ~grid_points cells.
double cdf_rect_riemann(const BivariateLogNormal& model,
                        const RectRegion& region, int grid_points);
double cdf_rect_riemann_serial(const BivariateLogNormal& model,
                               const RectRegion& region, int grid_points);

// Fraction of seeded draws inside the region. Identical for any thread count:
// counts are integers accumulated per fixed-size block.
double cdf_rect_montecarlo(const BivariateLogNormal& model,
                           const RectRegion& region, std::int64_t n_samples,
                           std::uint64_t seed);
double cdf_rect_montecarlo_serial(const BivariateLogNormal& model,
                                  const RectRegion& region,
                                  std::int64_t n_samples, std::uint64_t seed);

// (standard-normal quantile, log-sample quantile) pairs, sorted ascending.
std::vector<std::pair<double, double>> qq_points(
    const std::vector<double>& samples);

double inverse_normal_cdf(double p);

// Seeded draws from a target model; lengths share the height coupling so both
// orientations of a generated hold follow the same marginal law.
std::vector<HoldRecord> synthetic_holds(int n, std::uint64_t seed,
                                        const BivariateLogNormal& target);
BivariateLogNormal default_synthetic_model();

std::vector<HoldRecord> load_holds_csv(const std::string& path);
void save_model_json(const BivariateLogNormal& model, const std::string& path);
BivariateLogNormal load_model_json(const std::string& path);
std::string model_to_json(const BivariateLogNormal& model);
BivariateLogNormal model_from_json(const std::string& text);

}  // namespace goat::env
