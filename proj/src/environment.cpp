#include "goat/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "goat/jsonio.hpp"

namespace goat::env {
namespace {

constexpr std::int64_t kMcBlock = 4096;

void validate_model(const BivariateLogNormal& m) {
  if (!(m.sigma[0] > 0.0) || !(m.sigma[1] > 0.0))
    throw DegenerateVariance("sigma components must be positive");
  if (!(m.rho > -1.0 && m.rho < 1.0))
    throw DegenerateVariance("rho must lie strictly inside (-1, 1)");
}

void validate_region(const RectRegion& r) {
  if (!(r.omega_lo <= r.omega_hi) || !(r.h_lo <= r.h_hi))
    throw std::invalid_argument("region bounds must be ordered");
}

// One uniform in [0,1) from the top 53 bits.
double unit_double(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

// Box-Muller keeps the draw sequence identical across standard libraries.
std::pair<double, double> gauss_pair(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_double(rng);  // (0, 1]
  const double u2 = unit_double(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(2.0 * M_PI * u2), r * std::sin(2.0 * M_PI * u2)};
}

std::pair<double, double> draw_width_height(const BivariateLogNormal& m,
                                            std::mt19937_64& rng) {
  const auto [z1, z2] = gauss_pair(rng);
  const double lw = m.mu[0] + m.sigma[0] * z1;
  const double lh = m.mu[1] + m.sigma[1] * (m.rho * z1 +
                                            std::sqrt(1.0 - m.rho * m.rho) * z2);
  return {std::exp(lw), std::exp(lh)};
}

std::int64_t mc_block_count(const BivariateLogNormal& m, const RectRegion& r,
                            std::uint64_t seed, std::int64_t block,
                            std::int64_t block_len) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(block)));
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < block_len; ++i) {
    const auto [w, h] = draw_width_height(m, rng);
    if (w >= r.omega_lo && w <= r.omega_hi && h >= r.h_lo && h <= r.h_hi)
      ++hits;
  }
  return hits;
}

struct RiemannGrid {
  int n = 0;
  double dw = 0.0, dh = 0.0;
};

RiemannGrid riemann_grid(const BivariateLogNormal& m, const RectRegion& r,
                         int grid_points) {
  validate_model(m);
  validate_region(r);
  if (grid_points < 4)
    throw std::invalid_argument("riemann grid needs at least 4 points");
  RiemannGrid g;
  g.n = std::max(2, static_cast<int>(std::lround(
                        std::sqrt(static_cast<double>(grid_points)))));
  g.dw = (r.omega_hi - r.omega_lo) / g.n;
  g.dh = (r.h_hi - r.h_lo) / g.n;
  return g;
}

double riemann_row(const BivariateLogNormal& m, const RectRegion& r,
                   const RiemannGrid& g, int iy) {
  const double h = r.h_lo + (iy + 0.5) * g.dh;
  double acc = 0.0;
  for (int ix = 0; ix < g.n; ++ix)
    acc += pdf(m, r.omega_lo + (ix + 0.5) * g.dw, h);
  return acc;
}

// Rows reduce in index order afterwards, so the result does not depend on the
// thread count.
double riemann_finish(const std::vector<double>& rows, const RiemannGrid& g) {
  double total = 0.0;
  for (double v : rows) total += v;
  return total * g.dw * g.dh;
}

std::int64_t mc_blocks(std::int64_t n_samples) {
  if (n_samples < 1000)
    throw std::invalid_argument("monte-carlo needs at least 1000 samples");
  return (n_samples + kMcBlock - 1) / kMcBlock;
}

}  // namespace

BivariateLogNormal fit_lognormal(const std::vector<HoldRecord>& records,
                                 WidthFrom width_from) {
  if (records.size() < 3)
    throw TooFewRecords("need at least 3 hold records, got " +
                        std::to_string(records.size()));
  std::vector<double> lw, lh;
  for (const auto& rec : records) {
    if (!(rec.width > 0.0) || !(rec.length > 0.0) || !(rec.height > 0.0))
      throw NonPositiveValue("hold dimensions must be strictly positive");
    lw.push_back(std::log(rec.width));
    lh.push_back(std::log(rec.height));
    if (width_from == WidthFrom::kBothOrientations) {
      lw.push_back(std::log(rec.length));
      lh.push_back(std::log(rec.height));
    }
  }

  const double n = static_cast<double>(lw.size());
  BivariateLogNormal m;
  for (double v : lw) m.mu[0] += v;
  for (double v : lh) m.mu[1] += v;
  m.mu[0] /= n;
  m.mu[1] /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    const double dx = lw[i] - m.mu[0];
    const double dy = lh[i] - m.mu[1];
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  m.sigma[0] = std::sqrt(sxx / n);  // maximum-likelihood scale (1/n)
  m.sigma[1] = std::sqrt(syy / n);
  if (!(m.sigma[0] > 1e-12) || !(m.sigma[1] > 1e-12))
    throw DegenerateVariance("log-domain variance is zero");
  m.rho = sxy / n / (m.sigma[0] * m.sigma[1]);
  if (!(m.rho > -1.0 && m.rho < 1.0))
    throw DegenerateVariance("log-domain correlation is degenerate");
  return m;
}

double pdf(const BivariateLogNormal& m, double width, double height) {
  if (width <= 0.0 || height <= 0.0) return 0.0;
  const double z1 = (std::log(width) - m.mu[0]) / m.sigma[0];
  const double z2 = (std::log(height) - m.mu[1]) / m.sigma[1];
  const double omr2 = 1.0 - m.rho * m.rho;
  const double q = (z1 * z1 - 2.0 * m.rho * z1 * z2 + z2 * z2) / omr2;
  return std::exp(-0.5 * q) /
         (2.0 * M_PI * m.sigma[0] * m.sigma[1] * std::sqrt(omr2) * width *
          height);
}

double cdf_rect_riemann(const BivariateLogNormal& m, const RectRegion& r,
                        int grid_points) {
  const RiemannGrid g = riemann_grid(m, r, grid_points);
  if (g.dw == 0.0 || g.dh == 0.0) return 0.0;
  std::vector<double> rows(g.n, 0.0);
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < g.n; ++iy) rows[iy] = riemann_row(m, r, g, iy);
  return riemann_finish(rows, g);
}

double cdf_rect_riemann_serial(const BivariateLogNormal& m, const RectRegion& r,
                               int grid_points) {
  const RiemannGrid g = riemann_grid(m, r, grid_points);
  if (g.dw == 0.0 || g.dh == 0.0) return 0.0;
  std::vector<double> rows(g.n, 0.0);
  for (int iy = 0; iy < g.n; ++iy) rows[iy] = riemann_row(m, r, g, iy);
  return riemann_finish(rows, g);
}

double cdf_rect_montecarlo(const BivariateLogNormal& m, const RectRegion& r,
                           std::int64_t n_samples, std::uint64_t seed) {
  validate_model(m);
  validate_region(r);
  const std::int64_t n_blocks = mc_blocks(n_samples);
  std::vector<std::int64_t> counts(n_blocks, 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < n_blocks; ++b) {
    const std::int64_t len = std::min(kMcBlock, n_samples - b * kMcBlock);
    counts[b] = mc_block_count(m, r, seed, b, len);
  }
  std::int64_t hits = 0;
  for (std::int64_t c : counts) hits += c;
  return static_cast<double>(hits) / static_cast<double>(n_samples);
}

double cdf_rect_montecarlo_serial(const BivariateLogNormal& m,
                                  const RectRegion& r, std::int64_t n_samples,
                                  std::uint64_t seed) {
  validate_model(m);
  validate_region(r);
  const std::int64_t n_blocks = mc_blocks(n_samples);
  std::int64_t hits = 0;
  for (std::int64_t b = 0; b < n_blocks; ++b) {
    const std::int64_t len = std::min(kMcBlock, n_samples - b * kMcBlock);
    hits += mc_block_count(m, r, seed, b, len);
  }
  return static_cast<double>(hits) / static_cast<double>(n_samples);
}

// Acklam's rational approximation; |relative error| < 1.2e-9 on (0, 1).
double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("quantile probability must be in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > phigh) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<std::pair<double, double>> qq_points(
    const std::vector<double>& samples) {
  if (samples.size() < 3)
    throw TooFewRecords("need at least 3 samples for quantile pairs");
  std::vector<double> logs;
  logs.reserve(samples.size());
  for (double s : samples) {
    if (!(s > 0.0))
      throw NonPositiveValue("quantile samples must be strictly positive");
    logs.push_back(std::log(s));
  }
  std::sort(logs.begin(), logs.end());
  const double n = static_cast<double>(logs.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i)
    out.emplace_back(inverse_normal_cdf((static_cast<double>(i) + 0.5) / n),
                     logs[i]);
  return out;
}

std::vector<HoldRecord> synthetic_holds(int n, std::uint64_t seed,
                                        const BivariateLogNormal& target) {
  validate_model(target);
  if (n < 1) throw std::invalid_argument("need at least one hold");
  std::mt19937_64 rng(mix_seed(seed, 0x686f6c64));  // "hold"
  std::vector<HoldRecord> out;
  out.reserve(n);
  const double tail = std::sqrt(1.0 - target.rho * target.rho);
  for (int i = 0; i < n; ++i) {
    const auto [zh, u] = gauss_pair(rng);
    const auto [v, unused] = gauss_pair(rng);
    (void)unused;
    HoldRecord rec;
    rec.height = std::exp(target.mu[1] + target.sigma[1] * zh);
    rec.width = std::exp(target.mu[0] + target.sigma[0] * (target.rho * zh + tail * u));
    rec.length =
        std::exp(target.mu[0] + target.sigma[0] * (target.rho * zh + tail * v));
    out.push_back(rec);
  }
  return out;
}

BivariateLogNormal default_synthetic_model() {
  BivariateLogNormal m;
  m.mu = {std::log(70.0), std::log(35.0)};
  m.sigma = {0.28, 0.35};
  m.rho = 0.3;
  return m;
}

std::vector<HoldRecord> load_holds_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw MalformedSpec(path + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "width_mm,length_mm,height_mm")
    throw MalformedSpec(path + ": expected header width_mm,length_mm,height_mm");
  std::vector<HoldRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    HoldRecord rec;
    char c1 = 0, c2 = 0;
    if (!(row >> rec.width >> c1 >> rec.length >> c2 >> rec.height) ||
        c1 != ',' || c2 != ',')
      throw MalformedSpec(path + ":" + std::to_string(lineno) +
                          ": expected three comma-separated numbers");
    if (!(rec.width > 0.0) || !(rec.length > 0.0) || !(rec.height > 0.0))
      throw NonPositiveValue(path + ":" + std::to_string(lineno) +
                             ": hold dimensions must be positive");
    out.push_back(rec);
  }
  return out;
}

std::string model_to_json(const BivariateLogNormal& m) {
  nlohmann::json j;
  j["mu"] = {m.mu[0], m.mu[1]};
  j["sigma"] = {m.sigma[0], m.sigma[1]};
  j["rho"] = m.rho;
  return j.dump(2) + "\n";
}

BivariateLogNormal model_from_json(const std::string& text) {
  const auto j = parse_json_text(text, "environment model");
  BivariateLogNormal m;
  try {
    m.mu = {j.at("mu").at(0).get<double>(), j.at("mu").at(1).get<double>()};
    m.sigma = {j.at("sigma").at(0).get<double>(),
               j.at("sigma").at(1).get<double>()};
    m.rho = j.at("rho").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSpec(std::string("environment model: ") + e.what());
  }
  validate_model(m);
  return m;
}

void save_model_json(const BivariateLogNormal& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedSpec("cannot write " + path);
  out << model_to_json(m);
}

BivariateLogNormal load_model_json(const std::string& path) {
  return model_from_json(read_text_file(path));
}

}  // namespace goat::env
