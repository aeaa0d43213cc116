#include "emghand/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "emghand/errors.hpp"
#include "emghand/rng.hpp"

namespace emghand::stats {

namespace {

constexpr std::int64_t kShapiroCap = 5000;
constexpr std::uint64_t kSubsampleSeed = 0x5A3B17;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double clamp_p(double p) { return std::min(1.0, std::max(p, 1e-300)); }

// Wichura's AS 241 (PPND16): inverse of the standard normal CDF.
double inverse_normal_cdf(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("ppnd requires p in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                  6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
              1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double z;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    z = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    z = num / den;
  }
  return q < 0.0 ? -z : z;
}

// ascending-power polynomial c[0] + c[1] x + ...
double poly(std::span<const double> c, double x) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
  return acc;
}

}  // namespace

Tensor difference_matrix(const Tensor& estimated, const Tensor& truth) {
  if (!estimated.same_shape(truth))
    throw std::invalid_argument("difference_matrix shapes differ: " +
                                estimated.shape_str() + " vs " + truth.shape_str());
  Tensor out(estimated.shape());
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = std::abs(estimated[i] - truth[i]);
  return out;
}

ShapiroResult shapiro_wilk(std::span<const double> sample) {
  std::vector<double> x(sample.begin(), sample.end());
  if (static_cast<std::int64_t>(x.size()) > kShapiroCap) {
    // deterministic seeded subsample: partial Fisher-Yates
    Rng rng(kSubsampleSeed);
    for (std::int64_t i = 0; i < kShapiroCap; ++i) {
      const std::int64_t j =
          i + rng.uniform_int(static_cast<std::int64_t>(x.size()) - i);
      std::swap(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]);
    }
    x.resize(kShapiroCap);
  }
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < 3) throw std::invalid_argument("shapiro_wilk requires at least 3 values");
  std::sort(x.begin(), x.end());

  const double range = x.back() - x.front();
  const double scale = std::max({std::abs(x.front()), std::abs(x.back()), 1.0});
  if (range < 1e-15 * scale)
    throw std::invalid_argument("shapiro_wilk: sample is (effectively) constant");

  // AS R94 coefficient construction, uncensored case.
  const std::int64_t n2 = n / 2;
  std::vector<double> a(static_cast<std::size_t>(n2), 0.0);
  const double an = static_cast<double>(n);
  if (n == 3) {
    a[0] = std::numbers::sqrt2 / 2.0;
  } else {
    static constexpr double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static constexpr double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double an25 = an + 0.25;
    double summ2 = 0.0;
    for (std::int64_t i = 0; i < n2; ++i) {
      a[static_cast<std::size_t>(i)] =
          inverse_normal_cdf((static_cast<double>(i + 1) - 0.375) / an25);
      summ2 += a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, rsn) - a[0] / ssumm2;
    std::size_t first_kept;
    double fac;
    if (n > 5) {
      const double a2 = -a[1] / ssumm2 + poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * a[0] * a[0] - 2.0 * a[1] * a[1]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[0] = a1;
      a[1] = a2;
      first_kept = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * a[0] * a[0]) / (1.0 - 2.0 * a1 * a1));
      a[0] = a1;
      first_kept = 1;
    }
    for (std::size_t i = first_kept; i < a.size(); ++i) a[i] = -a[i] / fac;
  }

  // W is the squared correlation between the order statistics and the
  // antisymmetric coefficient vector, on range-scaled data.
  auto coef_at = [&](std::int64_t i) {
    const std::int64_t j = n - 1 - i;
    if (i < j) return -a[static_cast<std::size_t>(i)];
    if (i > j) return a[static_cast<std::size_t>(j)];
    return 0.0;
  };
  double sa = 0.0, sx = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    sa += coef_at(i);
    sx += x[static_cast<std::size_t>(i)] / range;
  }
  sa /= an;
  sx /= an;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double asa = coef_at(i) - sa;
    const double xsx = x[static_cast<std::size_t>(i)] / range - sx;
    ssa += asa * asa;
    ssx += xsx * xsx;
    sax += asa * xsx;
  }
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);

  ShapiroResult result;
  result.w = std::min(1.0, std::max(1.0 - w1, 1e-12));

  // significance level via Royston's normalizing transforms
  if (n == 3) {
    const double pi6 = 1.90985931710274;    // 6/pi
    const double stqr = 1.04719755119660;   // asin(sqrt(3/4))
    result.p = clamp_p(pi6 * (std::asin(std::sqrt(result.w)) - stqr));
    return result;
  }
  static constexpr double c3[4] = {0.5440, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[3] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double gpoly[2] = {-2.273, 0.459};

  const double y = std::log(w1);
  const double lx = std::log(an);
  double mu, sigma, z;
  if (n <= 11) {
    const double gamma = poly(gpoly, an);
    if (y >= gamma) {
      result.p = 1e-300;
      return result;
    }
    const double yy = -std::log(gamma - y);
    mu = poly(c3, an);
    sigma = std::exp(poly(c4, an));
    z = (yy - mu) / sigma;
  } else {
    mu = poly(c5, lx);
    sigma = std::exp(poly(c6, lx));
    z = (y - mu) / sigma;
  }
  result.p = clamp_p(1.0 - normal_cdf(z));
  return result;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

namespace {

struct RankedDiffs {
  std::vector<double> ranks;    // rank of |d_i| (ties averaged), parallel to signs
  std::vector<int> signs;       // +1 / -1
  double tie_correction = 0.0;  // sum of t^3 - t over tie groups
};

RankedDiffs rank_differences(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(d[a]) < std::abs(d[b]);
  });
  RankedDiffs out;
  out.ranks.resize(n);
  out.signs.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.signs[i] = d[i] > 0.0 ? 1 : -1;

  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = avg_rank;
    const double t = static_cast<double>(j - i + 1);
    out.tie_correction += t * t * t - t;
    i = j + 1;
  }
  return out;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                    std::span<const double> y,
                                    Alternative alternative, WilcoxonMethod method) {
  if (x.size() != y.size())
    throw std::invalid_argument("wilcoxon_signed_rank requires paired samples");
  std::vector<double> d;
  d.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (diff != 0.0) d.push_back(diff);  // zero differences discarded
  }
  WilcoxonResult result;
  result.n_used = static_cast<std::int64_t>(d.size());
  if (d.empty()) {
    result.degenerate = true;
    result.p = 1.0;
    return result;
  }

  const RankedDiffs ranked = rank_differences(d);
  double wplus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (ranked.signs[i] > 0) wplus += ranked.ranks[i];
  result.statistic = wplus;

  const std::int64_t n = result.n_used;
  const bool exact =
      method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && n <= 25);

  if (exact) {
    // Enumerate sign assignments by dynamic programming over doubled ranks
    // (integers even with averaged ties).
    std::vector<std::int64_t> r2;
    std::int64_t total = 0;
    for (double r : ranked.ranks) {
      r2.push_back(std::llround(2.0 * r));
      total += r2.back();
    }
    std::vector<double> ways(static_cast<std::size_t>(total + 1), 0.0);
    ways[0] = 1.0;
    for (std::int64_t r : r2)
      for (std::int64_t s = total; s >= r; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    const double denom = std::pow(2.0, static_cast<double>(n));
    const std::int64_t w2 = std::llround(2.0 * wplus);
    double cdf_le = 0.0, cdf_ge = 0.0;
    for (std::int64_t s = 0; s <= total; ++s) {
      if (s <= w2) cdf_le += ways[static_cast<std::size_t>(s)];
      if (s >= w2) cdf_ge += ways[static_cast<std::size_t>(s)];
    }
    cdf_le /= denom;
    cdf_ge /= denom;
    result.p = alternative == Alternative::less
                   ? clamp_p(cdf_le)
                   : clamp_p(std::min(1.0, 2.0 * std::min(cdf_le, cdf_ge)));
    return result;
  }

  const double dn = static_cast<double>(n);
  const double mu = dn * (dn + 1.0) / 4.0;
  const double var =
      dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - ranked.tie_correction / 48.0;
  const double sigma = std::sqrt(var);
  if (alternative == Alternative::less) {
    const double z = (wplus - mu + 0.5) / sigma;  // continuity correction
    result.p = clamp_p(normal_cdf(z));
  } else {
    const double z = std::max(0.0, (std::abs(wplus - mu) - 0.5) / sigma);
    result.p = clamp_p(std::min(1.0, 2.0 * (1.0 - normal_cdf(z))));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

/// Mean of each row: the per-tick joint-angle difference aggregated over
/// the eight joints.
std::vector<double> row_means(const Tensor& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < m.cols(); ++c) acc += m.at(r, c);
    out[static_cast<std::size_t>(r)] = acc / static_cast<double>(m.cols());
  }
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::vector<TaskReportRow> summarize(const std::map<TaskKey, TaskSample>& data) {
  std::vector<TaskReportRow> rows;
  for (sim::TaskId task : {sim::TaskId::i, sim::TaskId::ii, sim::TaskId::iii,
                           sim::TaskId::iv, sim::TaskId::v, sim::TaskId::vi}) {
    for (sim::Condition cond : {sim::Condition::full_view, sim::Condition::occluded}) {
      TaskReportRow row;
      row.task = task;
      row.condition = cond;
      const auto it = data.find({task, cond});
      if (it == data.end() || it->second.vision_diff.empty()) {
        rows.push_back(row);  // explicit gap, has_data stays false
        continue;
      }
      const TaskSample& s = it->second;
      if (!s.vision_diff.same_shape(s.multimodal_diff) || s.vision_diff.rank() != 2)
        throw std::invalid_argument("task sample difference matrices must be paired T x 8");
      row.has_data = true;
      std::tie(row.mean_vision, row.std_vision) = mean_std(s.vision_diff.values());
      std::tie(row.mean_multimodal, row.std_multimodal) = mean_std(s.multimodal_diff.values());
      auto shapiro_or_nan = [](const std::vector<double>& v) {
        try {
          return shapiro_wilk(v).p;
        } catch (const std::invalid_argument&) {
          return std::numeric_limits<double>::quiet_NaN();  // degenerate sample
        }
      };
      row.shapiro_p_vision = shapiro_or_nan(s.vision_diff.values());
      row.shapiro_p_multimodal = shapiro_or_nan(s.multimodal_diff.values());
      row.wilcoxon_p = wilcoxon_signed_rank(row_means(s.multimodal_diff),
                                            row_means(s.vision_diff), Alternative::less)
                           .p;
      row.occlusion_pct = s.occlusion_pct;
      row.significant = row.wilcoxon_p < 0.001;
      rows.push_back(row);
    }
  }
  return rows;
}

void render_report(const std::vector<TaskReportRow>& rows, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  const std::string csv_path = dir + "/table.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw DataError("cannot write report: " + csv_path);
  csv << "task,condition,mean_V,std_V,mean_M,std_M,shapiro_p_V,shapiro_p_M,"
         "wilcoxon_p,occlusion_pct\n";
  for (const auto& row : rows) {
    csv << sim::to_string(row.task) << ',' << sim::to_string(row.condition);
    if (!row.has_data) {
      for (int i = 0; i < 8; ++i) csv << ",NA";
      csv << '\n';
      continue;
    }
    csv << ',' << fmt(row.mean_vision) << ',' << fmt(row.std_vision) << ','
        << fmt(row.mean_multimodal) << ',' << fmt(row.std_multimodal) << ','
        << fmt(row.shapiro_p_vision) << ',' << fmt(row.shapiro_p_multimodal) << ','
        << fmt(row.wilcoxon_p) << ',' << fmt(row.occlusion_pct) << '\n';
  }
  if (!csv) throw DataError("failed writing report: " + csv_path);

  const std::string txt_path = dir + "/summary.txt";
  std::ofstream txt(txt_path, std::ios::binary | std::ios::trunc);
  if (!txt) throw DataError("cannot write report: " + txt_path);
  txt << "task  condition   mean_V   std_V    mean_M   std_M    wilcoxon_p  occl_pct  sig\n";
  char line[160];
  for (const auto& row : rows) {
    if (!row.has_data) {
      std::snprintf(line, sizeof(line), "%-5s %-11s %s\n", sim::to_string(row.task),
                    sim::to_string(row.condition), "(no data)");
      txt << line;
      continue;
    }
    std::snprintf(line, sizeof(line),
                  "%-5s %-11s %-8.3f %-8.3f %-8.3f %-8.3f %-11.3g %-9.2f %s\n",
                  sim::to_string(row.task), sim::to_string(row.condition),
                  row.mean_vision, row.std_vision, row.mean_multimodal,
                  row.std_multimodal, row.wilcoxon_p, row.occlusion_pct,
                  row.significant ? "***" : "");
    txt << line;
  }
  txt << "\n*** = Wilcoxon signed-rank (multimodal < vision) p < .001\n";
  if (!txt) throw DataError("failed writing report: " + txt_path);
}

}  // namespace emghand::stats
