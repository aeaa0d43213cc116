#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emghand/handsim.hpp"
#include "emghand/tensor.hpp"

namespace emghand::stats {

enum class System { vision, multimodal };

/// Elementwise |estimated - truth|; shapes must match.
Tensor difference_matrix(const Tensor& estimated, const Tensor& truth);

struct ShapiroResult {
  double w = 0.0;
  double p = 0.0;
};

/// Shapiro-Wilk normality test, AS R94 (Royston 1995), uncensored samples.
/// Inputs larger than 5000 values are deterministically subsampled. Throws
/// std::invalid_argument for n < 3 or an (effectively) constant sample.
ShapiroResult shapiro_wilk(std::span<const double> sample);

enum class Alternative { less, two_sided };
enum class WilcoxonMethod { automatic, exact, normal };

struct WilcoxonResult {
  double statistic = 0.0;  // W+: rank sum of positive differences
  double p = 1.0;
  bool degenerate = false;  // every difference was zero
  std::int64_t n_used = 0;  // pairs remaining after zero-difference removal
};

/// Paired Wilcoxon signed-rank test. Zero differences are discarded, tied
/// ranks averaged. Exact p by enumeration over sign assignments for n <= 25
/// (dynamic programming over doubled ranks), normal approximation with tie
/// and continuity corrections beyond. `less` tests whether x is
/// stochastically smaller than y.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                    std::span<const double> y,
                                    Alternative alternative,
                                    WilcoxonMethod method = WilcoxonMethod::automatic);

struct TaskSample {
  Tensor vision_diff;      // |vision - truth|, rows stacked across recordings, T x 8
  Tensor multimodal_diff;  // |multimodal - truth|, same row order, T x 8
  double occlusion_pct = 0.0;
};

using TaskKey = std::pair<sim::TaskId, sim::Condition>;

struct TaskReportRow {
  sim::TaskId task = sim::TaskId::i;
  sim::Condition condition = sim::Condition::full_view;
  bool has_data = false;  // explicit gap marker when a task is missing
  double mean_vision = 0.0, std_vision = 0.0;
  double mean_multimodal = 0.0, std_multimodal = 0.0;
  double shapiro_p_vision = 0.0, shapiro_p_multimodal = 0.0;
  double wilcoxon_p = 0.0;  // multimodal < vision
  double occlusion_pct = 0.0;
  bool significant = false;  // wilcoxon_p < 0.001
};

/// One row per task x condition (12 rows), in task-major order. Tasks
/// without data are emitted as gap rows rather than dropped. Means, stds,
/// and Shapiro-Wilk run over all difference values; the Wilcoxon test pairs
/// the per-tick mean differences across the eight joints (the per-task
/// aggregate the comparison is reported on).
std::vector<TaskReportRow> summarize(const std::map<TaskKey, TaskSample>& data);

/// Writes `table.csv` (machine-readable, fixed column order) and
/// `summary.txt` (aligned table with significance stars) into `dir`.
/// Byte-deterministic for a fixed input.
void render_report(const std::vector<TaskReportRow>& rows, const std::string& dir);

}  // namespace emghand::stats
