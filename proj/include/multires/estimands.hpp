#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "multires/kernels.hpp"
#include "multires/linkage.hpp"

namespace multires {

// Linear-interpolation sample quantile (type 7), p in [0, 1].
double quantile(std::vector<double> values, double p);

/// Cellwise posterior mean and 95% equal-tail interval, each N x T.
struct FunctionSummary {
  Matrix mean;
  Matrix lo;
  Matrix hi;
};

// Throws ValidationError with fewer than `min_draws` draws.
FunctionSummary fitted_functions(const std::vector<Matrix>& f_draws, std::size_t min_draws = 30);

struct PseudoStatistic {
  int county = 0;
  int year = 0;    // year index
  int block = 0;
  int period = 0;  // dense period index
  double value = 0.0;
  double precision = 0.0;  // 1 / sigma2 on the value's scale
  double subtracted = 0.0;  // fitted terms removed from the observation
};

// ytilde = y_bq - (other counties' fitted terms over j in q) - (county's own
// fitted terms at the other years of q), using posterior-mean f. Under the
// period-mean variant the observation is first rescaled to the sum scale.
std::vector<PseudoStatistic> pseudo_statistics(const Matrix& f_mean, const Dataset& data,
                                               bool period_mean = false);

struct RollupRow {
  std::string group;
  int year = 0;  // year index
  double sum_mean = 0.0;
  double sum_lo = 0.0;
  double sum_hi = 0.0;
  std::optional<double> observed;  // matching 1-year observation, if any
  std::optional<double> pct_diff;  // 100 * (y - sum_mean) / y
};

// Group -> member counties. Every group must be non-empty.
using Grouping = std::map<std::string, std::vector<int>>;

// One group per block with more than one county.
Grouping multi_county_blocks(const Dataset& data);

std::vector<RollupRow> rollup(const std::vector<Matrix>& f_draws, const Dataset& data,
                              const Grouping& groups);

struct FitReport {
  double neg_lpml = 0.0;
  double dic3 = 0.0;
  double mean_deviance = 0.0;
  std::vector<int> infinite_dic_observations;
  std::vector<int> degenerate_lpml_observations;
};

struct Dic3 {
  double dic3 = 0.0;
  double mean_deviance = 0.0;
  std::vector<int> infinite_observations;
};

// loglik: draws x observations of log f(y_r | theta_g).
Dic3 dic3(const Matrix& loglik);

struct LpmlOptions {
  double clip_quantile = 0.995;  // >= 1 disables clipping
  bool resample = true;          // false: exact weighted average over draws
  std::uint64_t seed = 1;
  std::size_t resample_size = 0;  // 0: number of draws
};

struct Lpml {
  double lpml = 0.0;
  std::vector<double> log_cpo;
  std::vector<int> degenerate;  // observations where one draw holds > 99% weight
};

Lpml lpml(const Matrix& loglik, const LpmlOptions& options = {});
// Harmonic-mean CPO (no clipping, no resampling).
Lpml lpml_harmonic(const Matrix& loglik);

FitReport fit_report(const Matrix& loglik, const LpmlOptions& options = {});

struct HoldoutRow {
  int year = 0;  // year index
  double mean_with = 0.0;
  double mean_without = 0.0;
  double lo_without = 0.0;
  double hi_without = 0.0;
  bool within_half_width = false;  // |with - without| < half-width of the exclusion interval
};

struct HoldoutTable {
  std::vector<HoldoutRow> rows;
  double max_relative_gap = 0.0;
  int years_within = 0;
};

// Throws ValidationError if the county has no 1-year observation on its own
// block in `data` (the full dataset).
HoldoutTable holdout_compare(const Dataset& data, int county, const FunctionSummary& with_data,
                             const FunctionSummary& without_data);

void write_summaries(const std::filesystem::path& path, const FunctionSummary& s,
                     const std::vector<std::string>& county_ids, const std::vector<int>& years);
void write_pseudo(const std::filesystem::path& path, const std::vector<PseudoStatistic>& rows,
                  const Dataset& data);
void write_rollup(const std::filesystem::path& path, const std::vector<RollupRow>& rows,
                  const std::vector<int>& years);
void write_fit(const std::filesystem::path& path, const FitReport& report);
void write_holdout(const std::filesystem::path& path, const HoldoutTable& table,
                   const std::vector<int>& years);

}  // namespace multires
