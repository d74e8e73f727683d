#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "multires/kernels.hpp"
#include "multires/linkage.hpp"

namespace multires {

/// Synthetic benchmark layout. Counties are split into 1-, 3- and 5-year
/// tiers; each county is its own block publishing the periods of its tier,
/// and regional blocks plus one all-counties block publish every period.
struct SynthConfig {
  int n_counties = 30;
  int num_years = 5;
  int num_predictors = 3;  // including the intercept row
  std::array<double, 3> tier_fractions{0.2, 0.4, 0.4};
  int n_regions = 4;
  bool state_block = true;
  int first_year = 2006;

  RQParams truth_kappa{1.0, 2.0, 2.0};
  Matrix truth_lambda;  // empty: identity
  // 0: every county shares the fixed truth; k > 0: k locations drawn from
  // the standard base measure, counties assigned uniformly at random.
  int truth_clusters = 0;
  // Added to the intercept row of every B so the functions have a level.
  double truth_intercept_mean = 5.0;

  double sigma2_base = 1.0;
  double noise_scale = 1.0;  // noise variance is noise_scale * sigma2
  std::uint64_t seed = 1;

  void validate() const;
  // Counties per tier (1-year, 3-year, 5-year).
  std::array<int, 3> tier_counts() const;
};

struct GroundTruth {
  std::vector<Matrix> B;
  Matrix f;                     // N x T
  std::vector<int> labels;      // generating cluster of each county
  std::vector<double> noiseless_mean;  // per observation
  std::vector<int> tier;        // 1, 3 or 5 per county
};

struct SynthResult {
  Dataset data;
  GroundTruth truth;
};

SynthResult generate(const SynthConfig& config);

// The county's own block with its 1-year observations removed. Throws
// ValidationError if the county is not its own block. A county without
// 1-year observations comes back unchanged, so the operation is idempotent.
Dataset make_holdout(const Dataset& data, int county);

// True if the county is its own block and that block has 1-year data.
bool has_one_year_data(const Dataset& data, int county);

// truth.csv (county_id, year, f_true) and truth_labels.csv (county_id, label, tier).
void write_truth(const GroundTruth& truth, const Dataset& data, const std::filesystem::path& dir);

}  // namespace multires
