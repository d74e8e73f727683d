#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace multires {

/// Ordered year labels and the time coordinates the kernel sees.
struct YearGrid {
  std::vector<int> years;
  std::vector<double> time_points;

  // Unit-spaced coordinates 0..T-1.
  static YearGrid from_years(std::vector<int> years);

  int size() const { return static_cast<int>(years.size()); }
  int index_of(int year) const;
  void validate() const;
};

/// Q x T period-to-year incidence. Rows are contiguous runs of years.
class PeriodTable {
 public:
  PeriodTable() = default;
  PeriodTable(std::vector<int> ids, std::vector<std::vector<int>> years_per_period, int num_years);

  // 1-, 3- and 5-year periods over five years: q=1..5 single years,
  // q=6..8 rolling three-year windows, q=9 all five.
  static PeriodTable five_year_default();

  int size() const { return static_cast<int>(ids_.size()); }
  int num_years() const { return num_years_; }
  int id(int q) const { return ids_.at(q); }
  // Dense index of a period id; nullopt if unknown.
  std::optional<int> find(int period_id) const;
  // Year indices (0-based, ascending) covered by dense period q.
  const std::vector<int>& years(int q) const { return years_.at(q); }
  // Year indices covered by a period id; throws ValidationError if unknown.
  const std::vector<int>& years_of_period(int period_id) const;
  bool covers(int q, int year) const;
  int length(int q) const { return static_cast<int>(years_.at(q).size()); }
  // Dense index of the period covering exactly {year}, if any.
  std::optional<int> single_year_period(int year) const;

 private:
  std::vector<int> ids_;
  std::vector<std::vector<int>> years_;
  int num_years_ = 0;
};

/// Counties, blocks and the county-in-block incidence.
struct LinkageGraph {
  std::vector<std::string> county_ids;
  std::vector<std::string> block_ids;
  std::vector<std::vector<int>> members;           // per block, ascending county index
  std::vector<std::vector<int>> blocks_of_county;  // per county, ascending block index

  int num_counties() const { return static_cast<int>(county_ids.size()); }
  int num_blocks() const { return static_cast<int>(block_ids.size()); }
  std::optional<int> find_county(const std::string& id) const;
  std::optional<int> find_block(const std::string& id) const;

  // Builds from (block_id, county_id) pairs in first-appearance order.
  static LinkageGraph from_pairs(
      const std::vector<std::pair<std::string, std::string>>& pairs);

 private:
  friend class Dataset;
  void build_lookup();
  std::unordered_map<std::string, int> county_lookup_;
  std::unordered_map<std::string, int> block_lookup_;
};

struct Observation {
  int block = 0;   // dense block index
  int period = 0;  // dense period index
  double y = 0.0;
  double sigma2 = 1.0;
};

struct Cell {
  int county;
  int year;
  bool operator==(const Cell&) const = default;
};

struct BlockPeriod {
  int block;
  int period;
  bool operator==(const BlockPeriod&) const = default;
};

/// Validated multiresolution dataset. Immutable once constructed; every
/// invariant is checked in the constructor.
class Dataset {
 public:
  Dataset(YearGrid grid, PeriodTable periods, LinkageGraph graph,
          std::vector<Observation> observations, std::vector<Eigen::MatrixXd> predictors);

  const YearGrid& grid() const { return grid_; }
  const PeriodTable& periods() const { return periods_; }
  const LinkageGraph& graph() const { return graph_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const Eigen::MatrixXd& predictors(int county) const { return predictors_.at(county); }
  const std::vector<Eigen::MatrixXd>& all_predictors() const { return predictors_; }

  int num_counties() const { return graph_.num_counties(); }
  int num_blocks() const { return graph_.num_blocks(); }
  int num_years() const { return grid_.size(); }
  int num_predictors() const { return static_cast<int>(predictors_.front().rows()); }
  int num_observations() const { return static_cast<int>(observations_.size()); }

  std::optional<int> observation_index(int block, int period) const;
  // Periods with an observation for this block, ascending.
  const std::vector<int>& published_periods(int block) const { return published_.at(block); }
  // Observation indices that involve at least one cell of this county.
  const std::vector<int>& observations_of_county(int county) const {
    return county_obs_.at(county);
  }

  // (county, year) cells summed by observation (block, period), county-major.
  std::vector<Cell> nested_cells(int block, int period) const;
  // All observed (block, period) whose nested cells include (county, year).
  std::vector<BlockPeriod> links_of_cell(int county, int year) const;

  // "block_id:period_id"
  std::string observation_label(int r) const;

  // Copy with a different set of observations (validated again).
  Dataset with_observations(std::vector<Observation> observations) const;
  // Copy with responses replaced, same (block, period, sigma2) layout.
  Dataset with_responses(std::span<const double> y) const;

 private:
  void validate_and_index();

  YearGrid grid_;
  PeriodTable periods_;
  LinkageGraph graph_;
  std::vector<Observation> observations_;
  std::vector<Eigen::MatrixXd> predictors_;

  std::vector<std::vector<int>> published_;
  std::vector<std::vector<int>> county_obs_;
  std::unordered_map<long long, int> obs_lookup_;
};

struct LoadOptions {
  bool add_intercept = true;
  std::optional<std::vector<double>> time_points;
};

// Reads links.csv, obs.csv, predictors.csv and (optionally) periods.csv from
// `dir`. Throws ValidationError with file:line context on any violation.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

// Writes the same four-file bundle load_dataset reads. The intercept row is
// omitted from predictors.csv (re-added on load).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace multires
