#include "multires/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "multires/csv.hpp"
#include "multires/errors.hpp"

namespace multires {

namespace {

long long obs_key(int block, int period) {
  return static_cast<long long>(block) * 1000003LL + period;
}

}  // namespace

// ---------------------------------------------------------------- YearGrid

YearGrid YearGrid::from_years(std::vector<int> years) {
  YearGrid g;
  g.time_points.resize(years.size());
  for (std::size_t j = 0; j < years.size(); ++j) g.time_points[j] = static_cast<double>(j);
  g.years = std::move(years);
  return g;
}

int YearGrid::index_of(int year) const {
  auto it = std::find(years.begin(), years.end(), year);
  if (it == years.end()) throw ValidationError("year " + std::to_string(year) + " not in grid");
  return static_cast<int>(it - years.begin());
}

void YearGrid::validate() const {
  if (years.size() < 2) throw ValidationError("year grid needs at least 2 years");
  if (time_points.size() != years.size())
    throw ValidationError("time_points length " + std::to_string(time_points.size()) +
                          " does not match " + std::to_string(years.size()) + " years");
  for (std::size_t j = 1; j < years.size(); ++j) {
    if (years[j] <= years[j - 1]) throw ValidationError("years must be strictly increasing");
    if (!(time_points[j] > time_points[j - 1]))
      throw ValidationError("time points must be strictly increasing");
  }
}

// ------------------------------------------------------------- PeriodTable

PeriodTable::PeriodTable(std::vector<int> ids, std::vector<std::vector<int>> years_per_period,
                         int num_years)
    : ids_(std::move(ids)), years_(std::move(years_per_period)), num_years_(num_years) {
  if (ids_.size() != years_.size()) throw ValidationError("period table: id/row count mismatch");
  if (ids_.empty()) throw ValidationError("period table is empty");
  std::set<int> seen;
  for (std::size_t q = 0; q < ids_.size(); ++q) {
    if (!seen.insert(ids_[q]).second)
      throw ValidationError("period " + std::to_string(ids_[q]) + " defined twice");
    auto& ys = years_[q];
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    if (ys.empty())
      throw ValidationError("period " + std::to_string(ids_[q]) + " links to no years");
    for (int j : ys)
      if (j < 0 || j >= num_years_)
        throw ValidationError("period " + std::to_string(ids_[q]) + " links to a year outside the grid");
    if (ys.back() - ys.front() + 1 != static_cast<int>(ys.size()))
      throw ValidationError("period " + std::to_string(ids_[q]) + " years are not contiguous");
  }
}

PeriodTable PeriodTable::five_year_default() {
  return PeriodTable({1, 2, 3, 4, 5, 6, 7, 8, 9},
                     {{0}, {1}, {2}, {3}, {4}, {0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {0, 1, 2, 3, 4}},
                     5);
}

std::optional<int> PeriodTable::find(int period_id) const {
  auto it = std::find(ids_.begin(), ids_.end(), period_id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<int>(it - ids_.begin());
}

const std::vector<int>& PeriodTable::years_of_period(int period_id) const {
  auto q = find(period_id);
  if (!q) throw ValidationError("period " + std::to_string(period_id) + " out of range");
  return years_[*q];
}

bool PeriodTable::covers(int q, int year) const {
  const auto& ys = years_.at(q);
  return year >= ys.front() && year <= ys.back();
}

std::optional<int> PeriodTable::single_year_period(int year) const {
  for (int q = 0; q < size(); ++q)
    if (years_[q].size() == 1 && years_[q][0] == year) return q;
  return std::nullopt;
}

// ------------------------------------------------------------ LinkageGraph

std::optional<int> LinkageGraph::find_county(const std::string& id) const {
  auto it = county_lookup_.find(id);
  if (it == county_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> LinkageGraph::find_block(const std::string& id) const {
  auto it = block_lookup_.find(id);
  if (it == block_lookup_.end()) return std::nullopt;
  return it->second;
}

void LinkageGraph::build_lookup() {
  county_lookup_.clear();
  block_lookup_.clear();
  for (int i = 0; i < num_counties(); ++i) county_lookup_[county_ids[i]] = i;
  for (int b = 0; b < num_blocks(); ++b) block_lookup_[block_ids[b]] = b;
}

LinkageGraph LinkageGraph::from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  LinkageGraph g;
  for (const auto& [block, county] : pairs) {
    if (!g.find_block(block)) {
      g.block_lookup_[block] = g.num_blocks();
      g.block_ids.push_back(block);
      g.members.emplace_back();
    }
    if (!g.find_county(county)) {
      g.county_lookup_[county] = g.num_counties();
      g.county_ids.push_back(county);
    }
    int b = *g.find_block(block);
    int c = *g.find_county(county);
    auto& m = g.members[b];
    if (std::find(m.begin(), m.end(), c) != m.end())
      throw ValidationError("duplicate link: block '" + block + "', county '" + county + "'");
    m.push_back(c);
  }
  g.blocks_of_county.assign(g.num_counties(), {});
  for (int b = 0; b < g.num_blocks(); ++b) {
    std::sort(g.members[b].begin(), g.members[b].end());
    for (int c : g.members[b]) g.blocks_of_county[c].push_back(b);
  }
  return g;
}

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(YearGrid grid, PeriodTable periods, LinkageGraph graph,
                 std::vector<Observation> observations, std::vector<Eigen::MatrixXd> predictors)
    : grid_(std::move(grid)),
      periods_(std::move(periods)),
      graph_(std::move(graph)),
      observations_(std::move(observations)),
      predictors_(std::move(predictors)) {
  validate_and_index();
}

void Dataset::validate_and_index() {
  grid_.validate();
  if (periods_.num_years() != grid_.size())
    throw ValidationError("period table covers " + std::to_string(periods_.num_years()) +
                          " years but the grid has " + std::to_string(grid_.size()));
  graph_.build_lookup();
  const int n = graph_.num_counties();
  const int nb = graph_.num_blocks();
  if (n == 0) throw ValidationError("no counties");
  if (static_cast<int>(graph_.members.size()) != nb ||
      static_cast<int>(graph_.blocks_of_county.size()) != n)
    throw ValidationError("linkage graph index sizes are inconsistent");

  for (int b = 0; b < nb; ++b) {
    const auto& m = graph_.members[b];
    if (m.empty()) throw ValidationError("block '" + graph_.block_ids[b] + "' has no counties");
    for (std::size_t i = 1; i < m.size(); ++i)
      if (m[i] == m[i - 1])
        throw ValidationError("duplicate link in block '" + graph_.block_ids[b] + "'");
    // A block named after a county is that county's self-block.
    if (auto c = graph_.find_county(graph_.block_ids[b]); c) {
      if (m.size() != 1 || m[0] != *c)
        throw ValidationError("block '" + graph_.block_ids[b] +
                              "' shares a county id but is not a self-link");
    }
  }
  for (int c = 0; c < n; ++c)
    if (graph_.blocks_of_county[c].empty())
      throw ValidationError("county '" + graph_.county_ids[c] + "' is not in any block");

  // Observations: sorted by (block, period), unique, positive variance.
  for (const auto& o : observations_) {
    if (o.block < 0 || o.block >= nb) throw ValidationError("observation references unknown block");
    if (o.period < 0 || o.period >= periods_.size())
      throw ValidationError("observation references unknown period");
    if (!(o.sigma2 > 0.0) || !std::isfinite(o.sigma2))
      throw ValidationError("non-positive variance for block '" + graph_.block_ids[o.block] +
                            "', period " + std::to_string(periods_.id(o.period)));
    if (!std::isfinite(o.y))
      throw ValidationError("non-finite response for block '" + graph_.block_ids[o.block] + "'");
  }
  std::stable_sort(observations_.begin(), observations_.end(), [](const auto& a, const auto& b) {
    return a.block != b.block ? a.block < b.block : a.period < b.period;
  });
  obs_lookup_.clear();
  published_.assign(nb, {});
  for (int r = 0; r < num_observations(); ++r) {
    const auto& o = observations_[r];
    if (!obs_lookup_.emplace(obs_key(o.block, o.period), r).second)
      throw ValidationError("duplicate observation for block '" + graph_.block_ids[o.block] +
                            "', period " + std::to_string(periods_.id(o.period)));
    published_[o.block].push_back(o.period);
  }

  // Predictors: one complete P x T matrix per county, intercept row of ones.
  if (static_cast<int>(predictors_.size()) != n)
    throw ValidationError("expected predictors for " + std::to_string(n) + " counties, got " +
                          std::to_string(predictors_.size()));
  const auto P = predictors_.front().rows();
  if (P < 1) throw ValidationError("need at least one predictor row");
  for (int c = 0; c < n; ++c) {
    const auto& x = predictors_[c];
    if (x.rows() != P || x.cols() != grid_.size())
      throw ValidationError("predictor matrix for county '" + graph_.county_ids[c] +
                            "' has the wrong shape");
    if (!x.allFinite())
      throw ValidationError("non-finite predictor for county '" + graph_.county_ids[c] + "'");
    for (int j = 0; j < x.cols(); ++j)
      if (x(0, j) != 1.0)
        throw ValidationError("intercept row must be all ones (county '" + graph_.county_ids[c] +
                              "')");
  }

  county_obs_.assign(n, {});
  for (int r = 0; r < num_observations(); ++r)
    for (int c : graph_.members[observations_[r].block]) county_obs_[c].push_back(r);
}

std::optional<int> Dataset::observation_index(int block, int period) const {
  auto it = obs_lookup_.find(obs_key(block, period));
  if (it == obs_lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<Cell> Dataset::nested_cells(int block, int period) const {
  if (!observation_index(block, period))
    throw ValidationError("block-period (" + std::to_string(block) + ", " +
                          std::to_string(period) + ") is not published");
  std::vector<Cell> out;
  for (int c : graph_.members[block])
    for (int j : periods_.years(period)) out.push_back({c, j});
  return out;
}

std::vector<BlockPeriod> Dataset::links_of_cell(int county, int year) const {
  if (county < 0 || county >= num_counties())
    throw ValidationError("unknown county index " + std::to_string(county));
  if (year < 0 || year >= num_years()) throw ValidationError("unknown year index " + std::to_string(year));
  std::vector<BlockPeriod> out;
  for (int r : county_obs_[county]) {
    const auto& o = observations_[r];
    if (periods_.covers(o.period, year)) out.push_back({o.block, o.period});
  }
  return out;
}

std::string Dataset::observation_label(int r) const {
  const auto& o = observations_.at(r);
  return graph_.block_ids[o.block] + ":" + std::to_string(periods_.id(o.period));
}

Dataset Dataset::with_observations(std::vector<Observation> observations) const {
  return Dataset(grid_, periods_, graph_, std::move(observations), predictors_);
}

Dataset Dataset::with_responses(std::span<const double> y) const {
  if (y.size() != observations_.size()) throw ValidationError("response count mismatch");
  Dataset copy = *this;
  for (std::size_t r = 0; r < y.size(); ++r) {
    if (!std::isfinite(y[r])) throw ValidationError("non-finite response");
    copy.observations_[r].y = y[r];
  }
  return copy;
}

// ---------------------------------------------------------------- file I/O

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options) {
  // predictors.csv defines the year grid.
  auto pred = read_csv(dir / "predictors.csv");
  const auto pc_county = pred.column("county_id");
  const auto pc_year = pred.column("year");
  std::vector<std::size_t> pcols;
  for (std::size_t k = 0; k < pred.header.size(); ++k)
    if (k != pc_county && k != pc_year) pcols.push_back(k);
  if (pcols.empty() && !options.add_intercept)
    throw ValidationError(pred.source.string() + ": no predictor columns");

  std::set<int> year_set;
  for (std::size_t i = 0; i < pred.rows.size(); ++i) {
    double y = pred.number(i, pc_year);
    if (y != std::floor(y)) throw ValidationError(pred.where(i) + ": year must be an integer");
    year_set.insert(static_cast<int>(y));
  }
  YearGrid grid = YearGrid::from_years({year_set.begin(), year_set.end()});
  if (options.time_points) grid.time_points = *options.time_points;
  grid.validate();
  const int T = grid.size();

  // periods.csv (optional).
  PeriodTable periods;
  if (std::filesystem::exists(dir / "periods.csv")) {
    auto per = read_csv(dir / "periods.csv");
    auto c_id = per.column("period_id");
    auto c_year = per.column("year");
    std::map<int, std::vector<int>> rows;
    for (std::size_t i = 0; i < per.rows.size(); ++i) {
      int id = static_cast<int>(per.number(i, c_id));
      int year = static_cast<int>(per.number(i, c_year));
      auto it = std::find(grid.years.begin(), grid.years.end(), year);
      if (it == grid.years.end())
        throw ValidationError(per.where(i) + ": year " + std::to_string(year) + " not in predictor grid");
      rows[id].push_back(static_cast<int>(it - grid.years.begin()));
    }
    std::vector<int> ids;
    std::vector<std::vector<int>> ys;
    for (auto& [id, v] : rows) {
      ids.push_back(id);
      ys.push_back(v);
    }
    periods = PeriodTable(ids, ys, T);
  } else {
    if (T != 5)
      throw ValidationError("periods.csv absent and the default period table needs 5 years, grid has " +
                            std::to_string(T));
    periods = PeriodTable::five_year_default();
  }

  // links.csv
  auto links = read_csv(dir / "links.csv");
  auto lc_block = links.column("block_id");
  auto lc_county = links.column("county_id");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::pair<std::string, std::string>> seen_links;
  for (std::size_t i = 0; i < links.rows.size(); ++i) {
    const auto& b = links.rows[i][lc_block];
    const auto& c = links.rows[i][lc_county];
    if (b.empty() || c.empty()) throw ValidationError(links.where(i) + ": empty id");
    if (!seen_links.emplace(b, c).second)
      throw ValidationError(links.where(i) + ": duplicate link (" + b + ", " + c + ")");
    pairs.emplace_back(b, c);
  }
  if (pairs.empty()) throw ValidationError(links.source.string() + ": no links");
  LinkageGraph graph = LinkageGraph::from_pairs(pairs);

  // obs.csv
  auto obs = read_csv(dir / "obs.csv");
  auto oc_block = obs.column("block_id");
  auto oc_period = obs.column("period_id");
  auto oc_y = obs.column("y");
  auto oc_s2 = obs.column("sigma2");
  std::vector<Observation> observations;
  std::set<std::pair<int, int>> seen;
  std::vector<bool> block_has_obs(graph.num_blocks(), false);
  for (std::size_t i = 0; i < obs.rows.size(); ++i) {
    const auto& bid = obs.rows[i][oc_block];
    auto b = graph.find_block(bid);
    if (!b) throw ValidationError(obs.where(i) + ": dangling reference to block '" + bid + "'");
    double pid = obs.number(i, oc_period);
    auto q = periods.find(static_cast<int>(pid));
    if (!q || pid != std::floor(pid))
      throw ValidationError(obs.where(i) + ": unknown period " + obs.rows[i][oc_period]);
    double y = obs.number(i, oc_y);
    double s2 = obs.number(i, oc_s2);
    if (!(s2 > 0.0) || !std::isfinite(s2))
      throw ValidationError(obs.where(i) + ": non-positive variance " + obs.rows[i][oc_s2]);
    if (!seen.insert({*b, *q}).second)
      throw ValidationError(obs.where(i) + ": duplicate (block, period) (" + bid + ", " +
                            obs.rows[i][oc_period] + ")");
    block_has_obs[*b] = true;
    observations.push_back({*b, *q, y, s2});
  }
  for (int b = 0; b < graph.num_blocks(); ++b)
    if (!block_has_obs[b])
      throw ValidationError(links.source.string() + ": dangling reference to block '" +
                            graph.block_ids[b] + "' (no observations)");

  // predictors: fill per-county matrices, checking completeness.
  const int P = static_cast<int>(pcols.size()) + (options.add_intercept ? 1 : 0);
  std::vector<Eigen::MatrixXd> x(graph.num_counties(), Eigen::MatrixXd::Constant(P, T, std::nan("")));
  for (std::size_t i = 0; i < pred.rows.size(); ++i) {
    const auto& cid = pred.rows[i][pc_county];
    auto c = graph.find_county(cid);
    if (!c)
      throw ValidationError(pred.where(i) + ": dangling reference to county '" + cid +
                            "' (not in links.csv)");
    int j = grid.index_of(static_cast<int>(pred.number(i, pc_year)));
    if (!std::isnan(x[*c](P - 1, j)))
      throw ValidationError(pred.where(i) + ": duplicate row for county '" + cid + "'");
    int row = 0;
    if (options.add_intercept) x[*c](row++, j) = 1.0;
    for (auto k : pcols) x[*c](row++, j) = pred.number(i, k);
  }
  for (int c = 0; c < graph.num_counties(); ++c)
    if (x[c].hasNaN())
      throw ValidationError(pred.source.string() + ": missing predictor cells for county '" +
                            graph.county_ids[c] + "'");

  return Dataset(std::move(grid), std::move(periods), std::move(graph), std::move(observations),
                 std::move(x));
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = data.graph();
  {
    std::ofstream out(dir / "links.csv");
    out << "block_id,county_id\n";
    for (int b = 0; b < g.num_blocks(); ++b)
      for (int c : g.members[b]) out << g.block_ids[b] << ',' << g.county_ids[c] << '\n';
  }
  {
    std::ofstream out(dir / "obs.csv");
    out << "block_id,period_id,y,sigma2\n";
    for (const auto& o : data.observations())
      out << g.block_ids[o.block] << ',' << data.periods().id(o.period) << ',' << format_double(o.y)
          << ',' << format_double(o.sigma2) << '\n';
  }
  {
    std::ofstream out(dir / "periods.csv");
    out << "period_id,year\n";
    for (int q = 0; q < data.periods().size(); ++q)
      for (int j : data.periods().years(q))
        out << data.periods().id(q) << ',' << data.grid().years[j] << '\n';
  }
  {
    std::ofstream out(dir / "predictors.csv");
    out << "county_id,year";
    const int P = data.num_predictors();
    for (int p = 1; p < P; ++p) out << ",p" << p;
    out << '\n';
    for (int c = 0; c < data.num_counties(); ++c) {
      const auto& x = data.predictors(c);
      for (int j = 0; j < data.num_years(); ++j) {
        out << g.county_ids[c] << ',' << data.grid().years[j];
        for (int p = 1; p < P; ++p) out << ',' << format_double(x(p, j));
        out << '\n';
      }
    }
  }
}

}  // namespace multires
