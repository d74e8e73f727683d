#include "multires/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "multires/csv.hpp"
#include "multires/errors.hpp"
#include "multires/mixture.hpp"
#include "multires/rng.hpp"

namespace multires {

namespace fs = std::filesystem;

namespace {

enum SynthStream : std::uint64_t {
  kStreamX = 1,
  kStreamB = 2,
  kStreamNoise = 3,
  kStreamLocation = 4,
  kStreamLabel = 5,
};

std::string county_name(int l, int n) {
  const int width = n >= 100 ? 3 : 2;
  char buf[16];
  std::snprintf(buf, sizeof buf, "C%0*d", width, l + 1);
  return buf;
}

// Period table over T years: each single year, every rolling 3-year window
// (when T >= 3), and the full span.
PeriodTable synth_periods(int T) {
  if (T == 5) return PeriodTable::five_year_default();
  std::vector<int> ids;
  std::vector<std::vector<int>> years;
  int id = 1;
  for (int j = 0; j < T; ++j) {
    ids.push_back(id++);
    years.push_back({j});
  }
  if (T > 3)
    for (int j = 0; j + 3 <= T; ++j) {
      ids.push_back(id++);
      years.push_back({j, j + 1, j + 2});
    }
  std::vector<int> all(T);
  for (int j = 0; j < T; ++j) all[j] = j;
  ids.push_back(id);
  years.push_back(all);
  return PeriodTable(ids, years, T);
}

std::optional<int> self_block_of(const Dataset& data, int county) {
  const auto& g = data.graph();
  if (auto b = g.find_block(g.county_ids.at(county)); b && g.members[*b].size() == 1) return b;
  return std::nullopt;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_counties < 2) throw ValidationError("need at least 2 counties");
  if (num_years < 2) throw ValidationError("need at least 2 years");
  if (num_predictors < 1) throw ValidationError("need at least the intercept predictor");
  double total = 0.0;
  for (double f : tier_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("tier fractions must lie in [0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("tier fractions must sum to 1");
  if (n_regions < 0) throw ValidationError("region count must be nonnegative");
  if (n_regions == 0 && !state_block)
    throw ValidationError("infeasible pattern: no multi-county blocks");
  if (!truth_kappa.valid()) throw ValidationError("truth kernel parameters must be positive");
  if (truth_lambda.size() > 0 &&
      (truth_lambda.rows() != num_predictors || truth_lambda.cols() != num_predictors))
    throw ValidationError("truth precision must be P x P");
  if (truth_clusters < 0) throw ValidationError("truth cluster count must be nonnegative");
  if (!(sigma2_base > 0.0)) throw ValidationError("sigma2 base must be positive");
  if (!(noise_scale >= 0.0)) throw ValidationError("noise scale must be nonnegative");
}

std::array<int, 3> SynthConfig::tier_counts() const {
  const int n1 = static_cast<int>(std::lround(tier_fractions[0] * n_counties));
  const int n3 = std::min(n_counties - n1,
                          static_cast<int>(std::lround(tier_fractions[1] * n_counties)));
  return {n1, n3, n_counties - n1 - n3};
}

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const int N = config.n_counties;
  const int T = config.num_years;
  const int P = config.num_predictors;
  const auto tiers = config.tier_counts();

  std::vector<int> years(T);
  for (int j = 0; j < T; ++j) years[j] = config.first_year + j;
  YearGrid grid = YearGrid::from_years(years);
  PeriodTable periods = synth_periods(T);

  GroundTruth truth;
  truth.tier.resize(N);
  std::vector<std::string> ids(N);
  for (int l = 0; l < N; ++l) {
    ids[l] = county_name(l, N);
    truth.tier[l] = l < tiers[0] ? 1 : (l < tiers[0] + tiers[1] ? 3 : 5);
  }

  // Links: self-blocks, then regions, then the all-counties block.
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int l = 0; l < N; ++l) pairs.emplace_back(ids[l], ids[l]);
  for (int r = 0; r < config.n_regions; ++r)
    for (int l = r; l < N; l += config.n_regions) pairs.emplace_back("R" + std::to_string(r + 1), ids[l]);
  if (config.state_block)
    for (int l = 0; l < N; ++l) pairs.emplace_back("STATE", ids[l]);
  LinkageGraph graph = LinkageGraph::from_pairs(pairs);

  // Predictors: intercept plus smooth positive curves.
  std::vector<Matrix> x(N, Matrix::Ones(P, T));
  for (int l = 0; l < N; ++l) {
    Rng rng = Rng::substream(config.seed, {kStreamX, static_cast<std::uint64_t>(l)});
    for (int p = 1; p < P; ++p) {
      const double a0 = rng.normal(0.0, 0.3);
      const double a1 = rng.normal(0.0, 0.5);
      const double a2 = rng.normal(0.0, 0.3);
      for (int j = 0; j < T; ++j) {
        const double t = (j - 0.5 * (T - 1)) / std::max(1, T - 1);
        x[l](p, j) = std::exp(a0 + a1 * t + a2 * t * t);
      }
    }
  }

  // Generating locations.
  std::vector<ClusterLocation> locations;
  truth.labels.assign(N, 0);
  if (config.truth_clusters == 0) {
    ClusterLocation loc;
    loc.lambda_y = config.truth_lambda.size() > 0 ? config.truth_lambda : Matrix::Identity(P, P);
    loc.kappa = config.truth_kappa;
    locations.push_back(loc);
  } else {
    const BaseMeasure base = BaseMeasure::standard(P);
    for (int m = 0; m < config.truth_clusters; ++m) {
      Rng rng = Rng::substream(config.seed, {kStreamLocation, static_cast<std::uint64_t>(m)});
      locations.push_back(base.draw(Mode::baseline, rng));
    }
    for (int l = 0; l < N; ++l) {
      Rng rng = Rng::substream(config.seed, {kStreamLabel, static_cast<std::uint64_t>(l)});
      truth.labels[l] = static_cast<int>(rng.index(static_cast<std::size_t>(config.truth_clusters)));
    }
  }

  truth.B.resize(N);
  truth.f.resize(N, T);
  for (int l = 0; l < N; ++l) {
    Rng rng = Rng::substream(config.seed, {kStreamB, static_cast<std::uint64_t>(l)});
    const auto& loc = locations[truth.labels[l]];
    truth.B[l] = matnorm_sample(loc.lambda_y, rq_covariance(loc.kappa, grid.time_points), rng);
    truth.B[l].row(0).array() += config.truth_intercept_mean;
    for (int j = 0; j < T; ++j) truth.f(l, j) = x[l].col(j).dot(truth.B[l].col(j));
  }

  // Observations.
  std::vector<Observation> obs;
  auto publish = [&](int b, int q) {
    const auto& members = graph.members[b];
    const auto& ys = periods.years(q);
    double mean = 0.0;
    for (int l : members)
      for (int j : ys) mean += truth.f(l, j);
    const double len = static_cast<double>(ys.size());
    const double cells = static_cast<double>(members.size()) * len;
    Observation o;
    o.block = b;
    o.period = q;
    o.sigma2 = config.sigma2_base / (cells * len);
    o.y = mean;
    obs.push_back(o);
  };
  for (int b = 0; b < graph.num_blocks(); ++b) {
    const auto& members = graph.members[b];
    const bool self = members.size() == 1 && graph.block_ids[b] == ids[members[0]];
    const int tier = self ? truth.tier[members[0]] : 1;
    for (int q = 0; q < periods.size(); ++q) {
      const int len = periods.length(q);
      bool include;
      if (tier == 1) include = true;
      else if (tier == 3) include = len >= std::min(3, T) && len > 1;
      else include = len == T;
      if (include) publish(b, q);
    }
  }
  Dataset clean(grid, periods, graph, obs, x);
  truth.noiseless_mean.resize(clean.num_observations());
  std::vector<double> y(clean.num_observations());
  for (int r = 0; r < clean.num_observations(); ++r) {
    const auto& o = clean.observations()[r];
    truth.noiseless_mean[r] = o.y;
    Rng rng = Rng::substream(config.seed, {kStreamNoise, static_cast<std::uint64_t>(r)});
    y[r] = o.y + std::sqrt(config.noise_scale * o.sigma2) * rng.normal();
  }
  return {clean.with_responses(y), std::move(truth)};
}

bool has_one_year_data(const Dataset& data, int county) {
  auto b = self_block_of(data, county);
  if (!b) return false;
  for (int q : data.published_periods(*b))
    if (data.periods().length(q) == 1) return true;
  return false;
}

Dataset make_holdout(const Dataset& data, int county) {
  if (county < 0 || county >= data.num_counties()) throw ValidationError("county out of range");
  auto b = self_block_of(data, county);
  if (!b)
    throw ValidationError("county " + data.graph().county_ids[county] +
                          " is not its own block; holdout needs a self-block");
  std::vector<Observation> kept;
  for (const auto& o : data.observations())
    if (!(o.block == *b && data.periods().length(o.period) == 1)) kept.push_back(o);
  return data.with_observations(std::move(kept));
}

void write_truth(const GroundTruth& truth, const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& ids = data.graph().county_ids;
  {
    std::ofstream os(dir / "truth.csv", std::ios::trunc);
    if (!os) throw ValidationError("cannot write " + (dir / "truth.csv").string());
    os << "county_id,year,f_true\n";
    for (int l = 0; l < data.num_counties(); ++l)
      for (int j = 0; j < data.num_years(); ++j)
        os << ids[l] << ',' << data.grid().years[j] << ',' << format_double(truth.f(l, j)) << '\n';
  }
  std::ofstream os(dir / "truth_labels.csv", std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + (dir / "truth_labels.csv").string());
  os << "county_id,label,tier\n";
  for (int l = 0; l < data.num_counties(); ++l)
    os << ids[l] << ',' << truth.labels[l] << ',' << truth.tier[l] << '\n';
}

}  // namespace multires
