#include "doctest.h"

#include <fstream>
#include <sstream>

#include "multires/chain_io.hpp"
#include "multires/errors.hpp"
#include "multires/synth.hpp"
#include "test_util.hpp"

using namespace multires;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Dataset small_data() {
  SynthConfig cfg;
  cfg.n_counties = 6;
  cfg.n_regions = 2;
  cfg.num_predictors = 2;
  return generate(cfg).data;
}

ChainConfig short_chain(int keep) {
  ChainConfig c;
  c.n_burn = 10;
  c.n_keep = keep;
  c.thin = 2;
  c.seed = 5;
  return c;
}

bool same_files(const fs::path& a, const fs::path& b) {
  for (const char* f : {"chain.csv", "clusters.csv", "loglik.csv"})
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_string("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_string("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto dir = testutil::temp_dir("sha");
  testutil::write_file(dir, "x.txt", "abc");
  CHECK(sha256_file(dir / "x.txt") == sha256_string("abc"));
}

TEST_CASE("dataset digest tracks content") {
  auto d = small_data();
  CHECK(dataset_digest(d) == dataset_digest(small_data()));
  std::vector<double> y;
  for (const auto& o : d.observations()) y.push_back(o.y);
  y[0] += 1e-9;
  CHECK(dataset_digest(d.with_responses(y)) != dataset_digest(d));
}

TEST_CASE("chain files and retention schedule") {
  auto d = small_data();
  auto dir = testutil::temp_dir("chain_files");
  auto cfg = short_chain(7);
  auto stats = run_chain(d, cfg, BaseMeasure::standard(2), dir);
  CHECK(stats.sweeps_run == 24);
  CHECK(stats.draws_written == 7);
  auto chain = load_chain(dir);
  REQUIRE(chain.num_draws() == 7);
  CHECK(chain.county_ids == d.graph().county_ids);
  CHECK(chain.years == d.grid().years);
  CHECK(chain.loglik.rows() == 7);
  CHECK(chain.loglik.cols() == d.num_observations());
  for (std::size_t g = 0; g < chain.num_draws(); ++g) {
    CHECK(chain.draw[g] == static_cast<std::int64_t>(g + 1));
    CHECK(chain.f[g].rows() == 6);
    CHECK(chain.labels[g].front() == 0);
  }
  auto header = slurp(dir / "chain.csv").substr(0, 40);
  CHECK(header.rfind("draw,sweep,alpha,M,s_C01", 0) == 0);
  auto clusters = slurp(dir / "clusters.csv");
  CHECK(clusters.rfind("draw,cluster,size,kappa1,kappa2,kappa3,lambda_y_1_1", 0) == 0);
  CHECK(clusters.find("tau") == std::string::npos);
  // Sweep numbers of retained draws: burn + thin * k.
  std::istringstream lines(slurp(dir / "chain.csv"));
  std::string line;
  std::getline(lines, line);
  for (int k = 1; std::getline(lines, line); ++k)
    CHECK(line.rfind(std::to_string(k) + "," + std::to_string(10 + 2 * k) + ",", 0) == 0);
  CHECK(chain.loglik.allFinite());
}

TEST_CASE("ppmx chain files carry predictor-side columns") {
  auto d = small_data();
  auto dir = testutil::temp_dir("chain_ppmx");
  auto cfg = short_chain(3);
  cfg.mode = Mode::ppmx;
  run_chain(d, cfg, BaseMeasure::standard(2), dir);
  auto clusters = slurp(dir / "clusters.csv");
  CHECK(clusters.find(",tau,rho,lambda_x_1_1") != std::string::npos);
}

TEST_CASE("resumed chains reproduce the uninterrupted chain bitwise") {
  auto d = small_data();
  auto base = BaseMeasure::standard(2);
  for (auto mode : {Mode::baseline, Mode::ppmx})
    for (auto bu : {BUpdate::ess, BUpdate::joint}) {
      CAPTURE(to_string(mode));
      CAPTURE(to_string(bu));
      auto full = testutil::temp_dir("resume_full");
      auto part = testutil::temp_dir("resume_part");
      auto cfg = short_chain(12);
      cfg.mode = mode;
      cfg.b_update = bu;
      run_chain(d, cfg, base, full);

      auto first = cfg;
      first.n_keep = 5;
      run_chain(d, first, base, part);
      // A stale tail beyond the checkpoint must be discarded on resume.
      std::ofstream(part / "chain.csv", std::ios::app) << "999,junk\n";
      RunOptions opt;
      opt.resume = part / "checkpoint.json";
      auto stats = run_chain(d, cfg, base, part, opt);
      CHECK(stats.draws_written == 12);
      CHECK(same_files(full, part));
    }
}

TEST_CASE("resume rejects incompatible settings") {
  auto d = small_data();
  auto base = BaseMeasure::standard(2);
  auto dir = testutil::temp_dir("resume_bad");
  auto cfg = short_chain(3);
  run_chain(d, cfg, base, dir);
  RunOptions opt;
  opt.resume = dir / "checkpoint.json";
  auto other = cfg;
  other.seed = 6;
  CHECK_THROWS_AS(run_chain(d, other, base, dir, opt), ValidationError);
  other = cfg;
  other.thin = 3;
  CHECK_THROWS_AS(run_chain(d, other, base, dir, opt), ValidationError);
  other = cfg;
  other.n_keep = 2;
  CHECK_THROWS_AS(run_chain(d, other, base, dir, opt), ValidationError);
  std::vector<double> y;
  for (const auto& o : d.observations()) y.push_back(o.y + 1.0);
  CHECK_THROWS_AS(run_chain(d.with_responses(y), cfg, base, dir, opt), ValidationError);
}

TEST_CASE("checkpoint round trip") {
  auto d = small_data();
  ChainConfig cfg = short_chain(3);
  cfg.mode = Mode::ppmx;
  auto base = BaseMeasure::standard(2);
  ModelState s = initial_state(d, cfg, base);
  s.coeffs.delta = d.all_predictors();
  s.coeffs.h_x = Matrix::Identity(2, 2);
  for (int i = 0; i < 5; ++i) gibbs_sweep(s, d, cfg, base);
  auto dir = testutil::temp_dir("ckpt");
  save_checkpoint({kCheckpointVersion, cfg, "abc", 2, s}, dir / "c.json");
  auto back = load_checkpoint(dir / "c.json");
  CHECK(back.draws_written == 2);
  CHECK(back.dataset_digest == "abc");
  CHECK(back.state.sweep == s.sweep);
  CHECK(back.state.clusters.labels == s.clusters.labels);
  CHECK(back.state.clusters.alpha == s.clusters.alpha);
  for (std::size_t l = 0; l < s.coeffs.B.size(); ++l) {
    CHECK(back.state.coeffs.B[l] == s.coeffs.B[l]);
    CHECK(back.state.coeffs.delta[l] == s.coeffs.delta[l]);
  }
  CHECK(back.state.coeffs.h_x == s.coeffs.h_x);
  for (int m = 0; m < s.clusters.num_clusters(); ++m) {
    CHECK(back.state.clusters.locations[m].lambda_y == s.clusters.locations[m].lambda_y);
    CHECK(back.state.clusters.locations[m].rho_x == s.clusters.locations[m].rho_x);
  }
  testutil::write_file(dir, "bad.json", "{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), ValidationError);
}
