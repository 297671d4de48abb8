#include "perfhom/error.hpp"
#include "perfhom/harness.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

using namespace perfhom;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) {
    if (!l.empty()) lines.push_back(l);
  }
  return lines;
}

StudyConfig quick_config(TheoremTag tag) {
  StudyConfig c = StudyConfig::defaults(tag, 2);
  c.eps_list = {1.0 / 4, 1.0 / 6, 1.0 / 8};
  c.mesh.h = 0.1;
  c.mesh.cavity_segments = 12;
  c.rhs.resize(1);
  return c;
}

void expect_same_fit(const std::optional<FitResult>& a, const std::optional<FitResult>& b) {
  ASSERT_EQ(a.has_value(), b.has_value());
  if (!a) return;
  EXPECT_DOUBLE_EQ(a->slope, b->slope);
  EXPECT_DOUBLE_EQ(a->intercept, b->intercept);
  EXPECT_DOUBLE_EQ(a->stderr_slope, b->stderr_slope);
  EXPECT_EQ(a->points, b->points);
}

}  // namespace

TEST(Bound, Examples) {
  EXPECT_NEAR(predicted_bound(TheoremTag::T1a, 1.0 / 16, 1.0, 2), 0.3125, 1e-15);
  for (double eps : {1.0 / 8, 1.0 / 64}) {
    EXPECT_NEAR(predicted_bound(TheoremTag::T2, eps, 1.0, 2, std::sqrt(eps)), 2 * std::sqrt(eps), 1e-15);
  }
  // f vanishing on the cavities removes the second term.
  const double eps = 1.0 / 16;
  EXPECT_NEAR(predicted_bound(TheoremTag::T4, eps, 1.0, 2, 0.1, {1.0, 0.0}), eps + 0.1, 1e-15);
  EXPECT_GT(predicted_bound(TheoremTag::T4, eps, 1.0, 2, 0.1, {1.0, 0.5}), eps + 0.1);
  EXPECT_NEAR(predicted_bound(TheoremTag::T3a, eps, 1.0, 2, std::nullopt, {2.0, 0.0}), 2 * (eps * eps + eps), 1e-15);
  EXPECT_NEAR(predicted_bound(TheoremTag::T1b, eps, 0.25, 3), eps * 0.25 + 0.0625, 1e-15);
  EXPECT_NEAR(predicted_bound(TheoremTag::T3b, eps, 0.25, 2, std::nullopt, {1.0, 0.0}), eps * eps * 0.25 + 0.25,
              1e-15);
}

TEST(Bound, InterfaceTagsNeedKappa) {
  for (TheoremTag t : {TheoremTag::T2, TheoremTag::T4}) {
    try {
      predicted_bound(t, 0.1, 1.0, 2);
      FAIL() << "missing kappa accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::tag_mismatch);
    }
  }
  EXPECT_THROW(predicted_bound(TheoremTag::T1a, -0.1, 1.0, 2), Error);
}

TEST(Fit, ExactPowers) {
  const std::vector<std::pair<double, double>> one{{1, 1}, {0.5, 0.5}, {0.25, 0.25}};
  const auto a = fit_rate(one);
  EXPECT_NEAR(a.slope, 1.0, 1e-14);
  EXPECT_NEAR(a.stderr_slope, 0.0, 1e-14);
  EXPECT_EQ(a.points, 3);
  const std::vector<std::pair<double, double>> two{{1, 1}, {0.5, 0.25}, {0.25, 1.0 / 16}};
  EXPECT_NEAR(fit_rate(two).slope, 2.0, 1e-14);
}

TEST(Fit, NoisyHalfPower) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<double, double>> pts;
    for (double eps : perfhom::testing::default_sweep()) pts.emplace_back(eps, 3.0 * std::sqrt(eps) * (1 + 0.05 * U(rng)));
    const auto f = fit_rate(pts);
    EXPECT_NEAR(f.slope, 0.5, 0.1);
    EXPECT_LT(f.stderr_slope, 0.05);
  }
}

TEST(Fit, Rejections) {
  const std::vector<std::pair<double, double>> two{{1, 1}, {0.5, 0.5}};
  try {
    fit_rate(two);
    FAIL() << "two points accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_points);
  }
  const std::vector<std::pair<double, double>> bad{{1, 1}, {0.5, 0.0}, {0.25, 1}};
  EXPECT_THROW(fit_rate(bad), Error);
}

TEST(Config, DefaultsValidateAndRoundTrip) {
  for (TheoremTag t : {TheoremTag::T1a, TheoremTag::T1b, TheoremTag::T2, TheoremTag::T3a, TheoremTag::T3b,
                       TheoremTag::T4}) {
    for (int dim : {2, 3}) {
      const StudyConfig c = StudyConfig::defaults(t, dim);
      EXPECT_NO_THROW(c.validate());
      EXPECT_GE(c.rhs.size(), 3u);
      const nlohmann::json j = c;
      const StudyConfig back = j.get<StudyConfig>();
      EXPECT_EQ(nlohmann::json(back), j) << to_string(t) << " " << dim;
    }
  }
  EXPECT_EQ(theorem_tag_from_string("T3b"), TheoremTag::T3b);
  EXPECT_THROW(theorem_tag_from_string("T9"), Error);
}

TEST(Config, TagConsistencyEnforced) {
  StudyConfig c = StudyConfig::defaults(TheoremTag::T1a);
  c.nonlinearity.kind = NonlinearKind::linear;
  c.nonlinearity.sigma = 1.0;
  try {
    c.validate();
    FAIL() << "T1a with a != 0 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::tag_mismatch);
  }
  c = StudyConfig::defaults(TheoremTag::T1b);
  c.eta.exponent = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = StudyConfig::defaults(TheoremTag::T2);
  c.eta.exponent = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = StudyConfig::defaults(TheoremTag::T2);
  c.eps_list = {1.0 / 8, 1.0 / 8, 1.0 / 16};
  try {
    c.validate();
    FAIL() << "non-decreasing eps list accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
}

TEST(Config, LoadFromFile) {
  const std::string dir = perfhom::testing::temp_dir("config");
  {
    std::ofstream os(dir + "/c.json");
    os << R"({"tag": "T3a", "dim": 2, "eps": [0.25, 0.125, 0.0625], "mesh": {"h": 0.08}})";
  }
  const StudyConfig c = load_study_config(dir + "/c.json");
  EXPECT_EQ(c.tag, TheoremTag::T3a);
  EXPECT_EQ(c.eps_list.size(), 3u);
  EXPECT_DOUBLE_EQ(c.mesh.h, 0.08);
  EXPECT_GT(c.rhs.at(0).vanish_delta, 0.0);
  try {
    load_study_config(dir + "/missing.json");
    FAIL() << "missing file accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_failure);
  }
}

TEST(Rhs, VanishingCutoff) {
  RhsSpec r;
  r.kind = "affine_sine";
  r.vanish_delta = 0.1;
  const ScalarField f = r.field(0.0, 2);
  EXPECT_EQ(f(Vec3(0.3, 0.05, 0)), Complex(0.0));
  EXPECT_EQ(f(Vec3(0.3, -0.099, 0)), Complex(0.0));
  r.vanish_delta = 0.0;
  EXPECT_EQ(f(Vec3(0.3, 0.3, 0)), r.field(0.0, 2)(Vec3(0.3, 0.3, 0)));
}

TEST(Report, EmptyReportWritesHeaderOnlyCsv) {
  const std::string dir = perfhom::testing::temp_dir("empty_report");
  RateReport r;
  emit_report(r, dir);
  const auto lines = read_lines(dir + "/rates.csv");
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0], "eps,eta,l2,h1,bound,guard");
  EXPECT_FALSE(read_lines(dir + "/plot.gp").empty());
}

TEST(Report, JsonRoundTripAndAcceptedRows) {
  RateReport r;
  r.tag = TheoremTag::T4;
  r.lambda = -1.25;
  for (int i = 0; i < 5; ++i) {
    RateRow row;
    row.eps = 1.0 / (8 << i);
    row.l2 = 0.1 / (1 << i);
    row.h1 = 0.3 / (1 << i);
    row.bound = 0.5 / (1 << i);
    row.guard = i == 2 ? 0.3 : 0.01;
    row.accepted = i != 2;
    row.kappa = 0.2;
    row.f_l2 = {1.0, 2.0, 3.0};
    r.rows.push_back(row);
  }
  r.fit = FitResult{1.0, -1.0, 0.01, 4};
  r.fit_l2 = r.fit;
  r.window = {0.8, 1.2};
  r.pass = true;
  r.excluded = 1;
  r.notes = {"one row excluded"};
  const std::string dir = perfhom::testing::temp_dir("report");
  emit_report(r, dir);
  EXPECT_EQ(read_lines(dir + "/rates.csv").size(), 1u + 4u);
  std::ifstream is(dir + "/summary.json");
  const RateReport back = nlohmann::json::parse(is).get<RateReport>();
  EXPECT_EQ(back.tag, r.tag);
  EXPECT_EQ(back.lambda, r.lambda);
  ASSERT_EQ(back.rows.size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].eps, r.rows[i].eps);
    EXPECT_EQ(back.rows[i].h1, r.rows[i].h1);
    EXPECT_EQ(back.rows[i].accepted, r.rows[i].accepted);
    EXPECT_EQ(back.rows[i].f_l2, r.rows[i].f_l2);
  }
  expect_same_fit(back.fit, r.fit);
  expect_same_fit(back.fit_h1, r.fit_h1);
  EXPECT_EQ(back.window, r.window);
  EXPECT_EQ(back.pass, r.pass);
  EXPECT_EQ(back.excluded, r.excluded);
  EXPECT_EQ(back.notes, r.notes);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
}

TEST(Study, ZeroRhsIsDegenerate) {
  StudyConfig c = quick_config(TheoremTag::T1a);
  c.rhs[0].amplitude = 0.0;
  const RateReport r = run_study(c);
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.fit.has_value());
  ASSERT_EQ(r.rows.size(), 3u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.l2, 0.0);
    EXPECT_EQ(row.h1, 0.0);
  }
}

TEST(Study, GuardFailuresNeverEnterTheFit) {
  StudyConfig c = quick_config(TheoremTag::T3a);
  c.mesh.guard_limit = 1e-9;
  const RateReport r = run_study(c);
  EXPECT_EQ(r.excluded, 3);
  for (const auto& row : r.rows) EXPECT_FALSE(row.accepted);
  EXPECT_FALSE(r.fit.has_value());
  EXPECT_FALSE(r.pass);
  const std::string dir = perfhom::testing::temp_dir("guard_report");
  emit_report(r, dir);
  EXPECT_EQ(read_lines(dir + "/rates.csv").size(), 1u);
}

TEST(Study, JobsDoNotChangeResults) {
  const StudyConfig c = quick_config(TheoremTag::T2);
  const RateReport a = run_study(c, {1});
  const RateReport b = run_study(c, {3});
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].h1, b.rows[i].h1);
    EXPECT_EQ(a.rows[i].kappa, b.rows[i].kappa);
  }
  for (const auto& row : a.rows) {
    EXPECT_LT(row.guard, c.mesh.guard_limit) << row.eps;
    EXPECT_GT(row.kappa, 0.0);
    EXPECT_LE(row.h1, row.bound * 10.0);
  }
}
