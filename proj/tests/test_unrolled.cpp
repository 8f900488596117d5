#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "svdinv/experiments/training.hpp"
#include "test_support.hpp"

using namespace svdinv;
using namespace svdinv::experiments;
using namespace testsupport;

namespace {

double nuclear(const Mat<double>& x) {
  return Eigen::JacobiSVD<Mat<double>>(x).singularValues().sum();
}

double sigma_max(const Mat<double>& x) { return Eigen::JacobiSVD<Mat<double>>(x).singularValues()(0); }

}  // namespace

TEST(Admm, FullObservationCopiesData) {
  const CompletionSample s = make_completion_sample(12, 2, 1.0, 1);
  const Mat<double> m = Mat<double>::Ones(12, 12);
  // lambda / mu = 1e-8
  const Mat<double> x = unrolled_admm_forward<double>(s.Y, m, 1, constant_admm_params(1, 1e-8, 1, 1));
  EXPECT_LE(rel_err(x, s.Y), 1e-6);
}

TEST(Admm, EmptyMaskGivesZero) {
  const CompletionSample s = make_completion_sample(8, 2, 0.5, 2);
  const Mat<double> m = Mat<double>::Zero(8, 8);
  for (int n : {1, 4}) {
    const Mat<double> x = unrolled_admm_forward<double>(s.Y, m, n, constant_admm_params(n, 0.3, 1, 1));
    EXPECT_EQ(x.norm(), 0.0);
  }
}

TEST(Admm, ObservedEntriesAreKept) {
  const CompletionSample s = make_completion_sample(10, 2, 0.5, 3);
  const auto its = unrolled_iterates(build_admm<double>(3), s.Y, s.M, constant_admm_params(3, 0.5, 1, 1));
  ASSERT_EQ(its.size(), 3u);
  for (const Mat<double>& x : its) {
    EXPECT_EQ(s.M.cwiseProduct(x), s.M.cwiseProduct(s.Y));
  }
}

TEST(Admm, HandTunedBeatsZeroFill) {
  // Mean over a fixed set of instances; individual instances vary.
  double admm = 0, zero = 0;
  for (int i = 0; i < 50; ++i) {
    const CompletionSample s = make_completion_sample(20, 2, 0.5, 100 + static_cast<std::uint64_t>(i));
    const double lam = 0.1 * sigma_max(s.X);
    const Mat<double> x = unrolled_admm_forward<double>(s.Y, s.M, 10, constant_admm_params(10, lam, 1, 1));
    admm += rel_err(x, s.X);
    zero += rel_err(Mat<double>(s.M.cwiseProduct(s.Y)), s.X);
  }
  EXPECT_GE(zero / admm, 2.0);
}

TEST(Pgd, RankOneSingleStepRecovers) {
  std::mt19937_64 rng(4);
  const Mat<double> u = random_matrix<double>(7, 1, rng), v = random_matrix<double>(6, 1, rng);
  const Mat<double> xs = u * v.transpose();
  const double s1 = sigma_max(xs);  // rank 1: the only nonzero value
  const Mat<double> m = Mat<double>::Ones(7, 6);
  const Mat<double> x = unrolled_pgd_forward<double>(xs, m, 1, constant_pgd_params(1, 1.0, 1e-9 * s1));
  EXPECT_LE(rel_err(x, xs), 1e-8);
}

TEST(Pgd, FullShrinkage) {
  const CompletionSample s = make_completion_sample(9, 2, 0.6, 5);
  const double big = 2 * sigma_max(s.Y);
  const Mat<double> x = unrolled_pgd_forward<double>(s.Y, s.M, 1, constant_pgd_params(1, 1.0, big));
  EXPECT_EQ(x.norm(), 0.0);
}

TEST(Pgd, ObjectiveMonotone) {
  const CompletionSample s = make_completion_sample(20, 2, 0.5, 6);
  const double rho = 0.8, lam = 0.5;
  const Mat<double> b = s.M.cwiseProduct(s.Y);
  auto objective = [&](const Mat<double>& x) {
    return 0.5 * (s.M.cwiseProduct(x) - b).squaredNorm() + lam * nuclear(x);
  };
  const auto its = unrolled_iterates(build_pgd<double>(10), s.Y, s.M, constant_pgd_params(10, rho, lam));
  double prev = objective(b);
  for (const Mat<double>& x : its) {
    const double f = objective(x);
    EXPECT_LE(f, prev + 1e-10 * std::abs(prev));
    prev = f;
  }
}

TEST(Adam, ZeroLearningRateKeepsParams) {
  Adam opt(AdamConfig{0.0, 0.9, 0.999, 1e-8});
  std::map<std::string, double> p{{"a", 0.3}, {"b", -1.0}};
  const auto before = p;
  opt.step(p, {{"a", 5.0}, {"b", -2.0}});
  EXPECT_EQ(p, before);
  EXPECT_THROW(Adam(AdamConfig{-1.0, 0.9, 0.999, 1e-8}), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(AdamConfig{0.1, 0.9, 0.999, 0.0});
  std::map<std::string, double> p{{"a", 0.0}, {"b", 0.0}};
  opt.step(p, {{"a", 3.0}, {"b", -0.01}});
  EXPECT_NEAR(p["a"], -0.1, 1e-12);
  EXPECT_NEAR(p["b"], 0.1, 1e-12);
}

TEST(Training, InvStaysFiniteAndImproves) {
  TrainConfig cfg;
  const TrainResult r = train_unrolled(cfg);
  ASSERT_EQ(r.log.size(), 201u);
  EXPECT_FALSE(r.halted);
  EXPECT_EQ(r.nonfinite_events, 0);
  int injected = 0;
  for (const TrainLogLine& l : r.log) {
    EXPECT_TRUE(l.grad_finite) << "step " << l.step;
    injected += l.injected;
  }
  EXPECT_GT(injected, 5);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST(Training, ExactFailsOnInjectedSteps) {
  TrainConfig cfg;
  cfg.mode = GradMode::exact();
  const TrainResult r = train_unrolled(cfg);
  EXPECT_GE(r.nonfinite_events, 1);
  for (const TrainLogLine& l : r.log) {
    if (!l.grad_finite) {
      EXPECT_TRUE(l.injected) << "step " << l.step;
      ASSERT_TRUE(l.nonfinite_node.has_value());
    }
  }
  if (r.halted) {
    EXPECT_NE(r.diagnostic.find("step"), std::string::npos);
  }
}

TEST(Training, ZeroLearningRateKeepsLoss) {
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.adam.lr = 0;
  cfg.inject_duplicates = 0;
  const TrainResult r = train_unrolled(cfg);
  for (const TrainLogLine& l : r.log) {
    EXPECT_EQ(l.params, r.log.front().params);
    EXPECT_EQ(l.loss, r.log.front().loss);
  }
}

TEST(Training, ZeroStepsLogsInitialLineOnly) {
  TrainConfig cfg;
  cfg.steps = 0;
  const TrainResult r = train_unrolled(cfg);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].step, 0);
}

TEST(Training, PgdSolverRuns) {
  TrainConfig cfg;
  cfg.solver = Solver::Pgd;
  cfg.steps = 30;
  const TrainResult r = train_unrolled(cfg);
  EXPECT_EQ(r.nonfinite_events, 0);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST(Training, ConfigValidation) {
  TrainConfig cfg;
  cfg.sampling = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.rank = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.n_unroll = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(build_admm<double>(0), std::invalid_argument);
  EXPECT_THROW(parse_solver("sgd"), std::invalid_argument);
}
