#include <gtest/gtest.h>

#include "flsem/config.hpp"

using namespace flsem;

TEST(Config, EmptyGivesDefaults) {
  AppConfig c = parse_config_text("");
  EXPECT_EQ(c.sim.design, Design::Example1);
  EXPECT_EQ(c.sim.n, 200);
  EXPECT_EQ(c.sim.p, 20);
  EXPECT_EQ(c.sim.m, 100);
  EXPECT_DOUBLE_EQ(c.sim.rho1, 0.3);
  EXPECT_DOUBLE_EQ(c.sim.rho2, 0.7);
  EXPECT_EQ(c.pipe.jz, 10);
  EXPECT_DOUBLE_EQ(c.pipe.lambda_k, 1e-6);
  EXPECT_EQ(c.pipe.jy, 0);
  EXPECT_EQ(c.pipe.jy_grid, (std::vector<int>{4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(c.pipe.screen, ScreenMode::Auto);
  EXPECT_EQ(c.reps, 30);
  EXPECT_TRUE(c.warnings.empty());
  EXPECT_EQ(c.kernel_for(1).family, KernelFamily::Gaussian);
  EXPECT_EQ(c.kernel_for(2).family, KernelFamily::Product2d);
}

TEST(Config, NonPsdRho2Rejected) {
  EXPECT_THROW(parse_config_text("rho2=2.0\n"), ValidationError);
}

TEST(Config, DuplicateLastWins) {
  AppConfig c = parse_config_text("n = 50\n# comment\nn=70  # trailing\n");
  EXPECT_EQ(c.sim.n, 70);
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NE(c.warnings[0].find("duplicate"), std::string::npos);
}

TEST(Config, UnknownAndMalformed) {
  EXPECT_THROW(parse_config_text("colour=blue\n"), ValidationError);
  EXPECT_THROW(parse_config_text("n=abc\n"), ValidationError);
  EXPECT_THROW(parse_config_text("just text\n"), ValidationError);
  EXPECT_THROW(parse_config_text("screen=maybe\n"), ValidationError);
  EXPECT_THROW(parse_config_text("window_width=0.5\nwindow_stride=0.7\n"), ValidationError);
}

TEST(Config, SpecialValues) {
  AppConfig c = parse_config_text(
      "lambda_k=gcv\njy=6\njy_grid=2,3, 7\nlambda=default\nscreen=off\nsigma2=df\nsigma2_fit=null\n"
      "design=example2_2d\nfull_grid=true\nkernel=product:ou\n");
  EXPECT_TRUE(c.pipe.lambda_k_gcv);
  EXPECT_EQ(c.pipe.jy, 6);
  EXPECT_EQ(c.pipe.jy_grid, (std::vector<int>{2, 3, 7}));
  EXPECT_EQ(c.pipe.lambda, 0.0);
  EXPECT_EQ(c.pipe.screen, ScreenMode::Off);
  EXPECT_EQ(c.pipe.sigma2, Sigma2Mode::DfCharged);
  EXPECT_TRUE(c.pipe.sigma2_null_fit);
  EXPECT_EQ(c.sim.m1, 100);
  EXPECT_EQ(c.sim.m2, 150);
  EXPECT_EQ(c.kernel_for(2).inner, KernelFamily::OrnsteinUhlenbeck);
  EXPECT_THROW(c.kernel_for(1), ValidationError);
}

TEST(Config, HashTracksEffectiveValues) {
  AppConfig a = parse_config_text("n=50\n"), b = parse_config_text("n = 50 # same\n"),
            d = parse_config_text("n=51\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(d));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Io, IndexRoundTripIsOneBased) {
  std::string path = ::testing::TempDir() + "idx.csv";
  write_index_csv(path, {0, 4, 9});
  EXPECT_EQ(read_text(path), "1\n5\n10\n");
  EXPECT_EQ(read_index_csv(path), (std::vector<int>{0, 4, 9}));
}

TEST(Io, MatrixRoundTripExact) {
  Rng r(1);
  Matrix M = r.normal_matrix(7, 3);
  std::string path = ::testing::TempDir() + "m.csv";
  write_matrix_csv(path, M);
  EXPECT_EQ((read_matrix_csv(path) - M).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Io, RaggedRejected) {
  std::string path = ::testing::TempDir() + "bad.csv";
  {
    std::ofstream o(path);
    o << "1,2\n3\n";
  }
  EXPECT_THROW(read_matrix_csv(path), ValidationError);
}

TEST(Io, GridShapeDetected) {
  Grid g = Grid::uniform2d(4, 5);
  std::string path = ::testing::TempDir() + "g.csv";
  write_matrix_csv(path, g.points);
  Grid h = read_grid_csv(path);
  EXPECT_EQ(h.m1, 4);
  EXPECT_EQ(h.m2, 5);
  EXPECT_NEAR(h.weight, 1.0 / 20, 1e-15);
}
