#include <gtest/gtest.h>

#include <cmath>

#include "rtlguard/rng.hpp"
#include "rtlguard/sae.hpp"
#include "support.hpp"
#include "test_paths.hpp"

using namespace rtlguard;

namespace {

// Identity encoder/decoder on two dimensions.
SparseAutoencoder identity_sae(double lambda) {
  SparseAutoencoder s(0, 2, 2, lambda);
  auto we = s.encoder_weights();
  we[0] = 1;
  we[3] = 1;
  auto wd = s.decoder_weights();
  wd[0] = 1;
  wd[3] = 1;
  return s;
}

SparseAutoencoder random_sae(std::size_t d, std::size_t m, double lambda, std::uint64_t seed) {
  SparseAutoencoder s(1, d, m, lambda);
  Rng rng(seed);
  for (auto& v : s.encoder_weights()) v = rng.normal() * 0.5;
  for (auto& v : s.encoder_bias()) v = rng.normal() * 0.1;
  for (auto& v : s.decoder_weights()) v = rng.normal() * 0.5;
  for (auto& v : s.decoder_bias()) v = rng.normal() * 0.1;
  return s;
}

SaeTrainOptions options(double lambda, int steps, std::size_t m = 64) {
  SaeTrainOptions o;
  o.latents = m;
  o.lambda = lambda;
  o.steps = steps;
  o.batch = 32;
  o.seed = 4;
  return o;
}

}  // namespace

TEST(Sae, ConstructorValidates) {
  EXPECT_THROW(SparseAutoencoder(0, 0, 4, 0.1), ConfigError);
  EXPECT_THROW(SparseAutoencoder(0, 4, 4, -1.0), ConfigError);
}

TEST(Sae, EncodeDecodeByHand) {
  const auto s = identity_sae(0.5);
  const std::vector<double> h{1.0, -2.0};
  EXPECT_EQ(s.encode(std::span<const double>(h)), (std::vector<double>{1.0, 0.0}));
  const std::vector<double> z{3.0, 0.5};
  EXPECT_EQ(s.decode(z), (std::vector<double>{3.0, 0.5}));
  const std::vector<float> hf{0.5f, 0.25f};
  EXPECT_EQ(s.encode(std::span<const float>(hf)), (std::vector<double>{0.5, 0.25}));
  EXPECT_THROW(s.encode(std::span<const double>(z.data(), 1)), DimensionError);
}

TEST(Sae, LossByHand) {
  const auto s = identity_sae(0.5);
  // z = (1, 0), reconstruction (1, 0), error (0, -2)
  const auto l = sae_loss(s, {{1.0, -2.0}});
  EXPECT_DOUBLE_EQ(l.mse, 4.0);
  EXPECT_DOUBLE_EQ(l.l1, 0.5);
  EXPECT_DOUBLE_EQ(l.total, 4.5);
  // second sample reconstructs exactly: z = (2, 3), l1 = 0.5 * 5
  const auto two = sae_loss(s, {{1.0, -2.0}, {2.0, 3.0}});
  EXPECT_DOUBLE_EQ(two.mse, 2.0);
  EXPECT_DOUBLE_EQ(two.l1, (0.5 + 2.5) / 2);
}

TEST(Sae, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  std::vector<std::vector<double>> batch(6, std::vector<double>(4));
  for (auto& x : batch)
    for (auto& v : x) v = rng.normal();
  auto s = random_sae(4, 8, 0.05, 2);
  SaeGradients g;
  sae_gradients(s, batch, g);
  const double eps = 1e-6;
  double worst = 0;
  auto check = [&](std::span<double> params, const std::vector<double>& grad) {
    ASSERT_EQ(params.size(), grad.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + eps;
      const double up = sae_loss(s, batch).total;
      params[i] = keep - eps;
      const double down = sae_loss(s, batch).total;
      params[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      worst = std::max(worst, std::fabs(numeric - grad[i]) / std::max(1.0, std::fabs(numeric)));
    }
  };
  check(s.encoder_weights(), g.we);
  check(s.encoder_bias(), g.be);
  check(s.decoder_weights(), g.wd);
  check(s.decoder_bias(), g.bd);
  EXPECT_LE(worst, 1e-4);
}

TEST(SaeTraining, DeterministicUnitColumnsAndLossDrop) {
  const auto data = testsupport::planted_dictionary(16, 8, 2, 600, 3).samples;
  const auto copy = data;
  SaeTrainReport r1, r2;
  const auto a = train_sae(data, options(0.01, 600), 2, &r1);
  const auto b = train_sae(data, options(0.01, 600), 2, &r2);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(data, copy);
  EXPECT_EQ(a.layer(), 2);
  EXPECT_LE(r1.final.total, 0.5 * r1.initial.total);
  for (std::size_t i = 0; i < a.latent_dim(); ++i) {
    double n = 0;
    for (double v : a.column(i)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
  EXPECT_LT(relative_mse(a, data), 0.2);
}

TEST(SaeTraining, SparsityFallsAsLambdaRises) {
  const auto data = testsupport::planted_dictionary(16, 8, 2, 400, 5).samples;
  double previous = 1e9;
  for (double lambda : {0.0, 0.01, 0.05, 0.2, 1.0}) {
    const auto s = train_sae(data, options(lambda, 400));
    const double l0 = mean_l0(s, data);
    EXPECT_LE(l0, previous + 1e-9) << "lambda " << lambda;
    previous = l0;
  }
}

TEST(SaeTraining, RejectsBadInput) {
  EXPECT_THROW(train_sae({}, options(0.1, 10)), ConfigError);
  std::vector<std::vector<double>> bad{{1.0, std::nan("")}};
  EXPECT_THROW(train_sae(bad, options(0.1, 10)), NumericalError);
}

TEST(SaeIo, RoundTrip) {
  auto s = random_sae(5, 7, 0.125, 6);
  s.normalize_columns();
  const auto dir = test_dir("sae_io");
  save_sae(s, dir / "s.cgsae");
  const auto back = load_sae(dir / "s.cgsae");
  EXPECT_TRUE(back == s);
  auto bad = format_sae(s);
  bad[1] = 'X';
  EXPECT_THROW(parse_sae(bad), FormatError);
  const auto good = format_sae(s);
  EXPECT_THROW(parse_sae(good.substr(0, good.size() - 3)), FormatError);
}
