#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rtlguard/lm.hpp"
#include "test_paths.hpp"

using namespace rtlguard;

namespace {

LmConfig small(std::uint64_t seed = 3) {
  LmConfig c;
  c.layers = 2;
  c.hidden = 32;
  c.heads = 4;
  c.context = 128;
  c.seed = seed;
  return c;
}

const std::string kDoc = "module inv(input a, output y);\n  assign y = ~a;\nendmodule\n";

TrainOptions quick(int steps) {
  TrainOptions o;
  o.steps = steps;
  o.batch = 1;
  o.warmup = 10;
  o.learning_rate = 1e-2;
  o.seed = 1;
  return o;
}

}  // namespace

TEST(LmConfig, Validation) {
  auto c = small();
  EXPECT_NO_THROW(c.validate());
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.context = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(LmTraining, LossDecreasesOnOneDocument) {
  LanguageModel m(small());
  const auto r = train_lm(m, {kDoc}, quick(200));
  EXPECT_LT(r.final_loss, r.initial_loss * 0.5);
  EXPECT_LT(perplexity(m, {kDoc}), 1.5);
  EXPECT_EQ(generate(m, kDoc.substr(0, 16), {}), kDoc.substr(16));
}

TEST(LmTraining, SameSeedSameWeights) {
  LanguageModel a(small()), b(small());
  train_lm(a, {kDoc}, quick(20));
  train_lm(b, {kDoc}, quick(20));
  EXPECT_TRUE(a == b);
  LanguageModel c(small(4));
  EXPECT_FALSE(a == c);
}

TEST(LmTraining, RejectsEmptyCorpusAndNonFiniteLoss) {
  LanguageModel m(small());
  EXPECT_THROW(train_lm(m, {}, quick(1)), ConfigError);
  m.parameters()[m.wte()] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train_lm(m, {kDoc}, quick(1)), NumericalError);
}

TEST(LmForward, UntrainedPerplexityNearVocabulary) {
  LanguageModel m(small());
  const double ppl = perplexity(m, {kDoc});
  EXPECT_NEAR(ppl, 258.0, 25.8);
}

TEST(LmForward, ActivationShapes) {
  LanguageModel m(small());
  const auto set = capture_activations(m, "123456789", {{1, Tap::residual}, {2, Tap::mlp_input}});
  EXPECT_EQ(set.hidden, 32);
  ASSERT_EQ(set.at(1, Tap::residual).size(), 10u);
  EXPECT_EQ(set.at(2, Tap::mlp_input).size(), 10u);
  EXPECT_EQ(set.at(1, Tap::residual)[0].size(), 32u);
  EXPECT_THROW(set.at(2, Tap::residual), ConfigError);
  EXPECT_EQ(encode_prompt("ab"), (std::vector<int>{kBos, 'a', 'b'}));
}

TEST(LmForward, IdentityHookChangesNothing) {
  LanguageModel m(small());
  EditHook id{{1, 2}, [](int, std::span<const float> h) { return std::vector<float>(h.begin(), h.end()); }};
  DecodeConfig d;
  d.max_new_tokens = 40;
  EXPECT_EQ(generate(m, "module", d), generate(m, "module", d, {id}));
  EXPECT_EQ(sequence_loss(m, kDoc), sequence_loss(m, kDoc, {id}));
}

TEST(LmForward, HookOnlyAffectsLaterLayers) {
  LanguageModel m(small());
  EditHook bump{{2}, [](int, std::span<const float> h) {
                  std::vector<float> out(h.begin(), h.end());
                  for (auto& v : out) v += 1.0f;
                  return out;
                }};
  const std::vector<TapSpec> taps{{1, Tap::residual}, {2, Tap::residual}};
  const auto plain = capture_activations(m, "abc", taps);
  const auto hooked = capture_activations(m, "abc", taps, {bump});
  EXPECT_EQ(plain.at(1, Tap::residual), hooked.at(1, Tap::residual));
  // residual tap is read before the hook runs
  EXPECT_EQ(plain.at(2, Tap::residual), hooked.at(2, Tap::residual));
  EXPECT_NE(sequence_loss(m, kDoc), sequence_loss(m, kDoc, {bump}));
}

TEST(LmForward, BadHooksAreRejected) {
  LanguageModel m(small());
  EditHook shrink{{1}, [](int, std::span<const float> h) { return std::vector<float>(h.size() - 1, 0.0f); }};
  EXPECT_THROW(sequence_loss(m, kDoc, {shrink}), DimensionError);
  EditHook nan{{1}, [](int, std::span<const float> h) {
                 return std::vector<float>(h.size(), std::numeric_limits<float>::quiet_NaN());
               }};
  EXPECT_THROW(sequence_loss(m, kDoc, {nan}), NumericalError);
  EditHook out_of_range{{3}, [](int, std::span<const float> h) { return std::vector<float>(h.begin(), h.end()); }};
  EXPECT_THROW(sequence_loss(m, kDoc, {out_of_range}), ConfigError);
}

TEST(LmDecode, SampledDecodingIsSeeded) {
  LanguageModel m(small());
  DecodeConfig d;
  d.temperature = 1.0;
  d.seed = 9;
  d.max_new_tokens = 30;
  EXPECT_EQ(generate(m, "x", d), generate(m, "x", d));
  DecodeConfig greedy;
  greedy.max_new_tokens = 30;
  EXPECT_EQ(generate(m, "x", greedy), generate(m, "x", greedy));
}

TEST(LmDecode, StopsAtContextLimit) {
  LanguageModel m(small());
  DecodeConfig d;
  d.max_new_tokens = 1000;
  const std::string prompt(100, 'a');
  EXPECT_LE(generate(m, prompt, d).size(), 128u - 101u + 1u);
  EXPECT_THROW(generate(m, std::string(200, 'a'), d), DimensionError);
}

TEST(LmIo, CheckpointRoundTrip) {
  LanguageModel m(small());
  train_lm(m, {kDoc}, quick(5));
  const auto dir = test_dir("lm_io");
  save_checkpoint(m, dir / "m.cglm");
  const auto back = load_checkpoint(dir / "m.cglm");
  EXPECT_TRUE(back == m);
  EXPECT_EQ(format_checkpoint(back), format_checkpoint(m));
  auto bad = format_checkpoint(m);
  bad[0] = 'Z';
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
  const auto good = format_checkpoint(m);
  EXPECT_THROW(parse_checkpoint(good.substr(0, good.size() - 7)), FormatError);
}

TEST(LmIo, ActivationFileRoundTrip) {
  LanguageModel m(small());
  const auto set = capture_activations(m, "abcd", {{1, Tap::residual}, {2, Tap::residual}});
  ActivationWriter w(32);
  w.add("doc0", set);
  int hidden = 0;
  const auto recs = parse_activations(w.data(), &hidden);
  EXPECT_EQ(hidden, 32);
  ASSERT_EQ(recs.size(), 10u);
  for (const auto& r : recs) {
    EXPECT_EQ(r.sample, "doc0");
    EXPECT_EQ(r.values, set.at(r.layer, r.tap)[static_cast<std::size_t>(r.position)]);
  }
  EXPECT_THROW(w.add(ActivationRecord{"x", 1, Tap::residual, 0, std::vector<float>(3)}), DimensionError);
}
