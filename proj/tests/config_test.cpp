#include <gtest/gtest.h>

#include "starvqa/config.hpp"
#include "starvqa/errors.hpp"
#include "starvqa/params.hpp"

using namespace starvqa;

TEST(RunConfig, DefaultsAreFullSizeModel) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.encoder.frames, 8u);
  EXPECT_EQ(cfg.encoder.height, 224u);
  EXPECT_EQ(cfg.encoder.patch, 16u);
  EXPECT_EQ(cfg.encoder.dim, 768u);
  EXPECT_EQ(cfg.encoder.heads, 12u);
  EXPECT_EQ(cfg.encoder.blocks, 12u);
  EXPECT_EQ(cfg.encoder.patches_per_frame(), 196u);
  EXPECT_EQ(cfg.encoder.tokens(), 1569u);
  EXPECT_EQ(cfg.encoder.head_dim(), 64u);
  EXPECT_EQ(cfg.train.split, 0.8);
  EXPECT_EQ(cfg.train.lr, 1e-4);
  EXPECT_EQ(cfg.train.batch_size, 4u);
}

TEST(RunConfig, ParsesKeysCommentsAndBlankLines) {
  const auto cfg = RunConfig::parse("# tiny run\n\nframes = 2\n  dim=8  # inline\nheads = 2\nlr = 0.01\nprecision = f64\n"
                                    "decoder = linear-fit\n");
  EXPECT_EQ(cfg.encoder.frames, 2u);
  EXPECT_EQ(cfg.encoder.dim, 8u);
  EXPECT_EQ(cfg.encoder.heads, 2u);
  EXPECT_EQ(cfg.train.lr, 0.01);
  EXPECT_EQ(cfg.train.precision, Precision::f64);
  EXPECT_EQ(cfg.train.decoder, DecoderMode::linear_fit);
}

TEST(RunConfig, UnknownKeyRejectedWithLineNumber) {
  try {
    RunConfig::parse("frames = 2\n\nlearning_rate = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  }
}

TEST(RunConfig, BadValuesRejected) {
  EXPECT_THROW(RunConfig::parse("frames = two\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("frames\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("precision = f16\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("split = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("lr = -1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("dim = 10\nheads = 3\n"), ConfigError);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig cfg;
  cfg.encoder = EncoderConfig::tiny();
  cfg.train.lr = 0.0123456789012345;
  cfg.train.seed = 987654321987ULL;
  cfg.train.split = 0.7;
  cfg.train.decoder = DecoderMode::linear_fit;
  const auto text = cfg.to_text();
  const auto back = RunConfig::parse(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.encoder.mlp_width(), cfg.encoder.mlp_width());
  EXPECT_EQ(back.encoder.head_width(), cfg.encoder.head_width());
  EXPECT_EQ(back.train.lr, cfg.train.lr);
  EXPECT_EQ(back.train.seed, cfg.train.seed);
}

TEST(RunConfig, SetOverridesOneKey) {
  RunConfig cfg;
  cfg.set("seed", "42");
  cfg.set("frames", "4");
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_EQ(cfg.encoder.frames, 4u);
  EXPECT_THROW(cfg.set("nonsense", "1"), ConfigError);
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c = EncoderConfig::tiny();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig::tiny();
  c.blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig::tiny();
  c.patch = 9;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ParameterCount, FrozenValues) {
  EXPECT_EQ(parameter_count(EncoderConfig{}), 115738374u);
  EXPECT_EQ(parameter_count(EncoderConfig::tiny()), 2814u);
}

TEST(ParameterCount, RegistryMatchesClosedForm) {
  for (auto cfg : {EncoderConfig::tiny(), EncoderConfig{}}) {
    const auto params = make_params<float>(cfg);
    EXPECT_EQ(params.scalar_count(), parameter_count(cfg));
  }
  EXPECT_EQ(make_params<float>(EncoderConfig{}).size(), 223u);
  EXPECT_EQ(make_params<float>(EncoderConfig::tiny()).size(), 43u);
  EncoderConfig odd = EncoderConfig::tiny();
  odd.mlp_hidden = 5;
  odd.head_hidden = 3;
  odd.frames = 3;
  EXPECT_EQ(make_params<double>(odd).scalar_count(), parameter_count(odd));
}

TEST(Params, InitIsSeededTruncatedNormal) {
  const auto cfg = EncoderConfig::tiny();
  auto a = make_params<double>(cfg), b = make_params<double>(cfg), c = make_params<double>(cfg);
  init_params(a, 5, 0.02);
  init_params(b, 5, 0.02);
  init_params(c, 6, 0.02);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& name = a.name(i);
    for (double v : a[i].values()) {
      if (is_layernorm_gain(name))
        EXPECT_EQ(v, 1.0);
      else if (is_bias(name))
        EXPECT_EQ(v, 0.0);
      else
        EXPECT_LE(std::abs(v), 0.04);
    }
  }
}
