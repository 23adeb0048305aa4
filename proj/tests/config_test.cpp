#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "repcali/config.hpp"

using namespace repcali;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ConfigTest, EmptyFileGivesDefaults) {
  EXPECT_EQ(parse_config(""), ExperimentConfig{});
  EXPECT_EQ(parse_config("# only a comment\n\n"), ExperimentConfig{});
}

TEST(ConfigTest, ParsesTypedValues) {
  auto c = parse_config(
      "[model]\nL = 3\nd_h = 32\n[calibration]\nlambda = 0.5\nseed_mode = constant_ones\n"
      "[method]\nkind = lora\nd_m = 4\nfreeze_decoder = true\n[task]\nkind = sort\nsizes = 100,10,10\n"
      "[compare]\nmethods = full, lora\n[out]\ndir = runs/x\n");
  EXPECT_EQ(c.model.layers, 3u);
  EXPECT_EQ(c.model.d_h, 32u);
  EXPECT_DOUBLE_EQ(c.calibration.lambda, 0.5);
  EXPECT_EQ(c.calibration.seed_mode, SeedMode::constant_ones);
  EXPECT_EQ(c.method.kind, MethodKind::lora);
  EXPECT_TRUE(c.method.freeze_decoder);
  EXPECT_EQ(c.task.kind, TaskKind::sort);
  EXPECT_EQ(c.task.dev_size, 10u);
  EXPECT_EQ(c.compare, (std::vector<MethodKind>{MethodKind::full, MethodKind::lora}));
  EXPECT_EQ(c.out_dir, "runs/x");
  EXPECT_FALSE(c.method_spec().calibration);
}

TEST(ConfigTest, NegativeLambdaNamesTheKey) {
  const auto msg = error_of("[calibration]\nlambda = -1\n");
  EXPECT_NE(msg.find("calibration.lambda"), std::string::npos) << msg;
}

TEST(ConfigTest, UnknownSectionAndKeyCarryLineNumbers) {
  auto msg = error_of("[model]\nL = 2\n[bogus]\n");
  EXPECT_NE(msg.find("t.cfg:3"), std::string::npos) << msg;
  msg = error_of("[model]\nwidth = 2\n");
  EXPECT_NE(msg.find("t.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("width"), std::string::npos) << msg;
}

TEST(ConfigTest, DuplicateKeyReportsBothLines) {
  const auto msg = error_of("[model]\nL = 2\n\nL = 3\n");
  EXPECT_NE(msg.find("t.cfg:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(ConfigTest, TypeMismatch) {
  EXPECT_NE(error_of("[model]\nL = two\n").find("t.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("[train]\nlr = fast\n"), "");
  EXPECT_NE(error_of("[method]\nfreeze_decoder = maybe\n"), "");
  EXPECT_NE(error_of("[method]\nkind = qlora\n"), "");
  EXPECT_NE(error_of("[model]\nL = -2\n"), "");
  EXPECT_NE(error_of("[model]\nL\n"), "");
  EXPECT_NE(error_of("L = 2\n"), "");
}

TEST(ConfigTest, CrossFieldValidation) {
  EXPECT_NE(error_of("[calibration]\nenabled = true\n[method]\nkind = lora\n"), "");
  EXPECT_EQ(error_of("[calibration]\nenabled = true\n[method]\nkind = full\n"), "");
  EXPECT_NE(error_of("[model]\nd_h = 30\nheads = 4\n"), "");
  EXPECT_NE(error_of("[task]\nvocab = 100\n"), "");
  EXPECT_NE(error_of("[model]\nn_max = 6\n"), "");
  EXPECT_NE(error_of("[method]\nkind = adapter\nd_m = 64\n"), "");
}

TEST(ConfigTest, CanonicalEchoRoundTrips) {
  auto c = parse_config("[method]\nkind = prefix\nprefix_len = 5\n[train]\nlr = 0.0125\nseed = 9\n");
  const auto text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
  EXPECT_EQ(config_digest(parse_config(text)), config_digest(c));
  c.train.seed = 10;
  EXPECT_NE(config_digest(c), config_digest(parse_config(text)));
}

TEST(ConfigTest, DoublesSurviveTheEcho) {
  ExperimentConfig c;
  c.train.lr = 0.1 + 0.2;
  c.calibration.lambda = 1.0 / 3.0;
  auto back = parse_config(serialize_config(c));
  EXPECT_EQ(back.train.lr, c.train.lr);
  EXPECT_EQ(back.calibration.lambda, c.calibration.lambda);
}

TEST(ConfigTest, OverridesApplyInOrderAndValidate) {
  ExperimentConfig c;
  apply_overrides(c, {"--train.lr=0.01", "--model.L=1", "--train.lr=0.02"});
  EXPECT_DOUBLE_EQ(c.train.lr, 0.02);
  EXPECT_EQ(c.model.layers, 1u);
  EXPECT_THROW(apply_overrides(c, {"--calibration.lambda=-1"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"--nodot=1"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"--model.L"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"--model.unknown=1"}), ConfigError);
}

TEST(ConfigTest, ShippedConfigsParse) {
  for (const char* name : {"toy.cfg", "compare_reverse.cfg", "latent_copy.cfg"}) {
    std::ifstream is(std::string(REPCALI_SOURCE_DIR) + "/configs/" + name);
    ASSERT_TRUE(is) << name;
    std::stringstream ss;
    ss << is.rdbuf();
    EXPECT_NO_THROW(parse_config(ss.str(), name)) << name;
  }
}
