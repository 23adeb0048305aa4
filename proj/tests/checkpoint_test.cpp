#include <gtest/gtest.h>

#include <filesystem>

#include "repcali/checkpoint.hpp"
#include "repcali/methods.hpp"

using namespace repcali;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(std::size_t d_h = 8) {
  ModelConfig c;
  c.layers = 1;
  c.d_h = d_h;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab = 12;
  c.n_max = 10;
  c.dropout = 0.0;
  return c;
}

class CheckpointFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("repcali_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST(Fnv1aTest, KnownVectors) {
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ull);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a64(a, 1), 0xaf63dc4c8601ec8cull);
}

TEST(CheckpointTest, SerializeParseRoundTripIsByteIdentical) {
  Seq2SeqModel<float> m(small_config(), 3);
  TuningMethodSpec spec;
  attach(m, spec, 4);
  auto bytes = serialize_checkpoint(model_checkpoint(m, 17, "[model]\nL = 1\n"));
  auto data = parse_checkpoint(bytes);
  EXPECT_EQ(data.step, 17u);
  EXPECT_EQ(data.config, "[model]\nL = 1\n");
  EXPECT_EQ(data.tensors.size(), m.params().entries().size());
  EXPECT_EQ(serialize_checkpoint(data), bytes);
}

TEST_F(CheckpointFileTest, SaveLoadRestoresValuesExactly) {
  Seq2SeqModel<float> a(small_config(), 3), b(small_config(), 99);
  save_checkpoint(a, path("a.ckpt"), 5, "cfg");
  EXPECT_FALSE(fs::exists(path("a.ckpt.tmp")));
  auto data = load_checkpoint(b, path("a.ckpt"));
  EXPECT_EQ(data.step, 5u);
  for (const auto& [name, p] : a.params().entries()) EXPECT_EQ(b.params().get(name).vec(), p.tensor.vec()) << name;
  save_checkpoint(b, path("b.ckpt"), 5, "cfg");
  EXPECT_EQ(read_file_bytes(path("a.ckpt")), read_file_bytes(path("b.ckpt")));
}

TEST(CheckpointTest, EverySingleByteCorruptionIsDetected) {
  Seq2SeqModel<float> m(small_config(4), 3);
  const auto bytes = serialize_checkpoint(model_checkpoint(m, 1, "x"));
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    auto bad = bytes;
    bad[i] ^= 0x5A;
    EXPECT_THROW(parse_checkpoint(bad), CheckpointError) << "byte " << i;
  }
}

TEST(CheckpointTest, ErrorKinds) {
  using K = CheckpointError::Kind;
  Seq2SeqModel<float> m(small_config(4), 3);
  const auto bytes = serialize_checkpoint(model_checkpoint(m, 1, "x"));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      parse_checkpoint(b);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error";
    return K::io;
  };
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), K::bad_magic);
  auto version = bytes;
  version[4] = 2;
  EXPECT_EQ(kind_of(version), K::bad_version);
  EXPECT_EQ(kind_of(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 20)), K::truncated);
  auto payload = bytes;
  payload[payload.size() - 12] ^= 1;  // inside the last float
  EXPECT_EQ(kind_of(payload), K::digest_mismatch);
  auto trailer = bytes;
  trailer.back() ^= 1;
  EXPECT_EQ(kind_of(trailer), K::digest_mismatch);
}

TEST(CheckpointTest, CrossConfigLoadNamesTheTensor) {
  Seq2SeqModel<float> a(small_config(8), 1), b(small_config(16), 1);
  auto data = model_checkpoint(a, 0, "");
  try {
    load_into(b, data);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("tensor '"), std::string::npos) << e.what();
  }
}

TEST(CheckpointTest, UnknownAndMissingTensors) {
  using K = CheckpointError::Kind;
  Seq2SeqModel<float> base(small_config(), 1), injected(small_config(), 1);
  TuningMethodSpec spec;
  spec.kind = MethodKind::lora;
  spec.d_m = 2;
  spec.calibration.reset();
  attach(injected, spec, 1);
  try {
    load_into(base, model_checkpoint(injected, 0, ""));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), K::unknown_tensor);
  }
  try {
    load_into(injected, model_checkpoint(base, 0, ""));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), K::missing_tensor);
  }
}

TEST_F(CheckpointFileTest, MissingFileIsIoError) {
  try {
    load_checkpoint_data(path("nope.ckpt"));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::io);
  }
}
