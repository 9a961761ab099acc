#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nest/params.hpp"
#include "nest/serialize.hpp"

namespace nest {
namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nest_serialize_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Serialize, RecordLayoutIsLittleEndianHeaderThenPayload) {
  const auto t = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
  std::ostringstream out;
  write_tensor(out, t);
  const auto bytes = out.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 2 * 4u + 6 * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "NSTT");
  const unsigned char header[] = {2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 4, header, sizeof header), 0);
  float first = 0;
  std::memcpy(&first, bytes.data() + 16, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Serialize, RoundTripPreservesShapeAndBits) {
  const auto t = Tensor::from_vector({2, 1, 3}, {0.1f, -2.5f, 1e-30f, 3e30f, -0.0f, 7.0f});
  std::stringstream buf;
  write_tensor(buf, t);
  const auto back = read_tensor(buf);
  EXPECT_EQ(back.shape(), t.shape());
  ASSERT_EQ(back.numel(), t.numel());
  EXPECT_EQ(std::memcmp(back.values().data(), t.values().data(), 6 * sizeof(float)), 0);
}

TEST(Serialize, ScalarRoundTrip) {
  std::stringstream buf;
  write_tensor(buf, Tensor::scalar(4.5f));
  const auto back = read_tensor(buf);
  EXPECT_EQ(back.rank(), 0);
  EXPECT_EQ(back.item(), 4.5f);
}

TEST(Serialize, BadMagicAndTruncationAreIoErrors) {
  std::stringstream bad("NOPE\x01\x00\x00\x00");
  EXPECT_THROW(read_tensor(bad), IoError);

  std::ostringstream out;
  write_tensor(out, Tensor::ones({4}));
  auto bytes = out.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_tensor(cut), IoError);
}

TEST(Serialize, FileRoundTripAndMissingFile) {
  const auto dir = scratch_dir("file");
  save_tensor(dir / "t.nstt", Tensor::full({3, 3}, 2.0f));
  EXPECT_EQ(load_tensor(dir / "t.nstt").at({2, 1}), 2.0f);
  EXPECT_THROW(load_tensor(dir / "missing.nstt"), IoError);
}

TEST(Params, LinearTwoToThreeHasNineParameters) {
  const std::vector<ParamSpec> specs{{"w", {2, 3}}, {"b", {3}, Init::kZeros, false}};
  EXPECT_EQ(count_params(specs), 9);
  Rng rng(0);
  const auto set = init_params(specs, rng);
  EXPECT_EQ(set.count(), 9);
  for (float v : set["b"].values()) EXPECT_EQ(v, 0.0f);
  EXPECT_FALSE(set.entries()[1].decay);
}

TEST(Params, TruncatedNormalInitStaysWithinTwoStd) {
  Rng rng(3);
  const auto set = init_params({{"w", {64, 64}}}, rng, 0.02);
  for (float v : set["w"].values()) EXPECT_LE(std::abs(v), 0.04f + 1e-7f);
}

TEST(Params, DuplicateAndMissingNamesAreContractErrors) {
  ParamSet set;
  set.add("a", Tensor::ones({1}));
  EXPECT_THROW(set.add("a", Tensor::ones({1})), ContractError);
  EXPECT_THROW(set["b"], ContractError);
}

TEST(Checkpoint, RoundTripKeepsNamesOrderDecayAndValues) {
  Rng rng(1);
  const auto params = init_params({{"x/kernel", {3, 2}}, {"x/bias", {2}, Init::kZeros, false}, {"pe", {2, 2, 2}}}, rng);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(dir, params);
  const auto back = load_checkpoint(dir);
  ASSERT_EQ(back.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params.entries()[i];
    const auto& b = back.entries()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.decay, b.decay);
    EXPECT_EQ(a.tensor.shape(), b.tensor.shape());
    for (std::int64_t k = 0; k < a.tensor.numel(); ++k) EXPECT_EQ(a.tensor.values()[k], b.tensor.values()[k]);
  }

  auto target = init_params({{"x/kernel", {3, 2}}, {"x/bias", {2}, Init::kZeros, false}, {"pe", {2, 2, 2}}}, rng);
  restore_checkpoint(dir, target);
  EXPECT_EQ(target["pe"].values()[5], params["pe"].values()[5]);
}

TEST(Checkpoint, ShapeOrNameMismatchIsRejected) {
  Rng rng(1);
  const auto dir = scratch_dir("mismatch");
  save_checkpoint(dir, init_params({{"w", {3, 2}}}, rng));
  auto wrong_shape = init_params({{"w", {2, 3}}}, rng);
  EXPECT_THROW(restore_checkpoint(dir, wrong_shape), MismatchError);
  auto wrong_name = init_params({{"v", {3, 2}}}, rng);
  EXPECT_THROW(restore_checkpoint(dir, wrong_name), MismatchError);
  EXPECT_THROW(load_checkpoint(dir / "nowhere"), IoError);
}

}  // namespace
}  // namespace nest
