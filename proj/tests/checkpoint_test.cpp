#include "cbe/checkpoint.hpp"

#include <gtest/gtest.h>

#include "cbe/error.hpp"
#include "test_support.hpp"

namespace cbe {
namespace {

using testing::TempDir;
using testing::make_set;
using testing::read_file;
using testing::write_file;

Checkpoint sample() {
  const ConceptSet set = make_set({2, 1});
  ModelConfig model = default_model_config(4, set.size(), 2);
  model.m = 5;
  Checkpoint ck{"xray", model, LossConfig{}, set.ids(), {"0", "1"}, init_params(3, model)};
  ck.params.norm_ema = {1.25, 0.1 + 0.2, 7};
  return ck;
}

TEST(Checkpoint, WriteReadWriteIsByteIdentical) {
  TempDir dir;
  const Checkpoint ck = sample();
  write_checkpoint(ck, dir / "a.cbck");
  const Checkpoint back = read_checkpoint(dir / "a.cbck");
  EXPECT_EQ(back, ck);
  write_checkpoint(back, dir / "b.cbck");
  EXPECT_EQ(read_file(dir / "a.cbck"), read_file(dir / "b.cbck"));
}

TEST(Checkpoint, PreambleLayout) {
  const std::string bytes = encode_checkpoint(sample());
  EXPECT_EQ(bytes.substr(0, 4), "CBCK");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[16], '{');
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const std::string good = encode_checkpoint(sample());
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, 10)), FormatError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 4)), FormatError);
  EXPECT_THROW(decode_checkpoint(good + std::string(4, '\0')), FormatError);

  bad = good;
  const auto pos = bad.find("\"adapter_b1\"");
  ASSERT_NE(pos, std::string::npos);
  bad.replace(pos, 12, "\"adapter_b9\"");
  EXPECT_THROW(decode_checkpoint(bad), FormatError);

  bad = good;
  const auto brace = bad.find('{');
  bad[brace] = '[';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
}

TEST(Checkpoint, RejectsNonFiniteTensorData) {
  std::string bytes = encode_checkpoint(sample());
  // The last four bytes are the final head entry.
  const unsigned char nan[] = {0x00, 0x00, 0xc0, 0x7f};
  bytes.replace(bytes.size() - 4, 4, reinterpret_cast<const char*>(nan), 4);
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
}

TEST(Checkpoint, ConceptIdsMustMatchTheSet) {
  const Checkpoint ck = sample();
  EXPECT_NO_THROW(check_concepts(ck, make_set({2, 1})));
  EXPECT_THROW(check_concepts(ck, make_set({1, 2})), BindError);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  TempDir dir;
  EXPECT_THROW(read_checkpoint(dir / "none.cbck"), IoError);
}

}  // namespace
}  // namespace cbe
