#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dtnet/checkpoint.hpp"
#include "dtnet/config.hpp"
#include "dtnet/dataset.hpp"
#include "dtnet/pnm.hpp"

using namespace dtnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dtnet_io_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<NamedTensor> sample_tensors() {
  return {{"a.weight", {2, 3}, {1, -2, 3.5, 1e-300, -0.0, 7}}, {"b", {1}, {42}}, {"empty_name_ok", {2, 1, 1}, {0.1, 0.2}}};
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto t = sample_tensors();
  const auto back = decode_checkpoint(encode_checkpoint(t));
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].name, t[i].name);
    EXPECT_EQ(back[i].shape, t[i].shape);
    EXPECT_EQ(back[i].data, t[i].data);
  }
  const fs::path p = scratch("roundtrip.ckpt");
  save_checkpoint(p, t);
  EXPECT_EQ(load_checkpoint(p)[0].data, t[0].data);
  fs::remove(p);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const std::string bytes = encode_checkpoint(sample_tensors());
  for (std::size_t cut = 1; cut < bytes.size(); ++cut) {
    // Cuts that land exactly on a record boundary decode to a valid prefix.
    try {
      const auto partial = decode_checkpoint(std::string_view(bytes).substr(0, cut));
      EXPECT_LT(partial.size(), 3u) << cut;
    } catch (const CheckpointError&) {
    }
  }
  EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 1)), CheckpointError);
}

TEST(Checkpoint, BadMagicAndMissingFile) {
  std::string bytes = encode_checkpoint(sample_tensors());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/file.ckpt"), CheckpointError);
}

TEST(Checkpoint, RestoreChecksNamesAndShapes) {
  CounterRng rng(1, CounterRng::Stream::init);
  ParamStore store;
  store.add("w", uniform_tensor({2, 2}, 1.0, rng));
  const auto snap = snapshot(store, "m.");
  ParamStore other;
  other.add("w", Tensor::zeros({2, 2}, true));
  restore(other, snap, "m.");
  EXPECT_EQ(std::vector<double>(other.find("w")->data().begin(), other.find("w")->data().end()), snap[0].data);
  EXPECT_THROW(restore(other, snap, "x."), CheckpointError);
  ParamStore wrong;
  wrong.add("w", Tensor::zeros({4}, true));
  EXPECT_THROW(restore(wrong, snap, "m."), CheckpointError);
}

TEST(Pnm, GraymapRoundTripWithinQuantisation) {
  GrayImage img{3, 2, {0.0, 0.25, 0.5, 0.75, 1.0, 0.123456}};
  const fs::path p = scratch("img.pgm");
  write_pgm(p.string(), img);
  const auto back = read_pgm(p.string());
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / kGraymapMaxval);
  fs::remove(p);
}

TEST(Pnm, BitmapRoundTripAndComments) {
  BitMask m{4, 2, {1, 0, 0, 1, 0, 1, 1, 0}};
  const fs::path p = scratch("mask.pbm");
  write_pbm(p.string(), m);
  EXPECT_EQ(read_pbm(p.string()).bits, m.bits);
  {
    std::ofstream f(p);
    f << "P1\n# comment\n3 1\n101\n";
  }
  EXPECT_EQ(read_pbm(p.string()).bits, (std::vector<int>{1, 0, 1}));
  {
    std::ofstream f(p);
    f << "P1\n3 1\n1 0\n";
  }
  EXPECT_THROW(read_pbm(p.string()), PnmError);
  fs::remove(p);
}

TEST(Pnm, RejectsWrongMagic) {
  const fs::path p = scratch("bad.pgm");
  {
    std::ofstream f(p);
    f << "P5\n1 1\n255\n0\n";
  }
  EXPECT_THROW(read_pgm(p.string()), PnmError);
  fs::remove(p);
}

TEST(Dataset, SaveAndLoad) {
  SyntheticDomainSpec s;
  s.size = 16;
  const auto d = generate_domain(s, 3);
  const fs::path dir = scratch("dataset");
  save_dataset(dir, d);
  std::vector<std::string> ids;
  const auto back = load_dataset(dir, &ids);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(ids, (std::vector<std::string>{"0000", "0001", "0002"}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].mask, d[i].mask);
    for (std::size_t j = 0; j < d[i].image.size(); ++j) EXPECT_NEAR(back[i].image[j], d[i].image[j], 1e-5);
  }
  fs::remove_all(dir);
}

TEST(Config, ParsesAndRejects) {
  const std::set<std::string, std::less<>> allowed{"a", "b", "flag"};
  const auto kv = KeyValueConfig::parse("# comment\na = 1.5\n\nb=text\nflag=yes\n", allowed);
  EXPECT_DOUBLE_EQ(kv.get_double("a", 0), 1.5);
  EXPECT_EQ(kv.get_string("b", ""), "text");
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_size("missing", 7), 7u);
  EXPECT_THROW(KeyValueConfig::parse("c=1\n", allowed), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a=1\na=2\n", allowed), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a\n", allowed), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a=x\n", allowed).get_double("a", 0), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("flag=maybe\n", allowed).get_bool("flag", false), ConfigError);
}
