#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "commands.hpp"
#include "gmrft/codebook.hpp"
#include "gmrft/codec.hpp"
#include "gmrft/image.hpp"
#include "oracles.hpp"

using namespace gmrft;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gmrft");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gmrft_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::size_t file_count() const {
    std::size_t n = 0;
    for (auto it = fs::recursive_directory_iterator(dir_); it != fs::recursive_directory_iterator(); ++it) {
      n += it->is_regular_file();
    }
    return n;
  }

  std::string write_codebook(const TransformCodebook& cb, const std::string& name = "cb.txt") const {
    write_file_atomic(path(name), serialize_codebook(cb));
    return path(name);
  }

  std::string write_image(const Image& img, const std::string& name) const {
    write_pgm(path(name), img);
    return path(name);
  }

  fs::path dir_;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

const GmrfParams kDiagonal{0.05, 0.05, 0.35, 0.0};
const GmrfParams kAntiDiagonal{0.05, 0.05, 0.0, 0.35};

Image gmrf_mosaic(std::uint64_t seed) {
  return oracle::mosaic({kDiagonal, kAntiDiagonal, GmrfParams{0.3, 0.15, 0, 0}, GmrfParams{0.15, 0.3, 0, 0}},
                        128, 32, seed, 12.0);
}

}  // namespace

TEST_F(CliTest, SynthIsDeterministic) {
  const std::vector<std::string> base{"synth", "--theta", "0.2,0.1,0.15,-0.1", "--size", "32", "--count", "2",
                                      "--seed", "9"};
  auto a = base, b = base, c = base;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  c.insert(c.end(), {"--out", path("c")});
  c[8] = "10";
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  ASSERT_EQ(invoke(c).code, 0);
  for (const char* f : {"synth_0000.pgm", "synth_0001.pgm", "synth_0000.txt"}) {
    EXPECT_EQ(read_file(path(std::string("a/") + f)), read_file(path(std::string("b/") + f))) << f;
  }
  EXPECT_NE(read_file(path("a/synth_0000.pgm")), read_file(path("c/synth_0000.pgm")));
  EXPECT_NE(read_file(path("a/synth_0000.pgm")), read_file(path("a/synth_0001.pgm")));
  const std::string side = read_file(path("a/synth_0000.txt"));
  EXPECT_NE(side.find("offset 128\n"), std::string::npos);
  EXPECT_NE(side.find("theta 0.20000000000000001 0.10000000000000001 0.14999999999999999 -0.10000000000000001\n"),
            std::string::npos);
}

TEST_F(CliTest, SynthZeroThetaIsWhiteNoise) {
  ASSERT_EQ(invoke({"synth", "--theta", "0,0,0,0", "--size", "128", "--out", path("w")}).code, 0);
  const Image img = read_pgm(path("w/synth_0000.pgm"));
  const Eigen::MatrixXd x = img.pixels().array() - img.pixels().mean();
  const double var = x.squaredNorm() / static_cast<double>(x.size());
  const double vertical = (x.topRows(127).array() * x.bottomRows(127).array()).mean();
  const double horizontal = (x.leftCols(127).array() * x.rightCols(127).array()).mean();
  EXPECT_GT(var, 100.0);
  EXPECT_LT(std::abs(vertical) / var, 0.05);
  EXPECT_LT(std::abs(horizontal) / var, 0.05);
}

TEST_F(CliTest, SynthRejectsBadInput) {
  EXPECT_EQ(invoke({"synth", "--theta", "0.1,0.1", "--size", "32", "--out", path("x")}).code, 2);
  EXPECT_EQ(invoke({"synth", "--theta", "0.1,a,0,0", "--size", "32", "--out", path("x")}).code, 2);
  EXPECT_EQ(invoke({"synth", "--theta", "0,0,0,0", "--size", "40", "--out", path("x")}).code, 2);
  const auto infeasible = invoke({"synth", "--theta", "0.6,0.6,0,0", "--size", "32", "--out", path("x")});
  EXPECT_EQ(infeasible.code, 1);
  EXPECT_FALSE(infeasible.err.empty());
  EXPECT_FALSE(fs::exists(path("x")));
}

TEST_F(CliTest, DesignOnWhiteNoiseFails) {
  ASSERT_EQ(invoke({"synth", "--theta", "0,0,0,0", "--size", "64", "--count", "2", "--out", path("w")}).code, 0);
  const auto r = invoke({"design", "--train", path("w/*.pgm"), "--mb", "16", "--block", "4", "--out", path("cb.txt")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("pruning"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("cb.txt")));
}

TEST_F(CliTest, DesignSingleEntryApproximatesGeneratingTheta) {
  const GmrfParams truth{0.2, 0.1, 0.15, -0.1};
  const auto synth = invoke({"synth", "--theta", "0.2,0.1,0.15,-0.1", "--size", "128", "--count", "2", "--seed",
                             "3", "--out", path("t")});
  ASSERT_EQ(synth.code, 0);
  const auto r = invoke({"design", "--train", path("t/*.pgm"), "--mb", "16", "--block", "8", "--codebook-size", "1",
                         "--constraint", "pd", "--objective", "ml", "--prune-db", "0", "--out", path("cb.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("training macroblocks: 128 (degenerate 0, fitted 128, kept after pruning"), std::string::npos)
      << r.out;
  const auto cb = deserialize_codebook(read_file(path("cb.txt")));
  EXPECT_EQ(cb.base_block, 8);
  EXPECT_EQ(cb.constraint, ConstraintMode::PositiveDefinite);
  ASSERT_EQ(cb.entries.size(), 1u);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(cb.entries[0].as_array()[k], truth.as_array()[k], 0.05) << k;
  EXPECT_EQ(serialize_codebook(cb), read_file(path("cb.txt")));
}

TEST_F(CliTest, DesignClampsCodebookToTrainingSize) {
  ASSERT_EQ(invoke({"synth", "--theta", "0.05,0.05,0.35,0", "--size", "32", "--out", path("t")}).code, 0);
  const auto r = invoke({"design", "--train", path("t/*.pgm"), "--mb", "16", "--block", "4", "--codebook-size", "7",
                         "--objective", "ml", "--prune-db", "0", "--out", path("cb.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("reduced to 4"), std::string::npos) << r.err;
  EXPECT_EQ(deserialize_codebook(read_file(path("cb.txt"))).entries.size(), 4u);
}

TEST_F(CliTest, EncodeDctOnlyMatchesLibrary) {
  const Image img = gmrf_mosaic(1);
  const auto image = write_image(img, "img.pgm");
  const auto cb = write_codebook({});
  const auto r = invoke({"encode", "--image", image, "--codebook", cb, "--mode", "fixed", "--step", "12", "--report",
                         path("r.csv"), "--recon", path("rec.pgm"), "--map", path("map.json")});
  ASSERT_EQ(r.code, 0) << r.err;

  auto cfg = CodingConfig::fixed_defaults();
  cfg.step = 12.0;
  const auto lib = encode_fixed(read_pgm(image), TransformBank({}), cfg);
  const auto csv = lines_of(read_file(path("r.csv")));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], "image,mode,step,bpp_total,bpp_coeff,bpp_index,bpp_tree,psnr_db,non_dct_fraction");
  EXPECT_EQ(r.out, csv[1] + "\n");
  const auto cells = split_csv(csv[1]);
  ASSERT_EQ(cells.size(), 9u);
  EXPECT_EQ(cells[0], "img.pgm");
  EXPECT_EQ(cells[1], "fixed");
  EXPECT_EQ(std::stod(cells[2]), 12.0);
  EXPECT_EQ(std::stod(cells[3]), lib.report.bpp_total);
  EXPECT_EQ(std::stod(cells[4]), lib.report.bpp_coefficients);
  EXPECT_EQ(std::stod(cells[5]), 0.0);
  EXPECT_EQ(std::stod(cells[6]), 0.0);
  EXPECT_EQ(std::stod(cells[7]), lib.report.psnr_db);
  EXPECT_EQ(std::stod(cells[8]), 0.0);
  EXPECT_EQ(read_file(path("rec.pgm")), encode_pgm(lib.reconstruction));

  const auto map = nlohmann::json::parse(read_file(path("map.json")));
  EXPECT_EQ(map["mode"], "fixed");
  EXPECT_EQ(map["mb"], 16);
  ASSERT_EQ(map["macroblocks"].size(), 64u);
  EXPECT_EQ(map["macroblocks"][9]["row"], 16);
  EXPECT_EQ(map["macroblocks"][9]["col"], 16);
  for (const auto& mb : map["macroblocks"]) EXPECT_EQ(mb["selection"], 0);
}

TEST_F(CliTest, EncodeTargetRate) {
  TransformCodebook book;
  book.entries = {kDiagonal, kAntiDiagonal};
  const auto cb = write_codebook(book);
  const auto image = write_image(gmrf_mosaic(2), "img.pgm");
  for (const std::string mode : {"fixed", "quadtree"}) {
    const auto r = invoke({"encode", "--image", image, "--codebook", cb, "--mode", mode, "--bpp", "0.4"});
    ASSERT_EQ(r.code, 0) << r.err;
    const double bpp = std::stod(split_csv(lines_of(r.out)[0])[3]);
    EXPECT_NEAR(bpp, 0.4, 0.02 * 0.4) << mode;
  }
}

TEST_F(CliTest, QuadtreeBeatsFixedAtEqualRate) {
  TransformCodebook book;
  book.entries = {kDiagonal, kAntiDiagonal};
  const auto cb = write_codebook(book);
  for (std::uint64_t seed : {3u, 4u}) {
    const auto image = write_image(gmrf_mosaic(seed), "img.pgm");
    const auto f = invoke({"encode", "--image", image, "--codebook", cb, "--mode", "fixed", "--bpp", "0.4"});
    const auto q = invoke({"encode", "--image", image, "--codebook", cb, "--mode", "quadtree", "--bpp", "0.4",
                           "--map", path("q.json")});
    ASSERT_EQ(f.code, 0);
    ASSERT_EQ(q.code, 0);
    const auto fc = split_csv(lines_of(f.out)[0]);
    const auto qc = split_csv(lines_of(q.out)[0]);
    EXPECT_GE(std::stod(qc[7]), std::stod(fc[7])) << seed;
    EXPECT_GT(std::stod(qc[6]), 0.0);
    const auto map = nlohmann::json::parse(read_file(path("q.json")));
    EXPECT_EQ(map["mb"], 32);
    ASSERT_EQ(map["macroblocks"].size(), 16u);
    EXPECT_EQ(map["macroblocks"][0]["tree"].size(), 4u);
  }
}

TEST_F(CliTest, EncodeIsDeterministic) {
  TransformCodebook book;
  book.entries = {kDiagonal};
  const auto cb = write_codebook(book);
  const auto image = write_image(gmrf_mosaic(5), "img.pgm");
  const auto a = invoke({"encode", "--image", image, "--codebook", cb, "--mode", "quadtree", "--step", "10", "--map",
                         path("a.json")});
  const auto b = invoke({"encode", "--image", image, "--codebook", cb, "--mode", "quadtree", "--step", "10", "--map",
                         path("b.json")});
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
}

TEST_F(CliTest, AnalyzeOrdersTransforms) {
  TransformCodebook book;
  book.entries = {kDiagonal};
  const auto cb = write_codebook(book);
  const auto image = write_image(oracle::mosaic({kDiagonal, kDiagonal, kDiagonal, kDiagonal}, 128, 32, 6, 12.0),
                                 "img.pgm");
  const auto r = invoke({"analyze", "--image", image, "--codebook", cb, "--mb", "32", "--block", "8", "--report",
                         path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(read_file(path("a.csv")));
  ASSERT_EQ(rows[0], "mb_row,mb_col,degenerate,transform,ec,gain_db");
  ASSERT_EQ(rows.size(), 1u + 16u * 3u);
  double mean_klt = 0.0, mean_dct = 0.0, mean_gmrft = 0.0;
  for (std::size_t i = 1; i < rows.size(); i += 3) {
    const auto klt = split_csv(rows[i]), dct = split_csv(rows[i + 1]), gm = split_csv(rows[i + 2]);
    ASSERT_EQ(klt[3], "klt");
    ASSERT_EQ(dct[3], "dct");
    ASSERT_EQ(gm[3], "gmrft1");
    EXPECT_EQ(klt[2], "0");
    EXPECT_GE(std::stod(klt[4]), std::stod(dct[4]) - 1e-12);
    EXPECT_GE(std::stod(klt[4]), std::stod(gm[4]) - 1e-12);
    EXPECT_GE(std::stod(klt[5]), std::stod(gm[5]) - 1e-9);
    EXPECT_GE(std::stod(klt[5]), std::stod(dct[5]) - 1e-9);
    mean_klt += std::stod(klt[5]);
    mean_dct += std::stod(dct[5]);
    mean_gmrft += std::stod(gm[5]);
  }
  EXPECT_GE(mean_klt, mean_gmrft);
  EXPECT_GT(mean_gmrft, mean_dct);
  EXPECT_NE(r.out.find("macroblocks: 16 (degenerate 0)"), std::string::npos);
}

TEST_F(CliTest, AnalyzeWhiteNoiseAndDegenerate) {
  TransformCodebook book;
  book.entries = {kDiagonal};
  const auto cb = write_codebook(book);
  ASSERT_EQ(invoke({"synth", "--theta", "0,0,0,0", "--size", "128", "--out", path("w")}).code, 0);
  Image img = read_pgm(path("w/synth_0000.pgm"));
  img.pixels().block(0, 0, 64, 64).setConstant(50.0);
  const auto image = write_image(img, "img.pgm");
  const auto r = invoke({"analyze", "--image", image, "--codebook", cb, "--mb", "64", "--block", "8", "--report",
                         path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(read_file(path("a.csv")));
  ASSERT_EQ(rows.size(), 1u + 1u + 3u * 3u);
  EXPECT_EQ(rows[1], "0,0,1,,,");
  for (std::size_t i = 2; i < rows.size(); ++i) {
    EXPECT_LT(std::abs(std::stod(split_csv(rows[i])[5])), 0.1) << rows[i];
  }
  EXPECT_NE(r.out.find("(degenerate 1)"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsWriteNothing) {
  const auto image = write_image(gmrf_mosaic(7), "img.pgm");
  const auto cb = write_codebook({});
  const std::size_t before = file_count();
  const std::vector<std::vector<std::string>> bad{
      {},
      {"frobnicate"},
      {"encode", "--image", image, "--codebook", cb, "--step", "8", "--bpp", "0.4", "--report", path("r.csv")},
      {"encode", "--image", image, "--codebook", cb, "--mode", "diagonal", "--report", path("r.csv")},
      {"encode", "--image", image, "--codebook", cb, "--bpp", "-1", "--report", path("r.csv")},
      {"encode", "--image", image, "--codebook", cb, "--mode", "quadtree", "--nmin", "3", "--report", path("r.csv")},
      {"encode", "--image", image, "--codebook", cb, "--block", "32", "--report", path("r.csv")},
      {"encode", "--image", image, "--codebook", cb, "--step", "0", "--report", path("r.csv")},
      {"design", "--train", path("*.pgm"), "--mb", "12", "--out", path("o.txt")},
      {"design", "--train", path("none/*.pgm"), "--out", path("o.txt")},
      {"design", "--train", path("*.pgm"), "--constraint", "xx", "--out", path("o.txt")},
      {"analyze", "--image", image, "--codebook", cb, "--block", "32", "--report", path("a.csv")},
  };
  for (const auto& args : bad) {
    const auto r = invoke(args);
    EXPECT_NE(r.code, 0) << (args.empty() ? "(none)" : args[0]);
  }
  EXPECT_EQ(file_count(), before);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  const auto cb = write_codebook({});
  const auto missing = invoke({"encode", "--image", path("missing.pgm"), "--codebook", cb, "--report", path("r.csv")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_FALSE(fs::exists(path("r.csv")));
  write_file_atomic(path("bad.txt"), "gmrft-codebook v9\nblock 8 constraint dd\n");
  const auto image = write_image(gmrf_mosaic(8), "img.pgm");
  const auto version = invoke({"encode", "--image", image, "--codebook", path("bad.txt")});
  EXPECT_EQ(version.code, 1);
  EXPECT_NE(version.err.find("version"), std::string::npos);
  const auto odd = write_image(Image(40, 40), "odd.pgm");
  EXPECT_NE(invoke({"encode", "--image", odd, "--codebook", cb}).code, 0);
}
