#include "commands.hpp"

#include <glob.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmrft/codebook.hpp"
#include "gmrft/codec.hpp"
#include "gmrft/error.hpp"
#include "gmrft/estimation.hpp"
#include "gmrft/gmrf.hpp"
#include "gmrft/image.hpp"
#include "gmrft/parallel.hpp"
#include "gmrft/transform.hpp"

namespace gmrft::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

GmrfParams parse_theta(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v)) {
      throw UsageError("--theta: invalid number '" + item + "'");
    }
    values.push_back(v);
  }
  if (values.size() != 4) throw UsageError("--theta expects four comma-separated values v,h,d1,d2");
  return {values[0], values[1], values[2], values[3]};
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<fs::path> paths;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  std::sort(paths.begin(), paths.end());
  return paths;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string theta;
  int size = 0;
  int count = 1;
  std::uint64_t seed = 1;
  std::string out;
  int tile = 16;
};

void run_synth(const SynthArgs& a, std::ostream& out) {
  const GmrfParams theta = parse_theta(a.theta);
  if (a.size <= 0 || a.count <= 0) throw UsageError("--size and --count must be positive");
  if (a.tile < 2 || a.size % a.tile != 0) throw UsageError("--size must be a multiple of --tile (>= 2)");
  if (!is_feasible(assemble_precision(theta, LatticeSpec(a.tile)), ConstraintMode::PositiveDefinite)) {
    throw InfeasibleModel("--theta gives no positive definite precision matrix");
  }

  fs::create_directories(a.out);
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t seed = mix(a.seed ^ mix(static_cast<std::uint64_t>(i)));
    const Eigen::MatrixXd field = synthesize_field(theta, a.size, a.size, a.tile, seed);
    const double peak = field.cwiseAbs().maxCoeff();
    const double scale = peak > 0.0 ? 127.0 / peak : 1.0;
    const double offset = 128.0;
    const Image img((offset + scale * field.array()).matrix());

    char stem[32];
    std::snprintf(stem, sizeof stem, "synth_%04d", i);
    const fs::path base = fs::path(a.out) / stem;
    std::ostringstream side;
    side << "offset " << fmt(offset) << "\nscale " << fmt(scale) << "\ntheta " << fmt(theta.theta_v)
         << ' ' << fmt(theta.theta_h) << ' ' << fmt(theta.theta_d1) << ' ' << fmt(theta.theta_d2)
         << "\ntile " << a.tile << "\nseed " << seed << '\n';
    write_pgm(base.string() + ".pgm", img);
    write_file_atomic(base.string() + ".txt", side.str());
  }
  out << "wrote " << a.count << " image(s) to " << a.out << '\n';
}

// ---- design ----------------------------------------------------------------

struct DesignArgs {
  std::string train;
  int mb = 16;
  int block = 8;
  int codebook_size = 7;
  std::string constraint = "dd";
  std::string objective = "tc";
  double prune_db = 0.2;
  std::uint64_t seed = 1;
  std::string out;
};

void run_design(const DesignArgs& a, std::ostream& out, std::ostream& err) {
  if (!is_power_of_two(a.mb) || !is_power_of_two(a.block) || a.block > a.mb) {
    throw UsageError("--mb and --block must be powers of two with block <= mb");
  }
  if (a.codebook_size < 0) throw UsageError("--codebook-size must be nonnegative");
  if (!(a.prune_db >= 0.0)) throw UsageError("--prune-db must be nonnegative");
  const auto paths = expand_glob(a.train);
  if (paths.empty()) throw UsageError("--train matched no files: " + a.train);

  std::vector<Image> images;
  for (const auto& p : paths) images.push_back(read_pgm(p));

  EstimationConfig cfg;
  cfg.objective = a.objective == "ml" ? Objective::MaxLikelihood : Objective::CodingOptimized;
  cfg.constraint = a.constraint == "pd" ? ConstraintMode::PositiveDefinite : ConstraintMode::DiagDominant;
  cfg.seed = a.seed;

  const TrainingSet set = build_training_set(images, a.mb, a.block, cfg, a.prune_db);
  out << "training macroblocks: " << set.macroblocks << " (degenerate " << set.degenerate
      << ", fitted " << set.fitted << ", kept after pruning " << set.records.size() << ")\n";

  TransformCodebook book;
  book.base_block = a.block;
  book.constraint = cfg.constraint;
  if (a.codebook_size > 0) {
    std::vector<GmrfParams> thetas;
    for (const auto& r : set.records) thetas.push_back(r.theta);
    int m = a.codebook_size;
    if (m > static_cast<int>(thetas.size())) {
      m = static_cast<int>(thetas.size());
      err << "note: only " << m << " training vectors; codebook reduced to " << m << " entries\n";
    }
    book = run_gla(thetas, m, a.seed, cfg.constraint, a.block);
  }
  write_file_atomic(a.out, serialize_codebook(book));
  out << "codebook: " << book.entries.size() << " entries (+DCT) written to " << a.out << '\n';
}

// ---- encode ----------------------------------------------------------------

struct EncodeArgs {
  std::string image;
  std::string codebook;
  std::string mode = "fixed";
  int mb = 0;  // 0: mode default
  int block = 8;
  int nmin = 4;
  double step = 16.0;
  double bpp = 0.0;
  bool bpp_set = false;
  std::string report;
  std::string recon;
  std::string map;
};

nlohmann::json tree_json(const QuadNode& node, const MacroblockCode& mb) {
  if (node.is_leaf()) return mb.blocks[static_cast<std::size_t>(node.leaf)].transform;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& child : node.children) arr.push_back(tree_json(child, mb));
  return arr;
}

nlohmann::json map_json(const std::string& image, const EncodedImage& enc) {
  nlohmann::json doc;
  doc["image"] = image;
  doc["mode"] = enc.mode == CodingMode::Fixed ? "fixed" : "quadtree";
  doc["mb"] = enc.l;
  doc["step"] = enc.step;
  nlohmann::json mbs = nlohmann::json::array();
  for (const auto& mb : enc.macroblocks) {
    nlohmann::json entry;
    entry["row"] = mb.row;
    entry["col"] = mb.col;
    if (enc.mode == CodingMode::Fixed) {
      entry["selection"] = mb.selection;
    } else {
      entry["tree"] = tree_json(*mb.tree, mb);
    }
    mbs.push_back(std::move(entry));
  }
  doc["macroblocks"] = std::move(mbs);
  return doc;
}

void run_encode(const EncodeArgs& a, std::ostream& out) {
  const CodingMode mode = a.mode == "quadtree" ? CodingMode::QuadTree : CodingMode::Fixed;
  CodingConfig cfg = mode == CodingMode::Fixed ? CodingConfig::fixed_defaults()
                                               : CodingConfig::quadtree_defaults();
  if (a.mb > 0) cfg.l = a.mb;
  cfg.n = a.block;
  cfg.n_min = a.nmin;
  cfg.step = a.step;
  if (a.bpp_set) cfg.target_bpp = a.bpp;
  if (mode == CodingMode::QuadTree) {
    if (!is_power_of_two(cfg.l) || !is_power_of_two(cfg.n_min) || cfg.n_min > cfg.l / 2) {
      throw UsageError("--mb and --nmin must be powers of two with nmin <= mb/2");
    }
    cfg.stages = std::countr_zero(static_cast<unsigned>(cfg.l / cfg.n_min));
  }
  try {
    cfg.validate(mode);
  } catch (const DimensionError& e) {
    throw UsageError(e.what());
  }

  const Image image = read_pgm(a.image);
  const TransformBank bank(deserialize_codebook(read_file(a.codebook)));
  const EncodeResult result = encode(image, bank, cfg, mode);
  const CodingReport& r = result.report;

  const std::string name = fs::path(a.image).filename().string();
  const std::string row = name + ',' + a.mode + ',' + fmt(r.step) + ',' + fmt(r.bpp_total) + ',' +
                          fmt(r.bpp_coefficients) + ',' + fmt(r.bpp_transform_index) + ',' +
                          fmt(r.bpp_tree) + ',' + fmt(r.psnr_db) + ',' + fmt(r.non_dct_fraction);
  if (!a.report.empty()) {
    write_file_atomic(a.report,
                      "image,mode,step,bpp_total,bpp_coeff,bpp_index,bpp_tree,psnr_db,non_dct_fraction\n" +
                          row + '\n');
  }
  if (!a.recon.empty()) write_pgm(a.recon, result.reconstruction);
  if (!a.map.empty()) write_file_atomic(a.map, map_json(name, result.encoded).dump(2) + '\n');
  out << row << '\n';
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string image;
  std::string codebook;
  int mb = 16;
  int block = 8;
  std::string report;
};

void run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (!is_power_of_two(a.mb) || !is_power_of_two(a.block) || a.block > a.mb) {
    throw UsageError("--mb and --block must be powers of two with block <= mb");
  }
  const Image image = read_pgm(a.image);
  if (image.height() % a.mb != 0 || image.width() % a.mb != 0) {
    throw DimensionError("image dimensions must be multiples of --mb");
  }
  const TransformBank bank(deserialize_codebook(read_file(a.codebook)));
  const LatticeSpec lattice(a.block);
  const int m = std::max(1, lattice.k() / 8);

  std::vector<std::pair<int, int>> origins;
  for (int r = 0; r < image.height(); r += a.mb) {
    for (int c = 0; c < image.width(); c += a.mb) origins.emplace_back(r, c);
  }
  std::vector<std::string> rows(origins.size());
  std::vector<double> gain_sum(static_cast<std::size_t>(bank.size()) + 1, 0.0);
  std::vector<std::vector<double>> gains(origins.size());

  parallel_for(origins.size(), [&](std::size_t i) {
    const auto [r0, c0] = origins[i];
    const std::string prefix = std::to_string(r0) + ',' + std::to_string(c0) + ',';
    std::optional<SampleCovariance> maybe;
    try {
      maybe = estimate_covariance(Macroblock(image.pixels().block(r0, c0, a.mb, a.mb), a.block));
    } catch (const DegenerateBlock&) {
      rows[i] = prefix + "1,,,\n";
      return;
    }
    const SampleCovariance& cov = *maybe;
    std::string text;
    auto emit = [&](const std::string& label, const TransformMatrix& t) {
      const double g = coding_gain_db(t, cov);
      gains[i].push_back(g);
      text += prefix + "0," + label + ',' + fmt(energy_compaction(t, cov, m)) + ',' + fmt(g) + '\n';
    };
    emit("klt", build_klt(cov));
    emit("dct", bank.get(0, a.block));
    for (int t = 1; t < bank.size(); ++t) emit("gmrft" + std::to_string(t), bank.get(t, a.block));
    rows[i] = std::move(text);
  });

  std::string csv = "mb_row,mb_col,degenerate,transform,ec,gain_db\n";
  int used = 0;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    csv += rows[i];
    if (gains[i].empty()) continue;
    ++used;
    for (std::size_t t = 0; t < gains[i].size(); ++t) gain_sum[t] += gains[i][t];
  }
  if (!a.report.empty()) write_file_atomic(a.report, csv);

  out << "macroblocks: " << origins.size() << " (degenerate " << origins.size() - used << ")\n";
  if (used > 0) {
    out << "mean gain dB: klt " << fmt_short(gain_sum[0] / used) << ", dct "
        << fmt_short(gain_sum[1] / used);
    for (int t = 1; t < bank.size(); ++t) {
      out << ", gmrft" << t << ' ' << fmt_short(gain_sum[static_cast<std::size_t>(t) + 1] / used);
    }
    out << '\n';
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GMRF transform design and adaptive transform coding"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic GMRF images");
  s->add_option("--theta", synth.theta, "v,h,d1,d2")->required();
  s->add_option("--size", synth.size, "Image side length")->required();
  s->add_option("--count", synth.count, "Number of images");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--tile", synth.tile, "Side of each independent GMRF draw");

  DesignArgs design;
  auto* d = app.add_subcommand("design", "Design a transform codebook");
  d->add_option("--train", design.train, "Glob of training PGM images")->required();
  d->add_option("--mb", design.mb, "Macroblock size");
  d->add_option("--block", design.block, "Transform block size");
  d->add_option("--codebook-size", design.codebook_size, "Number of GMRF entries");
  d->add_option("--constraint", design.constraint)->check(CLI::IsMember({"dd", "pd"}));
  d->add_option("--objective", design.objective)->check(CLI::IsMember({"ml", "tc"}));
  d->add_option("--prune-db", design.prune_db, "Minimum gain over the DCT");
  d->add_option("--seed", design.seed, "Random seed");
  d->add_option("--out", design.out, "Codebook file")->required();

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Encode an image");
  e->add_option("--image", enc.image)->required();
  e->add_option("--codebook", enc.codebook)->required();
  e->add_option("--mode", enc.mode)->check(CLI::IsMember({"fixed", "quadtree"}));
  e->add_option("--mb", enc.mb, "Macroblock size (default 16 fixed, 32 quadtree)");
  e->add_option("--block", enc.block, "Transform block size, fixed mode");
  e->add_option("--nmin", enc.nmin, "Smallest quad-tree block");
  auto* step_opt = e->add_option("--step", enc.step, "Quantizer step");
  auto* bpp_opt = e->add_option("--bpp", enc.bpp, "Target rate; bisects the step");
  step_opt->excludes(bpp_opt);
  e->add_option("--report", enc.report, "CSV report");
  e->add_option("--recon", enc.recon, "Reconstructed PGM");
  e->add_option("--map", enc.map, "Selection/tree JSON map");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Per-macroblock transform metrics");
  z->add_option("--image", an.image)->required();
  z->add_option("--codebook", an.codebook)->required();
  z->add_option("--mb", an.mb);
  z->add_option("--block", an.block);
  z->add_option("--report", an.report, "CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err);
  }
  enc.bpp_set = bpp_opt->count() > 0;
  if (enc.bpp_set && !(enc.bpp > 0.0)) {
    err << "error: --bpp must be positive\n";
    return 2;
  }

  try {
    if (*s) run_synth(synth, out);
    if (*d) run_design(design, out, err);
    if (*e) run_encode(enc, out);
    if (*z) run_analyze(an, out);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gmrft::cli
