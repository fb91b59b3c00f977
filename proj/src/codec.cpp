#include "gmrft/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "gmrft/error.hpp"
#include "gmrft/parallel.hpp"

namespace gmrft {

namespace {

bool is_power_of_two(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

Eigen::VectorXd extract_block(const Image& image, int row, int col, int size) {
  Eigen::VectorXd x(size * size);
  for (int c = 0; c < size; ++c) {
    for (int r = 0; r < size; ++r) x(c * size + r) = image(row + r, col + c);
  }
  return x;
}

void place_block(Image& image, int row, int col, int size, const Eigen::VectorXd& x) {
  for (int c = 0; c < size; ++c) {
    for (int r = 0; r < size; ++r) image(row + r, col + c) = x(c * size + r);
  }
}

// The single reconstruction path shared by encoder and decoder.
Eigen::VectorXd reconstruct(const TransformMatrix& t, const Eigen::VectorXi& indices, double step) {
  const Eigen::VectorXd coeffs = indices.cast<double>() * step;
  return t.t().transpose() * coeffs;
}

struct BlockTrial {
  int transform = 0;
  Eigen::VectorXi indices;
  Eigen::VectorXd recon;
  double se = 0.0;
};

BlockTrial code_block(const TransformMatrix& t, int index, const Eigen::VectorXd& x, double step) {
  const Eigen::VectorXd coeffs = t.t() * x;
  BlockTrial trial;
  trial.transform = index;
  trial.indices = quantize_block(coeffs, step).indices;
  trial.recon = reconstruct(t, trial.indices, step);
  trial.se = (x - trial.recon).squaredNorm();
  return trial;
}

// Best transform for one block; ties keep the lower index.
BlockTrial best_block(const Image& image, const TransformBank& bank, int row, int col, int size,
                      double step) {
  const Eigen::VectorXd x = extract_block(image, row, col, size);
  BlockTrial best = code_block(bank.get(0, size), 0, x, step);
  for (int t = 1; t < bank.size(); ++t) {
    if (!bank.available(t, size)) continue;
    BlockTrial trial = code_block(bank.get(t, size), t, x, step);
    if (trial.se < best.se) best = std::move(trial);
  }
  return best;
}

CodedBlock to_coded(const BlockTrial& trial, int row, int col, int size) {
  return {row, col, size, trial.transform,
          std::vector<int>(trial.indices.data(), trial.indices.data() + trial.indices.size())};
}

void check_image(const Image& image, int l) {
  if (image.height() <= 0 || image.width() <= 0 || image.height() % l != 0 ||
      image.width() % l != 0) {
    throw DimensionError("image dimensions must be positive multiples of the macroblock size");
  }
}

struct MacroblockResult {
  MacroblockCode code;
  std::vector<Eigen::VectorXd> recon;  // parallel to code.blocks
  double se = 0.0;
  long tree_bits = 0;
};

QuadNode build_node(const Image& image, const TransformBank& bank, const CodingConfig& cfg, int row,
                    int col, int size, BlockTrial best, MacroblockResult& out) {
  QuadNode node{row, col, size, -1, {}};
  if (size > cfg.n_min) {
    ++out.tree_bits;
    const int half = size / 2;
    std::vector<BlockTrial> kids;
    double split_se = 0.0;
    for (int q = 0; q < 4; ++q) {
      kids.push_back(best_block(image, bank, row + (q / 2) * half, col + (q % 2) * half, half, cfg.step));
      split_se += kids.back().se;
    }
    if (split_se < best.se) {
      for (int q = 0; q < 4; ++q) {
        node.children.push_back(build_node(image, bank, cfg, row + (q / 2) * half,
                                           col + (q % 2) * half, half, std::move(kids[static_cast<std::size_t>(q)]), out));
      }
      return node;
    }
  }
  node.leaf = static_cast<int>(out.code.blocks.size());
  out.code.blocks.push_back(to_coded(best, row, col, size));
  out.recon.push_back(std::move(best.recon));
  out.se += best.se;
  return node;
}

void collect_leaf_selections(const QuadNode& node, const MacroblockCode& mb, std::vector<int>& out) {
  if (node.is_leaf()) {
    out.push_back(mb.blocks[static_cast<std::size_t>(node.leaf)].transform);
    return;
  }
  for (const auto& child : node.children) collect_leaf_selections(child, mb, out);
}

EncodeResult assemble(const Image& image, CodingMode mode, const CodingConfig& cfg,
                      std::vector<MacroblockResult>& results, bool signal_selection) {
  EncodeResult result;
  result.reconstruction = Image(image.height(), image.width());
  result.encoded = {image.height(), image.width(), mode, cfg.l, cfg.n_min, cfg.step, {}};

  CoefficientStreams streams;
  std::vector<int> selections;
  long tree_bits = 0;
  for (auto& mb : results) {
    for (std::size_t b = 0; b < mb.code.blocks.size(); ++b) {
      const CodedBlock& blk = mb.code.blocks[b];
      place_block(result.reconstruction, blk.row, blk.col, blk.size, mb.recon[b]);
      for (std::size_t k = 0; k < blk.indices.size(); ++k) {
        streams[{blk.size, blk.transform, static_cast<int>(k)}].push_back(blk.indices[k]);
      }
    }
    if (mode == CodingMode::Fixed) {
      selections.push_back(mb.code.selection);
    } else {
      collect_leaf_selections(*mb.code.tree, mb.code, selections);
    }
    tree_bits += mb.tree_bits;
    result.report.macroblock_squared_error.push_back(mb.se);
    result.encoded.macroblocks.push_back(std::move(mb.code));
  }

  const long pixels = static_cast<long>(image.height()) * image.width();
  const std::vector<int> none;
  const RateComponents rate = rate_estimate(
      streams, signal_selection ? std::span<const int>(selections) : std::span<const int>(none),
      tree_bits, pixels);

  CodingReport& report = result.report;
  report.step = cfg.step;
  report.bpp_coefficients = rate.bpp_coefficients;
  report.bpp_transform_index = rate.bpp_transform_index;
  report.bpp_tree = rate.bpp_tree;
  report.bpp_total = rate.bpp_total();
  report.squared_error = squared_error(image, result.reconstruction);
  report.psnr_db = psnr(image, result.reconstruction);
  report.non_dct_fraction =
      selections.empty()
          ? 0.0
          : static_cast<double>(std::count_if(selections.begin(), selections.end(),
                                              [](int s) { return s != 0; })) /
                static_cast<double>(selections.size());
  report.selections = std::move(selections);
  return result;
}

std::vector<std::pair<int, int>> macroblock_origins(const Image& image, int l) {
  std::vector<std::pair<int, int>> origins;
  for (int r = 0; r < image.height(); r += l) {
    for (int c = 0; c < image.width(); c += l) origins.emplace_back(r, c);
  }
  return origins;
}

}  // namespace

void CodingConfig::validate(CodingMode mode) const {
  if (!(step > 0.0) || !std::isfinite(step)) throw DimensionError("quantizer step must be positive");
  if (target_bpp && !(*target_bpp > 0.0)) throw DimensionError("target rate must be positive");
  if (!is_power_of_two(l)) throw DimensionError("macroblock size must be a power of two");
  if (mode == CodingMode::Fixed) {
    if (!is_power_of_two(n) || n > l) {
      throw DimensionError("block size must be a power of two no larger than the macroblock");
    }
    return;
  }
  if (!is_power_of_two(n_min) || n_min > l / 2 || n_min < 1) {
    throw DimensionError("n_min must be a power of two no larger than L/2");
  }
  if (stages < 1 || (l >> stages) != n_min) {
    throw DimensionError("quad-tree stages must satisfy L / 2^stages = n_min");
  }
}

const TransformMatrix* TransformBank::lookup(int index, int block) const {
  if (index < 0 || index >= size()) throw Error("transform index out of range");
  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(index, block);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second.get();
  const LatticeSpec lattice(block);
  std::shared_ptr<const TransformMatrix> t;
  if (index == 0) {
    t = std::make_shared<TransformMatrix>(build_dct2d(lattice));
  } else {
    const auto q = assemble_precision(codebook_.entries[static_cast<std::size_t>(index - 1)], lattice);
    // Infeasible at this size is cached as a null entry.
    if (is_feasible(q, ConstraintMode::PositiveDefinite)) t = std::make_shared<TransformMatrix>(build_gmrft(q));
  }
  return cache_.emplace(key, std::move(t)).first->second.get();
}

bool TransformBank::available(int index, int block) const { return lookup(index, block) != nullptr; }

const TransformMatrix& TransformBank::get(int index, int block) const {
  const TransformMatrix* t = lookup(index, block);
  if (!t) throw InfeasibleModel("precision matrix is not positive definite");
  return *t;
}

QuantizedBlock quantize_block(const Eigen::VectorXd& coeffs, double step) {
  QuantizedBlock out;
  out.indices.resize(coeffs.size());
  out.reconstruction.resize(coeffs.size());
  for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
    const double q = std::nearbyint(coeffs(k) / step);
    out.indices(k) = static_cast<int>(q);
    out.reconstruction(k) = q * step;
  }
  return out;
}

double empirical_entropy(std::span<const int> symbols) {
  if (symbols.empty()) return 0.0;
  std::unordered_map<int, long> counts;
  for (int s : symbols) ++counts[s];
  const double total = static_cast<double>(symbols.size());
  double h = 0.0;
  for (const auto& [symbol, count] : counts) {
    const double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  }
  return h;
}

RateComponents rate_estimate(const CoefficientStreams& coefficients,
                             std::span<const int> selections, long tree_bits, long pixels) {
  if (pixels <= 0) throw DimensionError("pixel count must be positive");
  double coeff_bits = 0.0;
  for (const auto& [key, stream] : coefficients) {
    coeff_bits += empirical_entropy(stream) * static_cast<double>(stream.size());
  }
  const double index_bits = empirical_entropy(selections) * static_cast<double>(selections.size());
  const double px = static_cast<double>(pixels);
  return {coeff_bits / px, index_bits / px, static_cast<double>(tree_bits) / px};
}

EncodeResult encode_fixed(const Image& image, const TransformBank& bank, const CodingConfig& cfg) {
  cfg.validate(CodingMode::Fixed);
  check_image(image, cfg.l);
  const auto origins = macroblock_origins(image, cfg.l);
  std::vector<MacroblockResult> results(origins.size());

  parallel_for(origins.size(), [&](std::size_t m) {
    const auto [row, col] = origins[m];
    MacroblockResult best;
    best.se = std::numeric_limits<double>::infinity();
    for (int t = 0; t < bank.size(); ++t) {
      if (!bank.available(t, cfg.n)) continue;
      const TransformMatrix& tm = bank.get(t, cfg.n);
      MacroblockResult trial;
      trial.code.row = row;
      trial.code.col = col;
      trial.code.selection = t;
      for (int r = 0; r < cfg.l; r += cfg.n) {
        for (int c = 0; c < cfg.l; c += cfg.n) {
          BlockTrial bt = code_block(tm, t, extract_block(image, row + r, col + c, cfg.n), cfg.step);
          trial.se += bt.se;
          trial.code.blocks.push_back(to_coded(bt, row + r, col + c, cfg.n));
          trial.recon.push_back(std::move(bt.recon));
        }
      }
      if (trial.se < best.se) best = std::move(trial);
    }
    results[m] = std::move(best);
  });
  return assemble(image, CodingMode::Fixed, cfg, results, /*signal_selection=*/true);
}

EncodeResult encode_quadtree(const Image& image, const TransformBank& bank, const CodingConfig& cfg) {
  cfg.validate(CodingMode::QuadTree);
  check_image(image, cfg.l);
  const auto origins = macroblock_origins(image, cfg.l);
  std::vector<MacroblockResult> results(origins.size());

  parallel_for(origins.size(), [&](std::size_t m) {
    const auto [row, col] = origins[m];
    MacroblockResult& out = results[m];
    out.code.row = row;
    out.code.col = col;
    QuadNode root{row, col, cfg.l, -1, {}};
    const int half = cfg.l / 2;
    for (int q = 0; q < 4; ++q) {
      const int r = row + (q / 2) * half;
      const int c = col + (q % 2) * half;
      root.children.push_back(
          build_node(image, bank, cfg, r, c, half, best_block(image, bank, r, c, half, cfg.step), out));
    }
    out.code.tree = std::move(root);
  });
  return assemble(image, CodingMode::QuadTree, cfg, results, /*signal_selection=*/true);
}

EncodeResult encode(const Image& image, const TransformBank& bank, const CodingConfig& cfg,
                    CodingMode mode) {
  auto run = [&](double step) {
    CodingConfig c = cfg;
    c.step = step;
    return mode == CodingMode::Fixed ? encode_fixed(image, bank, c) : encode_quadtree(image, bank, c);
  };
  if (!cfg.target_bpp) return run(cfg.step);

  cfg.validate(mode);
  const double target = *cfg.target_bpp;
  double lo = 1.0 / 16.0;  // finer steps, higher rate
  double hi = 4096.0;
  std::optional<EncodeResult> closest;
  for (int it = 0; it < 30; ++it) {
    const double mid = std::sqrt(lo * hi);
    EncodeResult r = run(mid);
    const double bpp = r.report.bpp_total;
    const bool better =
        !closest || std::abs(bpp - target) < std::abs(closest->report.bpp_total - target);
    const bool done = std::abs(bpp - target) <= 0.02 * target;
    if (bpp > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (better) closest = std::move(r);
    if (done) break;
  }
  return std::move(*closest);
}

EncodeResult encode_fixed_klt(const Image& image, const CodingConfig& cfg) {
  cfg.validate(CodingMode::Fixed);
  check_image(image, cfg.l);
  const auto origins = macroblock_origins(image, cfg.l);
  std::vector<MacroblockResult> results(origins.size());
  const LatticeSpec lattice(cfg.n);
  const int k = lattice.k();

  parallel_for(origins.size(), [&](std::size_t m) {
    const auto [row, col] = origins[m];
    std::vector<Eigen::VectorXd> blocks;
    Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(k, k);
    for (int r = 0; r < cfg.l; r += cfg.n) {
      for (int c = 0; c < cfg.l; c += cfg.n) {
        blocks.push_back(extract_block(image, row + r, col + c, cfg.n));
        moment += blocks.back() * blocks.back().transpose();
      }
    }
    moment /= static_cast<double>(blocks.size());
    const TransformMatrix klt = build_klt(SampleCovariance{moment, lattice});

    MacroblockResult& out = results[m];
    out.code.row = row;
    out.code.col = col;
    out.code.selection = 1;
    std::size_t b = 0;
    for (int r = 0; r < cfg.l; r += cfg.n) {
      for (int c = 0; c < cfg.l; c += cfg.n) {
        BlockTrial bt = code_block(klt, 1, blocks[b++], cfg.step);
        out.se += bt.se;
        out.code.blocks.push_back(to_coded(bt, row + r, col + c, cfg.n));
        out.recon.push_back(std::move(bt.recon));
      }
    }
  });
  return assemble(image, CodingMode::Fixed, cfg, results, /*signal_selection=*/false);
}

Image decode(const EncodedImage& encoded, const TransformBank& bank) {
  Image out(encoded.height, encoded.width);
  for (const auto& mb : encoded.macroblocks) {
    for (const auto& blk : mb.blocks) {
      const TransformMatrix& t = bank.get(blk.transform, blk.size);
      if (static_cast<int>(blk.indices.size()) != blk.size * blk.size) {
        throw DimensionError("coded block has the wrong number of indices");
      }
      const Eigen::VectorXi idx = Eigen::Map<const Eigen::VectorXi>(blk.indices.data(),
                                                                    static_cast<Eigen::Index>(blk.indices.size()));
      place_block(out, blk.row, blk.col, blk.size, reconstruct(t, idx, encoded.step));
    }
  }
  return out;
}

}  // namespace gmrft
