#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmrft/codebook.hpp"
#include "gmrft/image.hpp"
#include "gmrft/transform.hpp"

namespace gmrft {

enum class CodingMode { Fixed, QuadTree };

struct CodingConfig {
  int l = 16;       // macroblock size
  int n = 8;        // transform block size, fixed mode
  int n_min = 4;    // smallest quad-tree block
  int stages = 3;   // quad-tree depth; the first stage is the L/2 split
  double step = 16.0;
  std::optional<double> target_bpp;

  static CodingConfig fixed_defaults() { return {}; }
  static CodingConfig quadtree_defaults() {
    CodingConfig cfg;
    cfg.l = 32;
    return cfg;
  }

  /// Throws DimensionError when sizes are not powers of two or inconsistent
  /// for the given mode.
  void validate(CodingMode mode) const;
};

/// Transforms for every (codebook index, block size), built on first use.
/// Index 0 is the DCT. Safe for concurrent use.
class TransformBank {
 public:
  explicit TransformBank(TransformCodebook codebook) : codebook_(std::move(codebook)) {}

  const TransformCodebook& codebook() const { return codebook_; }
  int size() const { return codebook_.size(); }
  /// False when the entry has no positive definite precision matrix at this
  /// size; encoders skip such entries.
  bool available(int index, int block) const;
  /// Throws InfeasibleModel if the entry is not available at this size.
  const TransformMatrix& get(int index, int block) const;

 private:
  const TransformMatrix* lookup(int index, int block) const;

  TransformCodebook codebook_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const TransformMatrix>> cache_;
};

/// One coded transform block: position in the image, transform index and the
/// quantization indices in transform-row order.
struct CodedBlock {
  int row = 0;
  int col = 0;
  int size = 0;
  int transform = 0;
  std::vector<int> indices;
};

/// Quad-tree node; a leaf refers to one CodedBlock by position in its
/// macroblock's block list.
struct QuadNode {
  int row = 0;
  int col = 0;
  int size = 0;
  int leaf = -1;                  // index into MacroblockCode::blocks when a leaf
  std::vector<QuadNode> children; // empty or four, raster order

  bool is_leaf() const { return children.empty(); }
};

struct MacroblockCode {
  int row = 0;
  int col = 0;
  /// Fixed mode: the macroblock's transform; quad-tree mode: -1.
  int selection = -1;
  /// Quad-tree mode: root of size L, always split into four L/2 nodes.
  std::optional<QuadNode> tree;
  std::vector<CodedBlock> blocks;
};

/// Everything a decoder needs besides the codebook.
struct EncodedImage {
  int height = 0;
  int width = 0;
  CodingMode mode = CodingMode::Fixed;
  int l = 0;
  int n_min = 0;
  double step = 0.0;
  std::vector<MacroblockCode> macroblocks;  // raster order
};

struct CodingReport {
  double step = 0.0;
  double psnr_db = 0.0;
  double bpp_total = 0.0;
  double bpp_coefficients = 0.0;
  double bpp_transform_index = 0.0;
  double bpp_tree = 0.0;
  /// Per macroblock (fixed) or per leaf in raster/tree order (quad-tree).
  std::vector<int> selections;
  double non_dct_fraction = 0.0;
  double squared_error = 0.0;
  /// Squared error per macroblock, raster order.
  std::vector<double> macroblock_squared_error;
};

struct EncodeResult {
  Image reconstruction;
  CodingReport report;
  EncodedImage encoded;
};

struct QuantizedBlock {
  Eigen::VectorXi indices;
  Eigen::VectorXd reconstruction;
};

/// Midtread uniform quantizer: index = round-half-even(coeff/step).
QuantizedBlock quantize_block(const Eigen::VectorXd& coeffs, double step);

/// First-order empirical entropy of a symbol sequence, bits per symbol.
double empirical_entropy(std::span<const int> symbols);

struct RateComponents {
  double bpp_coefficients = 0.0;
  double bpp_transform_index = 0.0;
  double bpp_tree = 0.0;
  double bpp_total() const { return bpp_coefficients + bpp_transform_index + bpp_tree; }
};

/// Index streams keyed by (block size, transform index, coefficient
/// position). The decoder knows each block's transform before its
/// coefficients, so streams are conditioned on it.
using CoefficientStreams = std::map<std::tuple<int, int, int>, std::vector<int>>;

RateComponents rate_estimate(const CoefficientStreams& coefficients,
                             std::span<const int> selections, long tree_bits, long pixels);

/// Codes each macroblock with the transform (DCT + codebook GMRFTs at size
/// n) of least total squared error at step Δ; ties go to the lower index.
EncodeResult encode_fixed(const Image& image, const TransformBank& bank, const CodingConfig& cfg);

/// Quad-tree coding: each macroblock is split into four L/2 blocks, and a
/// block is split again while its four children coded with their own best
/// transforms have strictly smaller total squared error, down to n_min.
EncodeResult encode_quadtree(const Image& image, const TransformBank& bank, const CodingConfig& cfg);

/// Runs the requested mode at cfg.step, or, when cfg.target_bpp is set,
/// bisects Δ until the rate is within 2% of the target (at most 30 rounds).
EncodeResult encode(const Image& image, const TransformBank& bank, const CodingConfig& cfg,
                    CodingMode mode);

/// Diagnostic upper bound: every macroblock coded with the KLT of the
/// second-moment matrix of its own n×n blocks (unquantized, not signalled,
/// excluded from the index rate). The mean is not removed, so the block
/// energy the codec actually quantizes is what the KLT compacts.
EncodeResult encode_fixed_klt(const Image& image, const CodingConfig& cfg);

Image decode(const EncodedImage& encoded, const TransformBank& bank);

}  // namespace gmrft
