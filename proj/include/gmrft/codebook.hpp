#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmrft/estimation.hpp"
#include "gmrft/gmrf.hpp"
#include "gmrft/image.hpp"

namespace gmrft {

inline constexpr std::string_view kCodebookVersion = "v1";

/// GMRF parameter codebook. Entry i (0-based) is transform index i + 1;
/// transform index 0 is always the 2D DCT and is not stored.
struct TransformCodebook {
  std::vector<GmrfParams> entries;
  int base_block = 8;
  ConstraintMode constraint = ConstraintMode::DiagDominant;
  std::string version{kCodebookVersion};

  /// Number of selectable transforms, DCT included.
  int size() const { return static_cast<int>(entries.size()) + 1; }

  friend bool operator==(const TransformCodebook&, const TransformCodebook&) = default;
};

struct TrainingRecord {
  GmrfParams theta;
  double gain_over_dct_db = 0.0;
  int image = 0;   // position in the input sequence
  int mb_row = 0;  // macroblock origin, pixels
  int mb_col = 0;
};

struct TrainingSet {
  std::vector<TrainingRecord> records;  // survivors of pruning
  int macroblocks = 0;                  // all macroblocks visited
  int degenerate = 0;                   // skipped as constant
  int fitted = 0;                       // estimated before pruning
};

/// Estimates θ for every L×L macroblock (raster order per image) and keeps
/// those whose GMRFT beats the DCT by at least `prune_db` on the macroblock's
/// own covariance. Each macroblock uses its own seed derived from cfg.seed and
/// its position, so results do not depend on scheduling. Throws
/// EmptyTrainingSet when nothing survives.
TrainingSet build_training_set(std::span<const Image> images, int l, int n,
                               const EstimationConfig& cfg, double prune_db = 0.2);

struct GlaTrace {
  std::vector<GmrfParams> initial;
  /// Mean squared error after each nearest-neighbour partition.
  std::vector<double> distortion;
  int repairs = 0;  // infeasible centroids shrunk toward the origin
};

/// Generalized Lloyd design of an m-entry codebook in θ-space under squared
/// Euclidean distortion. Feasibility of the final entries is checked on a
/// `block`×`block` lattice.
TransformCodebook run_gla(std::span<const GmrfParams> training, int m, std::uint64_t seed,
                          ConstraintMode constraint, int block = 8, GlaTrace* trace = nullptr);

/// Index of the nearest codebook entry (0-based into entries) and its
/// squared distance; ties go to the lower index.
std::pair<int, double> nearest_entry(std::span<const GmrfParams> entries, const GmrfParams& x);

std::string serialize_codebook(const TransformCodebook& codebook);
/// Throws VersionMismatch for an unknown version and ParseError (with the
/// offending line) for malformed or infeasible content.
TransformCodebook deserialize_codebook(std::string_view text);

}  // namespace gmrft
