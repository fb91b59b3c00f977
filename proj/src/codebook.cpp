#include "gmrft/codebook.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "gmrft/error.hpp"
#include "gmrft/parallel.hpp"
#include "gmrft/transform.hpp"

namespace gmrft {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double squared_distance(const GmrfParams& a, const GmrfParams& b) {
  const auto x = a.as_array();
  const auto y = b.as_array();
  double d = 0.0;
  for (int i = 0; i < 4; ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
  return d;
}

// Pairwise sum of values[idx] over the given index range.
double pairwise_sum(const std::vector<double>& values, std::size_t begin, std::size_t end) {
  if (end - begin <= 8) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += values[i];
    return s;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum(values, begin, mid) + pairwise_sum(values, mid, end);
}

GmrfParams centroid(std::span<const GmrfParams> training, const std::vector<std::size_t>& members) {
  std::array<double, 4> mean{};
  std::vector<double> column(members.size());
  for (int coord = 0; coord < 4; ++coord) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      column[i] = training[members[i]].as_array()[static_cast<std::size_t>(coord)];
    }
    mean[static_cast<std::size_t>(coord)] =
        pairwise_sum(column, 0, column.size()) / static_cast<double>(members.size());
  }
  return GmrfParams::from_array(mean);
}

bool entry_feasible(const GmrfParams& p, ConstraintMode constraint, int block) {
  if (!p.is_finite()) return false;
  if (constraint == ConstraintMode::DiagDominant) return satisfies_l1_bound(p);
  return is_feasible(assemble_precision(p, LatticeSpec(block)), ConstraintMode::PositiveDefinite);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainingSet build_training_set(std::span<const Image> images, int l, int n,
                               const EstimationConfig& cfg, double prune_db) {
  if (images.empty()) throw Error("no training images");
  if (n <= 0 || l <= 0 || l % n != 0) throw DimensionError("block size must divide macroblock size");
  if (!(prune_db >= 0.0)) throw Error("prune threshold must be nonnegative");

  struct Job {
    int image;
    int row;
    int col;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    const Image& img = images[static_cast<std::size_t>(i)];
    for (int r = 0; r + l <= img.height(); r += l) {
      for (int c = 0; c + l <= img.width(); c += l) jobs.push_back({i, r, c});
    }
  }

  struct Outcome {
    bool degenerate = false;
    TrainingRecord record;
  };
  std::vector<Outcome> outcomes(jobs.size());
  const TransformMatrix dct = build_dct2d(LatticeSpec(n));

  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const Image& img = images[static_cast<std::size_t>(job.image)];
    const Macroblock mb(img.pixels().block(job.row, job.col, l, l), n);
    Outcome& out = outcomes[j];
    SampleCovariance c{Eigen::MatrixXd(), LatticeSpec(n)};
    try {
      c = estimate_covariance(mb);
    } catch (const DegenerateBlock&) {
      out.degenerate = true;
      return;
    }
    EstimationConfig local = cfg;
    local.seed = splitmix64(cfg.seed ^ splitmix64((static_cast<std::uint64_t>(job.image) << 40) ^
                                                 (static_cast<std::uint64_t>(job.row) << 20) ^
                                                 static_cast<std::uint64_t>(job.col)));
    const GmrfParams theta = fit_parameters(c, local);
    const auto gmrft = build_gmrft(assemble_precision(theta, c.lattice));
    out.record = {theta, coding_gain_db(gmrft, c) - coding_gain_db(dct, c), job.image, job.row,
                  job.col};
  });

  TrainingSet set;
  set.macroblocks = static_cast<int>(jobs.size());
  for (const auto& o : outcomes) {
    if (o.degenerate) {
      ++set.degenerate;
      continue;
    }
    ++set.fitted;
    if (o.record.gain_over_dct_db >= prune_db) set.records.push_back(o.record);
  }
  if (set.records.empty()) throw EmptyTrainingSet("no macroblock survived pruning");
  return set;
}

std::pair<int, double> nearest_entry(std::span<const GmrfParams> entries, const GmrfParams& x) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double d = squared_distance(entries[i], x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d};
}

TransformCodebook run_gla(std::span<const GmrfParams> training, int m, std::uint64_t seed,
                          ConstraintMode constraint, int block, GlaTrace* trace) {
  if (m < 1 || training.size() < static_cast<std::size_t>(m)) {
    throw Error("GLA needs 1 <= m <= training size");
  }
  const std::size_t count = training.size();

  // Farthest-point initialization from a seeded first pick.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  std::vector<GmrfParams> centroids{training[pick(rng)]};
  std::vector<double> min_dist(count);
  for (std::size_t i = 0; i < count; ++i) min_dist[i] = squared_distance(training[i], centroids[0]);
  while (centroids.size() < static_cast<std::size_t>(m)) {
    const auto far = static_cast<std::size_t>(
        std::max_element(min_dist.begin(), min_dist.end()) - min_dist.begin());
    centroids.push_back(training[far]);
    for (std::size_t i = 0; i < count; ++i) {
      min_dist[i] = std::min(min_dist[i], squared_distance(training[i], centroids.back()));
    }
  }
  if (trace) trace->initial = centroids;

  std::vector<int> cell(count);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto [idx, d] = nearest_entry(centroids, training[i]);
      cell[i] = idx;
      total += d;
    }
    const double distortion = total / static_cast<double>(count);
    if (trace) trace->distortion.push_back(distortion);
    if (distortion == 0.0 || (std::isfinite(previous) && (previous - distortion) < 1e-6 * previous)) {
      break;
    }
    previous = distortion;

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < count; ++i) members[static_cast<std::size_t>(cell[i])].push_back(i);
    for (int j = 0; j < m; ++j) {
      const auto& mem = members[static_cast<std::size_t>(j)];
      if (!mem.empty()) centroids[static_cast<std::size_t>(j)] = centroid(training, mem);
    }
    // Refill empty cells next to the cell with the largest distortion. The
    // donor keeps its centroid, so the next partition cannot get worse.
    std::vector<double> cell_distortion(static_cast<std::size_t>(m), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      cell_distortion[static_cast<std::size_t>(cell[i])] +=
          squared_distance(training[i], centroids[static_cast<std::size_t>(cell[i])]);
    }
    for (int j = 0; j < m; ++j) {
      if (!members[static_cast<std::size_t>(j)].empty()) continue;
      const auto donor = static_cast<std::size_t>(
          std::max_element(cell_distortion.begin(), cell_distortion.end()) -
          cell_distortion.begin());
      cell_distortion[donor] /= 2.0;
      // Nudge toward the origin so an ℓ1-feasible donor stays feasible.
      auto x = centroids[donor].as_array();
      for (double& v : x) v += v > 0 ? -1e-3 : 1e-3;
      centroids[static_cast<std::size_t>(j)] = GmrfParams::from_array(x);
    }
  }

  for (auto& c : centroids) {
    while (!entry_feasible(c, constraint, block)) {
      auto x = c.as_array();
      for (double& v : x) v *= 0.95;
      c = GmrfParams::from_array(x);
      if (trace) ++trace->repairs;
    }
  }
  TransformCodebook book;
  book.entries = std::move(centroids);
  book.base_block = block;
  book.constraint = constraint;
  return book;
}

std::string serialize_codebook(const TransformCodebook& codebook) {
  std::ostringstream out;
  out << "gmrft-codebook " << codebook.version << "\n";
  out << "block " << codebook.base_block << " constraint "
      << (codebook.constraint == ConstraintMode::DiagDominant ? "dd" : "pd") << "\n";
  for (const auto& e : codebook.entries) {
    out << "theta " << format_double(e.theta_v) << " " << format_double(e.theta_h) << " "
        << format_double(e.theta_d1) << " " << format_double(e.theta_d2) << "\n";
  }
  return out.str();
}

TransformCodebook deserialize_codebook(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::string current;
    for (char ch : text) {
      if (ch == '\n') {
        lines.push_back(current);
        current.clear();
      } else if (ch != '\r') {
        current.push_back(ch);
      }
    }
    if (!current.empty()) lines.push_back(current);
  }
  auto tokens_of = [](const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string t; ss >> t;) out.push_back(t);
    return out;
  };

  if (lines.empty()) throw ParseError(1, "empty codebook file");
  const auto head = tokens_of(lines[0]);
  if (head.size() != 2 || head[0] != "gmrft-codebook") throw ParseError(1, "missing codebook header");
  if (head[1] != kCodebookVersion) throw VersionMismatch("unsupported codebook version " + head[1]);

  if (lines.size() < 2) throw ParseError(2, "missing block/constraint line");
  const auto meta = tokens_of(lines[1]);
  if (meta.size() != 4 || meta[0] != "block" || meta[2] != "constraint") {
    throw ParseError(2, "expected 'block <n> constraint <pd|dd>'");
  }
  TransformCodebook book;
  {
    int block = 0;
    const auto& b = meta[1];
    const auto res = std::from_chars(b.data(), b.data() + b.size(), block);
    if (res.ec != std::errc() || res.ptr != b.data() + b.size() || block < 2) {
      throw ParseError(2, "invalid block size '" + b + "'");
    }
    book.base_block = block;
  }
  if (meta[3] == "dd") {
    book.constraint = ConstraintMode::DiagDominant;
  } else if (meta[3] == "pd") {
    book.constraint = ConstraintMode::PositiveDefinite;
  } else {
    throw ParseError(2, "unknown constraint '" + meta[3] + "'");
  }

  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto tok = tokens_of(lines[i]);
    if (tok.empty()) continue;
    if (tok.size() != 5 || tok[0] != "theta") throw ParseError(line_no, "expected 'theta v h d1 d2'");
    std::array<double, 4> x{};
    for (int k = 0; k < 4; ++k) {
      const auto& t = tok[static_cast<std::size_t>(k + 1)];
      const auto res = std::from_chars(t.data(), t.data() + t.size(), x[static_cast<std::size_t>(k)]);
      if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ParseError(line_no, "invalid number '" + t + "'");
      }
    }
    const GmrfParams p = GmrfParams::from_array(x);
    if (!entry_feasible(p, book.constraint, book.base_block)) {
      throw ParseError(line_no, "entry infeasible under the recorded constraint");
    }
    for (const auto& other : book.entries) {
      if (std::sqrt(squared_distance(other, p)) <= 1e-9) throw ParseError(line_no, "duplicate entry");
    }
    book.entries.push_back(p);
  }
  return book;
}

}  // namespace gmrft
