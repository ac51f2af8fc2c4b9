#pragma once

#include <atomic>
#include <cstdint>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>

#include "rlcd/datagen.hpp"
#include "rlcd/graph.hpp"
#include "rlcd/regressors.hpp"

namespace rlcd {

enum class BicVariant {
  separate,  ///< per-node noise variances
  equal,     ///< one shared noise variance
};

std::string to_string(BicVariant v);
BicVariant bic_variant_from_string(const std::string& name);

struct ScoreSpec {
  BicVariant variant = BicVariant::equal;
  RegressorSpec regressor;
};

/// RSS values below this are clamped before taking logs.
inline constexpr double kRssFloor = 1e-12;

/// Score range used to rescale raw scores into [0, s_scale].
struct ScoreBounds {
  double s_lower = 0.0;
  double s_upper = 1.0;
  double s_scale = 5.0;

  /// Enforces s_upper > s_lower by moving a non-larger upper bound to lower + 1.
  static ScoreBounds make(double lower, double upper, double scale = 5.0);
};

/// Memo of per-node residual sums of squares keyed by (target, parent set).
/// Safe for concurrent lookups and inserts; a race may compute the same entry
/// twice, and both results are identical.
class RssCache {
 public:
  RssCache() = default;
  RssCache(const RssCache&) = delete;
  RssCache& operator=(const RssCache&) = delete;

  /// Cached RSS of `target` regressed on the parents in `parent_mask`,
  /// fitting on a miss.
  double lookup(const Dataset& ds, int target, std::uint64_t parent_mask, const ScoreSpec& spec);

  std::size_t size() const;
  void clear();
  /// Number of regressions actually run.
  std::uint64_t fits() const { return fits_.load(); }

 private:
  struct Key {
    std::uint64_t parents;
    int target;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return std::hash<std::uint64_t>{}(k.parents * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(k.target));
    }
  };

  mutable std::shared_mutex mutex_;
  std::unordered_map<Key, double, KeyHash> entries_;
  std::atomic<std::uint64_t> fits_{0};
};

double rss_lookup(RssCache& cache, int target, std::uint64_t parent_mask, const Dataset& ds,
                  const ScoreSpec& spec);

/// Raw BIC of any directed graph; parents of node i are read from column i.
double bic_score(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, RssCache& cache);

/// BIC from per-node RSS values and an edge count.
double bic_from_rss(std::span<const double> rss, int edges, int samples, BicVariant variant);

/// Lower bound from regressing every node on all others without the edge
/// penalty; upper bound from the empty graph.
ScoreBounds score_bounds(const Dataset& ds, const ScoreSpec& spec, RssCache& cache, double s_scale = 5.0);

double adjust_score(double s, const ScoreBounds& bounds);

}  // namespace rlcd
