#include "rlcd/scoring.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace rlcd {

std::string to_string(BicVariant v) { return v == BicVariant::separate ? "bic_separate" : "bic_equal"; }

BicVariant bic_variant_from_string(const std::string& name) {
  if (name == "bic_separate") return BicVariant::separate;
  if (name == "bic_equal") return BicVariant::equal;
  throw std::invalid_argument("unknown score variant '" + name + "'");
}

ScoreBounds ScoreBounds::make(double lower, double upper, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("score scale must be positive");
  if (!(upper > lower)) upper = std::max(upper, lower) + 1.0;
  return ScoreBounds{lower, upper, scale};
}

double RssCache::lookup(const Dataset& ds, int target, std::uint64_t parent_mask, const ScoreSpec& spec) {
  const Key key{parent_mask, target};
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  std::vector<int> parents;
  for (int j = 0; j < ds.vars(); ++j)
    if (parent_mask >> j & 1u) parents.push_back(j);
  const double rss = fit_node(ds, target, parents, spec.regressor).rss;
  fits_.fetch_add(1);
  std::unique_lock lock(mutex_);
  entries_.emplace(key, rss);
  return rss;
}

std::size_t RssCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void RssCache::clear() {
  std::unique_lock lock(mutex_);
  entries_.clear();
}

double rss_lookup(RssCache& cache, int target, std::uint64_t parent_mask, const Dataset& ds,
                  const ScoreSpec& spec) {
  return cache.lookup(ds, target, parent_mask, spec);
}

double bic_from_rss(std::span<const double> rss, int edges, int samples, BicVariant variant) {
  const double m = samples;
  const double penalty = edges * std::log(m);
  if (variant == BicVariant::separate) {
    double s = 0.0;
    for (double r : rss) s += m * std::log(std::max(r, kRssFloor) / m);
    return s + penalty;
  }
  double total = 0.0;
  for (double r : rss) total += std::max(r, kRssFloor);
  const double md = m * static_cast<double>(rss.size());
  return md * std::log(total / md) + penalty;
}

double bic_score(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, RssCache& cache) {
  if (a.nodes() != ds.vars()) throw std::invalid_argument("bic_score: graph and data dimensions differ");
  std::vector<double> rss(static_cast<std::size_t>(a.nodes()));
  for (int i = 0; i < a.nodes(); ++i) rss[i] = cache.lookup(ds, i, a.parent_mask(i), spec);
  return bic_from_rss(rss, a.edge_count(), ds.rows(), spec.variant);
}

ScoreBounds score_bounds(const Dataset& ds, const ScoreSpec& spec, RssCache& cache, double s_scale) {
  const int d = ds.vars();
  const std::uint64_t all = d == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;
  std::vector<double> full(d), empty(d);
  for (int i = 0; i < d; ++i) {
    full[i] = cache.lookup(ds, i, all & ~(std::uint64_t{1} << i), spec);
    empty[i] = cache.lookup(ds, i, 0, spec);
  }
  const double lower = bic_from_rss(full, 0, ds.rows(), spec.variant);
  const double upper = bic_from_rss(empty, 0, ds.rows(), spec.variant);
  return ScoreBounds::make(lower, upper, s_scale);
}

double adjust_score(double s, const ScoreBounds& bounds) {
  return bounds.s_scale * (s - bounds.s_lower) / (bounds.s_upper - bounds.s_lower);
}

}  // namespace rlcd
