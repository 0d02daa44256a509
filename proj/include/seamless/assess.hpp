#pragma once

// Absolute and relative accuracy of estimated points against surveyed truth.

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"

namespace seamless {

struct IdPoint {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
};

struct PairRow {
  std::int64_t id_a = 0;
  std::int64_t id_b = 0;
  Vec3 separation_estimated = Vec3::Zero();  // |component differences|
  Vec3 separation_truth = Vec3::Zero();
  Vec3 abs_difference = Vec3::Zero();
  double distance_estimated = 0.0;
  double distance_truth = 0.0;
};

struct MatchedPoints {
  std::vector<std::int64_t> ids;  // ascending
  std::vector<Vec3> estimated;
  std::vector<Vec3> truth;
  std::vector<std::int64_t> only_estimated;
  std::vector<std::int64_t> only_truth;
};

inline MatchedPoints match_ids(std::span<const IdPoint> estimated, std::span<const IdPoint> truth) {
  std::map<std::int64_t, Vec3> est, tru;
  for (const auto& p : estimated) est[p.id] = p.position;
  for (const auto& p : truth) tru[p.id] = p.position;
  MatchedPoints m;
  for (const auto& [id, pos] : est) {
    auto it = tru.find(id);
    if (it == tru.end()) {
      m.only_estimated.push_back(id);
      continue;
    }
    m.ids.push_back(id);
    m.estimated.push_back(pos);
    m.truth.push_back(it->second);
  }
  for (const auto& [id, pos] : tru) {
    if (!est.contains(id)) m.only_truth.push_back(id);
  }
  return m;
}

/// Mean signed (estimated - truth) per axis over the common ids.
inline Vec3 absolute_offsets(std::span<const IdPoint> estimated, std::span<const IdPoint> truth) {
  const MatchedPoints m = match_ids(estimated, truth);
  if (m.ids.empty()) throw Error(ErrorCode::NoCommonIds, "estimated and truth sets share no ids");
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < m.ids.size(); ++i) sum += m.estimated[i] - m.truth[i];
  return sum / static_cast<double>(m.ids.size());
}

struct RelativeStats {
  Vec3 mean_abs_difference = Vec3::Zero();
  double mean_abs_distance_difference = 0.0;
  std::vector<PairRow> pairs;  // (i < j) in ascending id order
};

/// For every unordered pair, compares per-axis separations |dx|, |dy|, |dz|
/// between the two sets and averages the absolute differences.
inline RelativeStats relative_distance_stats(std::span<const IdPoint> estimated, std::span<const IdPoint> truth) {
  const MatchedPoints m = match_ids(estimated, truth);
  if (m.ids.size() < 2) throw Error(ErrorCode::TooFewPoints, "at least two common ids are required");
  RelativeStats s;
  Vec3 sum = Vec3::Zero();
  double dist_sum = 0.0;
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    for (std::size_t j = i + 1; j < m.ids.size(); ++j) {
      PairRow row;
      row.id_a = m.ids[i];
      row.id_b = m.ids[j];
      const Vec3 de = m.estimated[j] - m.estimated[i];
      const Vec3 dt = m.truth[j] - m.truth[i];
      row.separation_estimated = de.cwiseAbs();
      row.separation_truth = dt.cwiseAbs();
      row.abs_difference = (row.separation_estimated - row.separation_truth).cwiseAbs();
      row.distance_estimated = de.norm();
      row.distance_truth = dt.norm();
      sum += row.abs_difference;
      dist_sum += std::abs(row.distance_estimated - row.distance_truth);
      s.pairs.push_back(row);
    }
  }
  const double n = static_cast<double>(s.pairs.size());
  s.mean_abs_difference = sum / n;
  s.mean_abs_distance_difference = dist_sum / n;
  return s;
}

struct AccuracyReport {
  Vec3 absolute_mean_difference = Vec3::Zero();
  Vec3 relative_mean_abs_difference = Vec3::Zero();
  double relative_mean_abs_distance_difference = 0.0;
  std::size_t n_points = 0;
  std::size_t n_pairs = 0;
  std::vector<PairRow> pairs;
  std::vector<std::int64_t> only_estimated;
  std::vector<std::int64_t> only_truth;
};

inline AccuracyReport assess_accuracy(std::span<const IdPoint> estimated, std::span<const IdPoint> truth) {
  const MatchedPoints m = match_ids(estimated, truth);
  AccuracyReport r;
  r.absolute_mean_difference = absolute_offsets(estimated, truth);
  r.n_points = m.ids.size();
  r.only_estimated = m.only_estimated;
  r.only_truth = m.only_truth;
  if (m.ids.size() >= 2) {
    RelativeStats s = relative_distance_stats(estimated, truth);
    r.relative_mean_abs_difference = s.mean_abs_difference;
    r.relative_mean_abs_distance_difference = s.mean_abs_distance_difference;
    r.pairs = std::move(s.pairs);
  }
  r.n_pairs = r.pairs.size();
  return r;
}

}  // namespace seamless
