#include "pointssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pointssl {

void AugmentationConfig::validate() const {
  auto ordered = [](double lo, double hi) { return lo <= hi; };
  if (!ordered(crop_volume_lo, crop_volume_hi) || !ordered(crop_aspect_lo, crop_aspect_hi) ||
      !ordered(cutout_dim_lo, cutout_dim_hi) || !ordered(dropout_lo, dropout_hi))
    throw std::invalid_argument("augmentation config: range bounds out of order");
  if (crop_prob < 0.0 || crop_prob > 1.0 || cutout_prob < 0.0 || cutout_prob > 1.0)
    throw std::invalid_argument("augmentation config: probabilities must lie in [0, 1]");
  if (jitter_max < 0.0) throw std::invalid_argument("augmentation config: jitter_max must be non-negative");
  if (min_surviving_points < 4)
    throw std::invalid_argument("augmentation config: min_surviving_points must be at least 4");
  if (target_points < min_surviving_points)
    throw std::invalid_argument("augmentation config: target_points must be >= min_surviving_points");
}

namespace {

PointCloud select_columns(const PointCloud& cloud, const std::vector<Eigen::Index>& idx) {
  PointCloud out;
  out.label = cloud.label;
  out.points.resize(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.points.col(static_cast<Eigen::Index>(i)) = cloud.points.col(idx[i]);
  return out;
}

constexpr int kMaxResamples = 10;

}  // namespace

PointCloud random_crop(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg) {
  cloud.validate();
  const Aabb box = bounding_box(cloud);
  const Eigen::Vector3d ext = box.extents();

  // Edge fractions f_i = v^(1/3) * exp(u_i) with u_1+u_2+u_3 = 0 and
  // |u_i| <= L/3, which keeps every pairwise ratio exp(u_i - u_j) within
  // [exp(-L), exp(L)] c [aspect_lo, aspect_hi]. Fractions are capped at 1.
  const double log_hi = std::log(cfg.crop_aspect_hi);
  const double log_lo = -std::log(cfg.crop_aspect_lo);
  const double L = std::max(0.0, std::min(log_hi, log_lo));

  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    const double volume = rng.uniform(cfg.crop_volume_lo, cfg.crop_volume_hi);
    const double u1 = rng.uniform(-L / 3.0, L / 3.0);
    const double u2 = rng.uniform(-L / 3.0, L / 3.0);
    const double base = std::cbrt(volume);
    Eigen::Vector3d frac(base * std::exp(u1), base * std::exp(u2), base * std::exp(-u1 - u2));
    frac = frac.cwiseMin(1.0);

    Eigen::Vector3d lo, hi;
    for (int a = 0; a < 3; ++a) {
      const double len = frac[a] * ext[a];
      lo[a] = rng.uniform(box.min[a], box.max[a] - len);
      hi[a] = lo[a] + len;
    }

    std::vector<Eigen::Index> kept;
    kept.reserve(static_cast<std::size_t>(cloud.size()));
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3d p = cloud.points.col(i);
      if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) kept.push_back(i);
    }
    if (static_cast<int>(kept.size()) >= cfg.min_surviving_points) return select_columns(cloud, kept);
  }
  return cloud;
}

PointCloud random_cutout(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg) {
  cloud.validate();
  const Aabb box = bounding_box(cloud);
  const Eigen::Vector3d ext = box.extents();

  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    Eigen::Vector3d half;
    Eigen::Vector3d center;
    for (int a = 0; a < 3; ++a) {
      half[a] = 0.5 * rng.uniform(cfg.cutout_dim_lo, cfg.cutout_dim_hi) * ext[a];
      center[a] = rng.uniform(box.min[a], box.max[a]);
    }
    std::vector<Eigen::Index> kept;
    kept.reserve(static_cast<std::size_t>(cloud.size()));
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3d p = cloud.points.col(i);
      const bool inside = ((p - center).array().abs() < half.array()).all();
      if (!inside) kept.push_back(i);
    }
    if (static_cast<int>(kept.size()) >= cfg.min_surviving_points) return select_columns(cloud, kept);
  }
  return cloud;
}

PointCloud random_jitter(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg) {
  cloud.validate();
  PointCloud out = cloud;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    for (int a = 0; a < 3; ++a) out.points(a, i) += rng.uniform(-cfg.jitter_max, cfg.jitter_max);
  return out;
}

PointCloud random_dropout(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg) {
  cloud.validate();
  const Eigen::Index n = cloud.size();
  const double ratio = rng.uniform(cfg.dropout_lo, cfg.dropout_hi);
  Eigen::Index drop = static_cast<Eigen::Index>(std::llround(ratio * static_cast<double>(n)));
  drop = std::min(drop, std::max<Eigen::Index>(0, n - cfg.min_surviving_points));
  if (drop <= 0) return cloud;

  // Partial Fisher-Yates over the index set, then restore input order.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < drop; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<Eigen::Index> kept(idx.begin() + drop, idx.end());
  std::sort(kept.begin(), kept.end());
  return select_columns(cloud, kept);
}

PointCloud downsample(const PointCloud& cloud, int n, RngStream& rng) {
  cloud.validate();
  if (n < 1) throw std::invalid_argument("downsample: target size must be at least 1");
  const Eigen::Index have = cloud.size();
  std::vector<Eigen::Index> idx;
  if (have >= n) {
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(have));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    for (int i = 0; i < n; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(have - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    idx.assign(pool.begin(), pool.begin() + n);
    std::sort(idx.begin(), idx.end());  // keep input order; N == n reduces to the identity
  } else {
    idx.resize(static_cast<std::size_t>(have));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    while (static_cast<int>(idx.size()) < n)
      idx.push_back(static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(have))));
  }
  return select_columns(cloud, idx);
}

PointCloud apply_pipeline(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg) {
  cfg.validate();
  cloud.validate();
  PointCloud out = cloud;
  if (rng.bernoulli(cfg.crop_prob)) out = random_crop(out, rng, cfg);
  if (rng.bernoulli(cfg.cutout_prob)) out = random_cutout(out, rng, cfg);
  out = random_jitter(out, rng, cfg);
  out = random_dropout(out, rng, cfg);
  out = downsample(out, cfg.target_points, rng);
  if (cfg.normalize) out = normalize_unit_sphere(out);
  return out;
}

}  // namespace pointssl
