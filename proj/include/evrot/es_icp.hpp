#ifndef EVROT_ES_ICP_HPP
#define EVROT_ES_ICP_HPP

#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "evrot/errors.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"
#include "evrot/parallel.hpp"
#include "evrot/spherical_map.hpp"

namespace evrot {

/// Point-to-line pairing: frame point p (pre-rotation), line through centroid
/// c with unit direction d fitted to the map neighbors of R p.
struct LineCorrespondence {
  Vec3 p;
  Vec3 d;
  Vec3 c;
};

struct IcpConfig {
  unsigned k_neighbors = 5;
  int max_iterations = 20;
  double convergence_eps = 1e-6;     // rad
  double max_corr_dist = 0.02;       // rad, great-circle gate to nearest neighbor
  double line_condition_min = 0.75;  // dominant eigenvalue fraction

  void validate() const {
    if (k_neighbors < 2) throw ConfigError("k_neighbors: must be >= 2");
    if (max_iterations < 1) throw ConfigError("max_iterations: must be >= 1");
    if (!(convergence_eps > 0.0)) throw ConfigError("convergence_eps: must be > 0");
    if (!(max_corr_dist > 0.0)) throw ConfigError("max_corr_dist: must be > 0");
  }
};

struct IcpResult {
  Mat3 rotation = Mat3::Identity();
  int iterations = 0;
  double final_cost = 0.0;  // mean squared residual over inliers, rad^2
  int inlier_count = 0;
  bool converged = false;
};

struct FittedLine {
  Vec3 d;  // unit direction, sign-fixed
  Vec3 c;  // centroid
};

/// Fits a line c + d·τ to a neighborhood: c is the mean, d the principal axis
/// of the covariance with its sign fixed so the first nonzero component is
/// positive. Returns nullopt when the neighborhood is degenerate (dominant
/// eigenvalue fraction below line_condition_min, or all points coincide).
inline std::optional<FittedLine> fit_line(std::span<const Vec3> neighbors,
                                          double line_condition_min = 0.75) {
  if (neighbors.size() < 2) return std::nullopt;
  Vec3 c = Vec3::Zero();
  for (const Vec3& q : neighbors) c += q;
  c /= double(neighbors.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& q : neighbors) {
    const Vec3 e = q - c;
    cov.noalias() += e * e.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  eig.computeDirect(cov);
  const double trace = eig.eigenvalues().sum();
  if (!(trace > 0.0)) return std::nullopt;  // all points coincide
  if (eig.eigenvalues()(2) / trace < line_condition_min) return std::nullopt;
  Vec3 d = eig.eigenvectors().col(2);
  for (int i = 0; i < 3; ++i) {
    if (d[i] != 0.0) {
      if (d[i] < 0.0) d = -d;
      break;
    }
  }
  return FittedLine{d, c};
}

/// Point-to-line residual r = d × (R p − c); ‖r‖ is the Euclidean distance of
/// R p to the infinite line since ‖d‖ = 1.
inline Vec3 residual(const Mat3& rotation, const LineCorrespondence& corr) {
  return corr.d.cross(rotation * corr.p - corr.c);
}

/// Derivative of the residual w.r.t. a right-multiplied so(3) perturbation:
/// residual(R·exp(δ̂), corr) ≈ residual(R, corr) + J δ, with J = −d̂ R p̂.
inline Mat3 jacobian(const Mat3& rotation, const LineCorrespondence& corr) {
  return -hat(corr.d) * rotation * hat(corr.p);
}

inline constexpr double kNormalEqMaxCondition = 1e12;

/// Solves H Δx = g, rejecting rank-deficient systems.
inline Vec3 solve_normal_equations(const Mat3& h, const Vec3& g) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  eig.computeDirect(h);
  const Vec3 lam = eig.eigenvalues();
  if (!(lam(2) > 0.0) || lam(0) < lam(2) / kNormalEqMaxCondition) {
    const Vec3 null_dir = eig.eigenvectors().col(0);
    throw DegenerateGeometryError(
        "gauss_newton_step: normal equations are rank deficient along (" +
            std::to_string(null_dir.x()) + ", " + std::to_string(null_dir.y()) + ", " +
            std::to_string(null_dir.z()) + ")",
        null_dir.x(), null_dir.y(), null_dir.z());
  }
  return eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(lam).matrix();
}

/// One Gauss-Newton increment for a fixed correspondence set:
/// H = Σ JᵢᵀJᵢ, g = −Σ Jᵢᵀ rᵢ, returns Δx with H Δx = g.
inline Vec3 gauss_newton_step(std::span<const LineCorrespondence> correspondences,
                              const Mat3& rotation) {
  Mat3 h = Mat3::Zero();
  Vec3 g = Vec3::Zero();
  for (const LineCorrespondence& corr : correspondences) {
    const Mat3 j = jacobian(rotation, corr);
    h.noalias() += j.transpose() * j;
    g.noalias() -= j.transpose() * residual(rotation, corr);
  }
  return solve_normal_equations(h, g);
}

/// Aligns a motion-compensated frame to the map by point-to-line Gauss-Newton
/// on SO(3). Correspondences are rebuilt every iteration: transform points,
/// query k nearest neighbors, gate on the great-circle angle to the nearest
/// neighbor, fit lines, accumulate the normal equations, update
/// R ← R exp(Δx̂). Per-point work fans out over the worker pool; partial sums
/// are combined in fixed chunk order so results are reproducible at equal
/// worker counts.
inline IcpResult align_frame(const EventSphericalFrame& frame, const SphericalMap& map,
                             const Mat3& r_init, const IcpConfig& cfg) {
  cfg.validate();
  if (map.empty()) throw AlignmentError("align_frame: map is empty");
  if (map.size() < cfg.k_neighbors) {
    throw AlignmentError("align_frame: map smaller than k_neighbors");
  }
  const std::size_t n = frame.points.size();
  if (n == 0) throw AlignmentError("align_frame: frame is empty");

  // Gate threshold on chord distance: ‖a − b‖ = 2 sin(angle/2) for unit vectors.
  const double gate_chord2 = [&] {
    const double s = 2.0 * std::sin(std::min(cfg.max_corr_dist, M_PI) * 0.5);
    return s * s;
  }();

  struct Accum {
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    double cost = 0.0;
    int inliers = 0;
  };

  IcpResult result;
  result.rotation = r_init;
  const unsigned workers = global_pool().workers();
  std::vector<Accum> partials(workers);
  std::vector<std::vector<KdTree3::Neighbor>> scratch(workers);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    for (Accum& a : partials) a = Accum{};
    const Mat3 rot = result.rotation;
    parallel_chunks(n, [&](unsigned chunk, std::size_t b, std::size_t e) {
      Accum& acc = partials[chunk];
      auto& neigh = scratch[chunk];
      for (std::size_t i = b; i < e; ++i) {
        const Vec3& p = frame.points[i];
        const Vec3 pt = rot * p;
        map.knn_query(pt, cfg.k_neighbors, neigh);
        if (neigh.front().dist2 > gate_chord2) continue;
        Vec3 c = Vec3::Zero();
        Mat3 cov = Mat3::Zero();
        for (const auto& nb : neigh) c += map.points()[nb.index];
        c /= double(neigh.size());
        for (const auto& nb : neigh) {
          const Vec3 d = map.points()[nb.index] - c;
          cov.noalias() += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig;
        eig.computeDirect(cov);
        const double trace = eig.eigenvalues().sum();
        if (!(trace > 0.0) ||
            eig.eigenvalues()(2) / trace < cfg.line_condition_min) {
          continue;
        }
        const Vec3 d = eig.eigenvectors().col(2);
        const Vec3 r = d.cross(pt - c);
        const Mat3 j = -hat(d) * rot * hat(p);
        acc.h.noalias() += j.transpose() * j;
        acc.g.noalias() -= j.transpose() * r;
        acc.cost += r.squaredNorm();
        acc.inliers += 1;
      }
    });
    Accum total;
    for (const Accum& a : partials) {
      total.h += a.h;
      total.g += a.g;
      total.cost += a.cost;
      total.inliers += a.inliers;
    }
    if (total.inliers == 0) {
      throw AlignmentError("align_frame: zero inlier correspondences at iteration " +
                           std::to_string(it));
    }
    const Vec3 dx = solve_normal_equations(total.h, total.g);
    result.rotation = result.rotation * exp_map(dx);
    result.iterations = it + 1;
    result.final_cost = total.cost / double(total.inliers);
    result.inlier_count = total.inliers;
    if (dx.norm() < cfg.convergence_eps) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace evrot

#endif  // EVROT_ES_ICP_HPP
