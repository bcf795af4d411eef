#include "coin/metrics.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "coin/errors.hpp"
#include "coin/rotation.hpp"

namespace coin {

namespace {

struct LsAlign {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
  double scale;
};

// Umeyama least-squares alignment a -> b. No degeneracy checks; for rank-
// deficient clouds the objective value is still the least-squares optimum.
LsAlign align_ls(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                 bool allow_scale) {
  const int n = static_cast<int>(a.size());
  Eigen::Vector3d mu_a = Eigen::Vector3d::Zero(), mu_b = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    mu_a += a[i];
    mu_b += b[i];
  }
  mu_a /= n;
  mu_b /= n;
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  double var_a = 0.0;
  for (int i = 0; i < n; ++i) {
    m += (b[i] - mu_b) * (a[i] - mu_a).transpose();
    var_a += (a[i] - mu_a).squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = Eigen::Vector3d::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d[2] = -1.0;
  LsAlign out;
  out.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  out.scale = 1.0;
  if (allow_scale && var_a > 0.0) {
    out.scale = svd.singularValues().dot(d) / var_a;
  }
  out.translation = mu_b - out.scale * (out.rotation * mu_a);
  return out;
}

std::vector<std::pair<int, int>> chunk_ranges(int frames, int chunk) {
  if (frames < 2) throw ConfigError("metrics: need at least 2 frames");
  if (chunk < 2) throw ConfigError("metrics: chunk must be at least 2 frames");
  std::vector<std::pair<int, int>> out;
  int start = 0;
  while (start < frames) {
    int end = std::min(frames, start + chunk);
    if (frames - end == 1) end = frames;  // fold a trailing single frame
    out.emplace_back(start, end);
    start = end;
  }
  if (out.back().second - out.back().first < 2) {
    if (out.size() == 1) throw ConfigError("metrics: chunk shorter than 2 frames");
    out.pop_back();
  }
  return out;
}

void check_shapes(const JointSequence& pred, const JointSequence& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ConfigError("metrics: sequence length mismatch");
  }
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size() || pred[i].empty()) {
      throw ConfigError("metrics: joint count mismatch");
    }
  }
}

// W-MPJPE core with a joint filter for the error accumulation (W-RJE uses
// the same first-two-frame alignment but scores the root only).
double w_mpjpe_impl(const JointSequence& pred, const JointSequence& gt, int chunk,
                    bool root_only) {
  check_shapes(pred, gt);
  const auto ranges = chunk_ranges(static_cast<int>(pred.size()), chunk);
  double total = 0.0;
  for (const auto& [begin, end] : ranges) {
    std::vector<Eigen::Vector3d> a, b;
    for (int i = begin; i < begin + 2; ++i) {
      a.insert(a.end(), pred[i].begin(), pred[i].end());
      b.insert(b.end(), gt[i].begin(), gt[i].end());
    }
    const LsAlign align = align_ls(a, b, false);
    double err = 0.0;
    long count = 0;
    for (int i = begin; i < end; ++i) {
      const size_t joints = root_only ? 1 : pred[i].size();
      for (size_t j = 0; j < joints; ++j) {
        err += (align.rotation * pred[i][j] + align.translation - gt[i][j]).norm();
        ++count;
      }
    }
    total += err / count;
  }
  return total / ranges.size();
}

}  // namespace

JointSequence joint_sequence(const MotionWindow& motion, const BodyModel& body,
                             const Eigen::Vector2d& beta) {
  JointSequence out(motion.frames());
  for (int i = 0; i < motion.frames(); ++i) out[i] = world_joints(motion, i, body, beta);
  return out;
}

Alignment procrustes(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                     bool allow_scale) {
  if (a.size() != b.size() || a.size() < 3) {
    throw ConfigError("procrustes: needs at least 3 paired points");
  }
  Eigen::Vector3d mu_a = Eigen::Vector3d::Zero();
  for (const auto& p : a) mu_a += p;
  mu_a /= static_cast<double>(a.size());
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (const auto& p : a) spread += (p - mu_a) * (p - mu_a).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(spread);
  const double lead = es.eigenvalues()[2];
  if (!(lead > 0.0) || es.eigenvalues()[1] <= 1e-12 * lead) {
    throw ConfigError("procrustes: degenerate (coincident or collinear) points");
  }

  const LsAlign ls = align_ls(a, b, allow_scale);
  Alignment out;
  out.kind = allow_scale ? AlignKind::kSimilarity : AlignKind::kRigidOnly;
  out.rotation = ls.rotation;
  out.translation = ls.translation;
  out.scale = ls.scale;
  return out;
}

double w_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk) {
  return w_mpjpe_impl(pred, gt, chunk, false);
}

double w_rje(const JointSequence& pred, const JointSequence& gt, int chunk) {
  return w_mpjpe_impl(pred, gt, chunk, true);
}

double wa_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk) {
  check_shapes(pred, gt);
  const auto ranges = chunk_ranges(static_cast<int>(pred.size()), chunk);
  double total = 0.0;
  for (const auto& [begin, end] : ranges) {
    std::vector<Eigen::Vector3d> a, b;
    for (int i = begin; i < end; ++i) {
      a.insert(a.end(), pred[i].begin(), pred[i].end());
      b.insert(b.end(), gt[i].begin(), gt[i].end());
    }
    const LsAlign align = align_ls(a, b, false);
    double err = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      err += (align.rotation * a[i] + align.translation - b[i]).norm();
    }
    total += err / static_cast<double>(a.size());
  }
  return total / ranges.size();
}

double pa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  check_shapes(pred, gt);
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const LsAlign align = align_ls(pred[i], gt[i], true);
    double err = 0.0;
    for (size_t j = 0; j < pred[i].size(); ++j) {
      err += (align.scale * (align.rotation * pred[i][j]) + align.translation - gt[i][j]).norm();
    }
    total += err / static_cast<double>(pred[i].size());
  }
  return total / static_cast<double>(pred.size());
}

double accel_error(const JointSequence& pred, const JointSequence& gt, double dt) {
  check_shapes(pred, gt);
  const int frames = static_cast<int>(pred.size());
  if (frames < 3) throw ConfigError("accel_error: needs at least 3 frames");
  double total = 0.0;
  long count = 0;
  for (int i = 1; i + 1 < frames; ++i) {
    for (size_t j = 0; j < pred[i].size(); ++j) {
      const Eigen::Vector3d ap = pred[i + 1][j] - 2.0 * pred[i][j] + pred[i - 1][j];
      const Eigen::Vector3d ag = gt[i + 1][j] - 2.0 * gt[i][j] + gt[i - 1][j];
      total += (ap - ag).norm();
      ++count;
    }
  }
  return total / (count * dt * dt);
}

namespace {

std::vector<Eigen::Vector3d> centers(const CameraTrajectory& cam) {
  std::vector<Eigen::Vector3d> out(cam.size());
  for (int i = 0; i < cam.size(); ++i) out[i] = cam.frames[i].center();
  return out;
}

}  // namespace

double ate(const CameraTrajectory& pred, const CameraTrajectory& gt, bool with_scale) {
  if (pred.size() != gt.size() || pred.size() < 2) {
    throw ConfigError("ate: trajectory length mismatch");
  }
  const auto a = centers(pred);
  const auto b = centers(gt);
  const LsAlign align = align_ls(a, b, with_scale);
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sq += (align.scale * (align.rotation * a[i]) + align.translation - b[i]).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(a.size()));
}

double cam_accel(const CameraTrajectory& pred, const CameraTrajectory& gt, double dt) {
  if (pred.size() != gt.size() || pred.size() < 3) {
    throw ConfigError("cam_accel: trajectory length mismatch");
  }
  const auto a = centers(pred);
  const auto b = centers(gt);
  double total = 0.0;
  long count = 0;
  for (size_t i = 1; i + 1 < a.size(); ++i) {
    const Eigen::Vector3d ap = a[i + 1] - 2.0 * a[i] + a[i - 1];
    const Eigen::Vector3d ag = b[i + 1] - 2.0 * b[i] + b[i - 1];
    total += (ap - ag).norm();
    ++count;
  }
  return total / (count * dt * dt);
}

RteRoe rte_roe(const MotionWindow& pred, const CameraTrajectory& pred_cam,
               const MotionWindow& gt, const CameraTrajectory& gt_cam) {
  const int frames = pred.frames();
  if (gt.frames() != frames || pred_cam.size() != frames || gt_cam.size() != frames) {
    throw ConfigError("rte_roe: length mismatch");
  }
  const Eigen::Matrix3d rp = pred_cam.frames[0].rotation;
  const Eigen::Vector3d tp = pred_cam.frames[0].translation;
  const Eigen::Matrix3d rg = gt_cam.frames[0].rotation;
  const Eigen::Vector3d tg = gt_cam.frames[0].translation;

  RteRoe out;
  for (int i = 0; i < frames; ++i) {
    const Eigen::Vector3d root_p = rp * pred.translation(i) + tp;
    const Eigen::Vector3d root_g = rg * gt.translation(i) + tg;
    out.rte += (root_p - root_g).norm() / frames;
    const Eigen::Matrix3d orient_p = rp * rotvec_to_matrix(pred.orientation(i));
    const Eigen::Matrix3d orient_g = rg * rotvec_to_matrix(gt.orientation(i));
    out.roe += geodesic_angle(orient_p, orient_g) * (180.0 / M_PI) / frames;
  }
  return out;
}

}  // namespace coin
