#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "coin/errors.hpp"
#include "coin/metrics.hpp"
#include "coin/random.hpp"
#include "coin/rotation.hpp"
#include "coin/world.hpp"

using namespace coin;

namespace {

// ---- Naive second implementations (cross-implementation oracles). ----
// Rotation via Horn's quaternion method instead of SVD, everything in plain
// loops.

Eigen::Matrix3d horn_rotation(const std::vector<Eigen::Vector3d>& a,
                              const std::vector<Eigen::Vector3d>& b) {
  Eigen::Vector3d ma = Eigen::Vector3d::Zero(), mb = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb).transpose();
  Eigen::Matrix4d n;
  n << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d q = es.eigenvectors().col(3);  // leading eigenvector
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  return quat.normalized().toRotationMatrix();
}

struct NaiveAlign {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  double s;
};

NaiveAlign naive_align(const std::vector<Eigen::Vector3d>& a,
                       const std::vector<Eigen::Vector3d>& b, bool allow_scale) {
  NaiveAlign out;
  out.r = horn_rotation(a, b);
  Eigen::Vector3d ma = Eigen::Vector3d::Zero(), mb = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  out.s = 1.0;
  if (allow_scale) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      num += (b[i] - mb).dot(out.r * (a[i] - ma));
      den += (a[i] - ma).squaredNorm();
    }
    out.s = num / den;
  }
  out.t = mb - out.s * (out.r * ma);
  return out;
}

double naive_w_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk) {
  const int frames = static_cast<int>(pred.size());
  double total = 0.0;
  int chunks = 0;
  int start = 0;
  while (start < frames) {
    int end = std::min(frames, start + chunk);
    if (frames - end == 1) end = frames;
    if (end - start < 2) break;
    std::vector<Eigen::Vector3d> a, b;
    for (int i = start; i < start + 2; ++i) {
      for (size_t j = 0; j < pred[i].size(); ++j) {
        a.push_back(pred[i][j]);
        b.push_back(gt[i][j]);
      }
    }
    const NaiveAlign al = naive_align(a, b, false);
    double err = 0.0;
    long count = 0;
    for (int i = start; i < end; ++i) {
      for (size_t j = 0; j < pred[i].size(); ++j) {
        err += (al.r * pred[i][j] + al.t - gt[i][j]).norm();
        ++count;
      }
    }
    total += err / count;
    ++chunks;
    start = end;
  }
  return total / chunks;
}

double naive_wa_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk) {
  const int frames = static_cast<int>(pred.size());
  double total = 0.0;
  int chunks = 0;
  int start = 0;
  while (start < frames) {
    int end = std::min(frames, start + chunk);
    if (frames - end == 1) end = frames;
    if (end - start < 2) break;
    std::vector<Eigen::Vector3d> a, b;
    for (int i = start; i < end; ++i) {
      for (size_t j = 0; j < pred[i].size(); ++j) {
        a.push_back(pred[i][j]);
        b.push_back(gt[i][j]);
      }
    }
    const NaiveAlign al = naive_align(a, b, false);
    double err = 0.0;
    for (size_t i = 0; i < a.size(); ++i) err += (al.r * a[i] + al.t - b[i]).norm();
    total += err / static_cast<double>(a.size());
    ++chunks;
    start = end;
  }
  return total / chunks;
}

double naive_pa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const NaiveAlign al = naive_align(pred[i], gt[i], true);
    double err = 0.0;
    for (size_t j = 0; j < pred[i].size(); ++j) {
      err += (al.s * (al.r * pred[i][j]) + al.t - gt[i][j]).norm();
    }
    total += err / static_cast<double>(pred[i].size());
  }
  return total / static_cast<double>(pred.size());
}

double naive_ate(const CameraTrajectory& pred, const CameraTrajectory& gt, bool with_scale) {
  std::vector<Eigen::Vector3d> a, b;
  for (int i = 0; i < pred.size(); ++i) {
    a.push_back(pred.frames[i].center());
    b.push_back(gt.frames[i].center());
  }
  const NaiveAlign al = naive_align(a, b, with_scale);
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sq += (al.s * (al.r * a[i]) + al.t - b[i]).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(a.size()));
}

JointSequence random_sequence(int frames, int joints, Rng& rng, double step = 0.05) {
  JointSequence seq(frames);
  std::vector<Eigen::Vector3d> base(joints);
  for (int j = 0; j < joints; ++j) base[j] = rng.gaussian_vector(3);
  Eigen::Vector3d drift = Eigen::Vector3d::Zero();
  for (int i = 0; i < frames; ++i) {
    drift += step * rng.gaussian_vector(3);
    seq[i].resize(joints);
    for (int j = 0; j < joints; ++j) {
      seq[i][j] = base[j] + drift + 0.02 * rng.gaussian_vector(3);
    }
  }
  return seq;
}

JointSequence transform_sequence(const JointSequence& seq, const Eigen::Matrix3d& r,
                                 const Eigen::Vector3d& t, double s = 1.0) {
  JointSequence out = seq;
  for (auto& frame : out) {
    for (auto& p : frame) p = s * (r * p) + t;
  }
  return out;
}

CameraTrajectory random_camera(int frames, Rng& rng) {
  GaitParams gp;
  gp.turn_rate = rng.uniform(-0.3, 0.3);
  gp.speed = rng.uniform(0.8, 1.6);
  const MotionWithContacts m = generate_motion(gp, frames, rng.raw());
  return generate_camera(m.motion, CameraStyle::kHandheld, {}, rng.raw());
}

CameraTrajectory scale_camera(const CameraTrajectory& cam, double s) {
  CameraTrajectory out = cam;
  for (auto& f : out.frames) f.translation *= s;  // centers scale by s
  return out;
}

}  // namespace

TEST_CASE("procrustes") {
  Rng rng(7);
  std::vector<Eigen::Vector3d> a(8);
  for (auto& p : a) p = rng.gaussian_vector(3);

  SUBCASE("identity on equal clouds") {
    const Alignment al = procrustes(a, a, true);
    CHECK((al.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(al.translation.norm() < 1e-12);
    CHECK(al.scale == doctest::Approx(1.0));
  }

  SUBCASE("recovers a known similarity transform") {
    const Eigen::Matrix3d r0 = rotvec_to_matrix(Eigen::Vector3d(0.3, -0.8, 0.5));
    const Eigen::Vector3d t0(1.0, -2.0, 0.4);
    std::vector<Eigen::Vector3d> b(a.size());
    for (size_t i = 0; i < a.size(); ++i) b[i] = 2.0 * (r0 * a[i]) + t0;
    const Alignment al = procrustes(a, b, true);
    CHECK(al.scale == doctest::Approx(2.0).epsilon(1e-9));
    CHECK((al.rotation - r0).norm() < 1e-9);
    CHECK((al.translation - t0).norm() < 1e-9);
  }

  SUBCASE("reflection guard keeps det +1 with positive residual") {
    std::vector<Eigen::Vector3d> b(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
      b[i] = a[i];
      b[i].x() = -b[i].x();  // mirror
    }
    const Alignment al = procrustes(a, b, false);
    CHECK(al.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    double residual = 0.0;
    for (size_t i = 0; i < a.size(); ++i) residual += (al.apply(a[i]) - b[i]).squaredNorm();
    CHECK(residual > 1e-3);

    // Brute-force check: no proper rotation beats the SVD answer (sample
    // many random rotations).
    for (int k = 0; k < 200; ++k) {
      const Eigen::Matrix3d r = rotvec_to_matrix(rng.gaussian_vector(3));
      Eigen::Vector3d ma = Eigen::Vector3d::Zero(), mb = Eigen::Vector3d::Zero();
      for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
      }
      ma /= a.size();
      mb /= b.size();
      double other = 0.0;
      for (size_t i = 0; i < a.size(); ++i) {
        other += (r * (a[i] - ma) - (b[i] - mb)).squaredNorm();
      }
      CHECK(other >= residual - 1e-9);
    }
  }

  SUBCASE("degenerate input rejected") {
    std::vector<Eigen::Vector3d> line(5), copy(5);
    for (int i = 0; i < 5; ++i) line[i] = Eigen::Vector3d(i, 2.0 * i, -i);
    copy = line;
    CHECK_THROWS_AS(procrustes(line, copy, false), ConfigError);
    std::vector<Eigen::Vector3d> two(2, Eigen::Vector3d::Zero());
    CHECK_THROWS_AS(procrustes(two, two, false), ConfigError);
  }
}

TEST_CASE("w_mpjpe") {
  Rng rng(17);

  SUBCASE("identical sequences score zero") {
    const JointSequence seq = random_sequence(40, 5, rng);
    CHECK(w_mpjpe(seq, seq) == doctest::Approx(0.0));
  }

  SUBCASE("constant offset is absorbed by the alignment") {
    const JointSequence gt = random_sequence(40, 5, rng);
    const JointSequence pred =
        transform_sequence(gt, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.7, -0.3, 1.1));
    CHECK(w_mpjpe(pred, gt) < 1e-12);
  }

  SUBCASE("linear drift matches the closed-form oracle") {
    const int frames = 100;
    std::vector<Eigen::Vector3d> cloud(5);
    for (auto& p : cloud) p = rng.gaussian_vector(3);
    JointSequence gt(frames, cloud);
    const double rho = 0.003;
    const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, -1).normalized();
    JointSequence pred = gt;
    for (int i = 0; i < frames; ++i) {
      for (auto& p : pred[i]) p += rho * i * dir;
    }
    // First-two-frame alignment recovers R = I and shifts by rho/2; the
    // per-frame error is rho * |i - 0.5|, averaged over 100 frames.
    double expect = 0.0;
    for (int i = 0; i < frames; ++i) expect += rho * std::abs(i - 0.5) / frames;
    CHECK(w_mpjpe(pred, gt) == doctest::Approx(expect).epsilon(1e-9));
  }

  SUBCASE("length mismatch is an error") {
    const JointSequence seq = random_sequence(10, 5, rng);
    JointSequence longer = seq;
    longer.push_back(seq.back());
    CHECK_THROWS_AS(w_mpjpe(longer, seq), ConfigError);
  }
}

TEST_CASE("wa_mpjpe") {
  Rng rng(23);
  const JointSequence gt = random_sequence(120, 5, rng);

  SUBCASE("identical and rigidly transformed sequences score zero") {
    CHECK(wa_mpjpe(gt, gt) == doctest::Approx(0.0));
    const Eigen::Matrix3d r = rotvec_to_matrix(Eigen::Vector3d(0.2, 0.1, -0.4));
    const JointSequence pred = transform_sequence(gt, r, Eigen::Vector3d(3, -1, 2));
    CHECK(wa_mpjpe(pred, gt) < 1e-9);
  }

  SUBCASE("whole-chunk alignment never loses to first-two-frame alignment") {
    for (int k = 0; k < 20; ++k) {
      const JointSequence g = random_sequence(100, 5, rng);
      JointSequence p = g;
      for (size_t i = 0; i < p.size(); ++i) {
        for (auto& pt : p[i]) pt += 0.01 * i * Eigen::Vector3d(1, 0, 0);
      }
      CHECK(wa_mpjpe(p, g) <= w_mpjpe(p, g) + 1e-12);
    }
  }
}

TEST_CASE("pa_mpjpe") {
  Rng rng(29);
  const JointSequence gt = random_sequence(30, 5, rng);

  SUBCASE("per-frame similarity copies score zero") {
    JointSequence pred = gt;
    for (size_t i = 0; i < pred.size(); ++i) {
      const Eigen::Matrix3d r = rotvec_to_matrix(rng.gaussian_vector(3));
      const double s = rng.uniform(0.5, 2.0);
      for (auto& p : pred[i]) p = s * (r * p) + Eigen::Vector3d(1, 2, 3);
    }
    CHECK(pa_mpjpe(pred, gt) < 1e-9);
  }

  SUBCASE("perturbation scores positive and matches the naive implementation") {
    JointSequence pred = gt;
    for (auto& frame : pred) {
      for (auto& p : frame) p += 0.05 * rng.gaussian_vector(3);
    }
    const double ours = pa_mpjpe(pred, gt);
    CHECK(ours > 0.0);
    CHECK(ours == doctest::Approx(naive_pa_mpjpe(pred, gt)).epsilon(1e-9));
  }
}

TEST_CASE("accel_error") {
  Rng rng(31);
  const JointSequence gt = random_sequence(20, 5, rng);
  const double dt = 1.0 / 30.0;

  CHECK(accel_error(gt, gt, dt) == doctest::Approx(0.0));

  SUBCASE("constant offsets vanish under second differences") {
    const JointSequence pred =
        transform_sequence(gt, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.4, 0.4, -0.2));
    CHECK(accel_error(pred, gt, dt) < 1e-9);
  }

  SUBCASE("single-frame spike follows the stencil") {
    JointSequence pred = gt;
    const double a = 0.02;
    pred[7][2].z() += a;
    // The spike enters three second-difference windows with weights 1,-2,1.
    const double expect = (a + 2 * a + a) / ((20.0 - 2.0) * 5.0 * dt * dt);
    CHECK(accel_error(pred, gt, dt) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("ate and ate-s") {
  Rng rng(37);
  const CameraTrajectory gt = random_camera(50, rng);

  SUBCASE("identical trajectories score zero") {
    CHECK(ate(gt, gt, true) == doctest::Approx(0.0));
    CHECK(ate(gt, gt, false) == doctest::Approx(0.0));
  }

  SUBCASE("pure scaling: ATE absorbs it, ATE-S does not") {
    const CameraTrajectory pred = scale_camera(gt, 2.0);
    CHECK(ate(pred, gt, true) < 1e-9);
    CHECK(ate(pred, gt, false) > 0.1);
  }

  SUBCASE("ATE never exceeds ATE-S") {
    for (int k = 0; k < 20; ++k) {
      CameraTrajectory pred = random_camera(40, rng);
      CameraTrajectory target = pred;
      for (auto& f : target.frames) {
        f.translation += 0.05 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
      }
      CHECK(ate(pred, target, true) <= ate(pred, target, false) + 1e-12);
    }
  }
}

TEST_CASE("rte and roe") {
  GaitParams gp;
  const MotionWithContacts m = generate_motion(gp, 30, 41);
  const CameraTrajectory cam = generate_camera(m.motion, CameraStyle::kFollow, {}, 42);

  SUBCASE("identical inputs score zero") {
    const RteRoe r = rte_roe(m.motion, cam, m.motion, cam);
    CHECK(r.rte == doctest::Approx(0.0));
    CHECK(r.roe == doctest::Approx(0.0));
  }

  SUBCASE("a global world transform cancels under first-camera alignment") {
    const Eigen::Matrix3d r = rotvec_to_matrix(Eigen::Vector3d(0.1, 0.7, -0.2));
    const Eigen::Vector3d t(5, -2, 1);
    MotionWindow moved = m.motion;
    CameraTrajectory moved_cam = cam;
    for (int i = 0; i < moved.frames(); ++i) {
      moved.set_translation(i, r * m.motion.translation(i) + t);
      moved.set_orientation(
          i, matrix_to_rotvec(r * rotvec_to_matrix(m.motion.orientation(i))));
      moved_cam.frames[i].rotation = cam.frames[i].rotation * r.transpose();
      moved_cam.frames[i].translation =
          cam.frames[i].translation - moved_cam.frames[i].rotation * t;
    }
    const RteRoe out = rte_roe(moved, moved_cam, m.motion, cam);
    CHECK(out.rte < 1e-9);
    CHECK(out.roe < 1e-7);
  }

  SUBCASE("constant orientation offset after frame 1") {
    MotionWindow pred = m.motion;
    const double deg = 10.0;
    for (int i = 1; i < pred.frames(); ++i) {
      const Eigen::Matrix3d rot = rotvec_to_matrix(m.motion.orientation(i)) *
                                  rotvec_to_matrix(Eigen::Vector3d(0, 0, deg * M_PI / 180.0));
      pred.set_orientation(i, matrix_to_rotvec(rot));
    }
    const RteRoe out = rte_roe(pred, cam, m.motion, cam);
    const double frames = pred.frames();
    CHECK(out.roe == doctest::Approx(deg * (frames - 1) / frames).epsilon(1e-9));
    CHECK(out.rte < 1e-12);
  }
}

TEST_CASE("cross-implementation agreement on random cases") {
  Rng rng(43);
  for (int k = 0; k < 100; ++k) {
    const int frames = rng.uniform_int(12, 60);
    const JointSequence gt = random_sequence(frames, 5, rng);
    JointSequence pred = gt;
    const Eigen::Matrix3d r = rotvec_to_matrix(0.3 * rng.gaussian_vector(3));
    const Eigen::Vector3d t = rng.gaussian_vector(3);
    pred = transform_sequence(pred, r, t);
    for (auto& frame : pred) {
      for (auto& p : frame) p += 0.03 * rng.gaussian_vector(3);
    }
    const int chunk = 25;
    CHECK(w_mpjpe(pred, gt, chunk) ==
          doctest::Approx(naive_w_mpjpe(pred, gt, chunk)).epsilon(1e-9));
    CHECK(wa_mpjpe(pred, gt, chunk) ==
          doctest::Approx(naive_wa_mpjpe(pred, gt, chunk)).epsilon(1e-9));
    CHECK(pa_mpjpe(pred, gt) == doctest::Approx(naive_pa_mpjpe(pred, gt)).epsilon(1e-9));
  }
  for (int k = 0; k < 20; ++k) {
    CameraTrajectory a = random_camera(30, rng);
    CameraTrajectory b = a;
    for (auto& f : b.frames) {
      f.translation += 0.03 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
    }
    CHECK(ate(a, b, true) == doctest::Approx(naive_ate(a, b, true)).epsilon(1e-9));
    CHECK(ate(a, b, false) == doctest::Approx(naive_ate(a, b, false)).epsilon(1e-9));
  }
}

TEST_CASE("metric invariance contracts") {
  Rng rng(47);
  const JointSequence gt = random_sequence(60, 5, rng);
  JointSequence pred = gt;
  for (auto& frame : pred) {
    for (auto& p : frame) p += 0.04 * rng.gaussian_vector(3);
  }

  SUBCASE("W-MPJPE invariant to a joint global rigid transform") {
    const Eigen::Matrix3d r = rotvec_to_matrix(Eigen::Vector3d(-0.2, 0.5, 0.9));
    const Eigen::Vector3d t(2, 2, -1);
    const double before = w_mpjpe(pred, gt);
    const double after = w_mpjpe(transform_sequence(pred, r, t), transform_sequence(gt, r, t));
    CHECK(before == doctest::Approx(after).epsilon(1e-9));
  }

  SUBCASE("PA-MPJPE invariant to per-frame similarity of pred alone") {
    JointSequence warped = pred;
    for (auto& frame : warped) {
      const Eigen::Matrix3d r = rotvec_to_matrix(rng.gaussian_vector(3));
      const double s = rng.uniform(0.6, 1.8);
      for (auto& p : frame) p = s * (r * p) + Eigen::Vector3d(0.3, -1, 2);
    }
    CHECK(pa_mpjpe(warped, gt) == doctest::Approx(pa_mpjpe(pred, gt)).epsilon(1e-9));
  }

  SUBCASE("ATE invariant to global scaling of pred; ATE-S strictly not") {
    const CameraTrajectory traj = random_camera(40, rng);
    CameraTrajectory noisy = traj;
    for (auto& f : noisy.frames) {
      f.translation += 0.02 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
    }
    const CameraTrajectory scaled = scale_camera(noisy, 2.0);
    CHECK(ate(scaled, traj, true) == doctest::Approx(ate(noisy, traj, true)).epsilon(1e-9));
    CHECK(ate(scaled, traj, false) > ate(noisy, traj, false));
  }
}

TEST_CASE("w_rje restricts the W-MPJPE error to the root") {
  Rng rng(53);
  const JointSequence gt = random_sequence(40, 5, rng);
  JointSequence pred = gt;
  for (size_t i = 0; i < pred.size(); ++i) pred[i][0] += Eigen::Vector3d(0.1, 0, 0);
  const double rje = w_rje(pred, gt);
  CHECK(rje > 0.0);
  CHECK(w_rje(gt, gt) == doctest::Approx(0.0));
}
