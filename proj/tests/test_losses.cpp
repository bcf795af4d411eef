#include <doctest.h>

#include <cmath>
#include <functional>

#include "coin/errors.hpp"
#include "coin/losses.hpp"
#include "coin/random.hpp"
#include "coin/rotation.hpp"
#include "coin/world.hpp"
#include "oracles.hpp"

using namespace coin;

namespace {

struct MiniScenario {
  MotionWithContacts gt;
  CameraTrajectory cam;
  Scene scene;
  ObservationSet obs;
  BodyModel body = BodyModel::standard();
};

MiniScenario make_scenario(int frames, std::uint64_t seed, const NoiseConfig& noise) {
  MiniScenario s;
  GaitParams gp;
  s.gt = generate_motion(gp, frames, seed);
  s.cam = generate_camera(s.gt.motion, CameraStyle::kOrbit, {}, seed + 1);
  s.scene = make_scene(s.gt.motion, {}, seed + 2);
  anchor_world_to_first_camera(s.gt.motion, s.cam, s.scene);
  s.obs = simulate_observations(s.gt.motion, s.gt.contacts, s.cam, s.scene, noise, seed + 3);
  return s;
}

// Flat parameter vector [motion, beta, log_s, h0, r0, drot, dtrans] for
// finite-difference checks over every variable group.
struct Packed {
  MotionWindow motion;
  Eigen::Vector2d beta;
  CameraVars cam;
};

Eigen::VectorXd pack(const Packed& p) {
  const int d = p.motion.dim();
  const int t = p.motion.frames();
  Eigen::VectorXd v(d + 2 + 1 + 1 + 3 + 6 * t);
  int at = 0;
  v.segment(at, d) = p.motion.flat();
  at += d;
  v.segment<2>(at) = p.beta;
  at += 2;
  v[at++] = p.cam.log_s;
  v[at++] = p.cam.h0;
  v.segment<3>(at) = p.cam.r0;
  at += 3;
  for (int i = 0; i < t; ++i) v.segment<3>(at + 3 * i) = p.cam.delta_rot.row(i).transpose();
  at += 3 * t;
  for (int i = 0; i < t; ++i) v.segment<3>(at + 3 * i) = p.cam.delta_trans.row(i).transpose();
  return v;
}

Packed unpack(const Eigen::VectorXd& v, const ChannelLayout& layout) {
  Packed p{MotionWindow(layout.frames, layout.local_joints), Eigen::Vector2d::Zero(),
           CameraVars::identity(layout.frames)};
  const int d = layout.total_dim();
  const int t = layout.frames;
  int at = 0;
  p.motion.flat() = v.segment(at, d);
  at += d;
  p.beta = v.segment<2>(at);
  at += 2;
  p.cam.log_s = v[at++];
  p.cam.h0 = v[at++];
  p.cam.r0 = v.segment<3>(at);
  at += 3;
  for (int i = 0; i < t; ++i) p.cam.delta_rot.row(i) = v.segment<3>(at + 3 * i).transpose();
  at += 3 * t;
  for (int i = 0; i < t; ++i) p.cam.delta_trans.row(i) = v.segment<3>(at + 3 * i).transpose();
  return p;
}

Eigen::VectorXd pack_grads(const VarGrads& g, int frames) {
  const int d = static_cast<int>(g.motion.size());
  Eigen::VectorXd v(d + 2 + 1 + 1 + 3 + 6 * frames);
  int at = 0;
  v.segment(at, d) = g.motion;
  at += d;
  v.segment<2>(at) = g.beta;
  at += 2;
  v[at++] = g.log_s;
  v[at++] = g.h0;
  v.segment<3>(at) = g.r0;
  at += 3;
  for (int i = 0; i < frames; ++i) v.segment<3>(at + 3 * i) = g.delta_rot.row(i).transpose();
  at += 3 * frames;
  for (int i = 0; i < frames; ++i) v.segment<3>(at + 3 * i) = g.delta_trans.row(i).transpose();
  return v;
}

void check_gradient(const std::function<LossResult(const Packed&)>& loss, const Packed& at,
                    double tol = 1e-4) {
  const ChannelLayout layout = at.motion.layout();
  const LossResult res = loss(at);
  const Eigen::VectorXd analytic = pack_grads(res.grads, layout.frames);
  const Eigen::VectorXd fd = oracles::finite_difference(
      [&](const Eigen::VectorXd& v) { return loss(unpack(v, layout)).value; }, pack(at), 1e-5);
  const double denom = std::max(1e-9, fd.norm());
  CHECK((analytic - fd).norm() / denom < tol);
}

Packed perturbed_vars(const MiniScenario& s, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Packed p{s.gt.motion, Eigen::Vector2d::Zero(), CameraVars::identity(s.gt.motion.frames())};
  p.motion.flat() += scale * rng.gaussian_vector(p.motion.dim());
  p.beta = scale * rng.gaussian_vector(2);
  p.cam.log_s = scale * rng.gaussian();
  p.cam.h0 = scale * rng.gaussian();
  p.cam.r0 = scale * rng.gaussian_vector(3);
  for (int i = 0; i < s.gt.motion.frames(); ++i) {
    p.cam.delta_rot.row(i) = (scale * rng.gaussian_vector(3)).transpose();
    p.cam.delta_trans.row(i) = (scale * rng.gaussian_vector(3)).transpose();
  }
  return p;
}

}  // namespace

TEST_CASE("loss_2d values") {
  const MiniScenario s = make_scenario(8, 100, NoiseConfig::none());
  const CameraVars vars = CameraVars::identity(8);

  SUBCASE("perfect estimate on noiseless observations is zero") {
    // The ground-truth world motion expressed in the SLAM frame, with the
    // true lift (r0, h0), reprojects exactly.
    const LossResult r = loss_2d(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam,
                                 CameraVars::identity(8), s.obs.kp2d, s.obs.kp2d_conf);
    // cam here is the true camera; kp2d was generated through it.
    CHECK(r.value < 1e-18);
    CHECK(r.grads.squared_norm() < 1e-18);
  }

  SUBCASE("single joint offset inside the Huber quadratic zone") {
    Eigen::MatrixXd kp = s.obs.kp2d;
    kp(3, 2 * 2) += 1.0;  // one pixel on joint 2, frame 3
    const LossResult r = loss_2d(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam, vars, kp,
                                 s.obs.kp2d_conf);
    const double fx = s.cam.intrinsics.fx;
    const double norm = 8.0 * s.body.observed_joints();
    CHECK(r.value == doctest::Approx(0.5 * (1.0 / fx) * (1.0 / fx) / norm).epsilon(1e-9));
  }

  SUBCASE("beyond the Huber zone the penalty is linear") {
    Eigen::MatrixXd kp = s.obs.kp2d;
    kp(1, 0) += 500.0;
    const double fx = s.cam.intrinsics.fx;
    const double norm = 8.0 * s.body.observed_joints();
    const double dn = 10.0 / fx;
    const LossResult r = loss_2d(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam, vars, kp,
                                 s.obs.kp2d_conf);
    CHECK(r.value == doctest::Approx(dn * (500.0 / fx - 0.5 * dn) / norm).epsilon(1e-9));
  }
}

TEST_CASE("loss_2d gradient matches finite differences") {
  const MiniScenario s = make_scenario(6, 200, NoiseConfig::none());
  for (int trial = 0; trial < 3; ++trial) {
    const Packed p = perturbed_vars(s, 300 + trial, 0.02);
    check_gradient(
        [&](const Packed& q) {
          return loss_2d(q.motion, q.beta, s.body, s.obs.cam_est, q.cam, s.obs.kp2d,
                         s.obs.kp2d_conf);
        },
        p, 1e-4);
  }
}

TEST_CASE("loss_3d values and gradient") {
  const MiniScenario s = make_scenario(6, 400, NoiseConfig::none());

  SUBCASE("perfect estimate is zero") {
    const LossResult r = loss_3d(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam,
                                 CameraVars::identity(6), s.obs.local3d);
    CHECK(r.value < 1e-18);
  }

  SUBCASE("single joint offset d gives d^2 / (T J)") {
    Eigen::MatrixXd l3d = s.obs.local3d;
    const double d = 0.07;
    l3d(2, 3 * 3 + 1) += d;  // joint 3, frame 2, y component
    const LossResult r = loss_3d(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam,
                                 CameraVars::identity(6), l3d);
    CHECK(r.value == doctest::Approx(d * d / (6.0 * s.body.local_joints)).epsilon(1e-9));
  }

  SUBCASE("gradient matches finite differences") {
    for (int trial = 0; trial < 3; ++trial) {
      const Packed p = perturbed_vars(s, 500 + trial, 0.02);
      check_gradient(
          [&](const Packed& q) {
            return loss_3d(q.motion, q.beta, s.body, s.obs.cam_est, q.cam, s.obs.local3d);
          },
          p, 1e-4);
    }
  }
}

TEST_CASE("loss_smooth values and gradient") {
  const BodyModel body = BodyModel::standard();

  SUBCASE("constant velocity motion is exactly smooth") {
    MotionWindow motion(6, body.local_joints);
    for (int i = 0; i < 6; ++i) {
      motion.set_translation(i, Eigen::Vector3d(0.1 * i, -0.2 * i, 0.9));
      motion.set_orientation(i, Eigen::Vector3d(0, 0, 0.3));
    }
    const LossResult r = loss_smooth(motion, Eigen::Vector2d::Zero(), body);
    CHECK(r.value < 1e-18);
  }

  SUBCASE("single-frame spike follows the stencil arithmetic") {
    const int frames = 7;
    MotionWindow motion(frames, body.local_joints);
    for (int i = 0; i < frames; ++i) motion.set_translation(i, Eigen::Vector3d(0, 0, 0.9));
    const double a = 0.11;
    Eigen::Vector3d spike = motion.translation(3);
    spike.x() += a;
    motion.set_translation(3, spike);

    // Oracle: the (1,-2,1) stencil hits the spike three times with
    // coefficients (1, -2, 1); the spike moves the root channel and every
    // world joint identically.
    const double norm = (frames - 2.0) * (body.observed_joints() + 2);
    const double per_channel = (1.0 + 4.0 + 1.0) * a * a;
    const double expected = per_channel * (body.observed_joints() + 1) / norm;
    const LossResult r = loss_smooth(motion, Eigen::Vector2d::Zero(), body);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("too-short window rejected") {
    MotionWindow motion(2, body.local_joints);
    CHECK_THROWS_AS(loss_smooth(motion, Eigen::Vector2d::Zero(), body), ConfigError);
  }

  SUBCASE("gradient matches finite differences") {
    const MiniScenario s = make_scenario(6, 600, NoiseConfig::none());
    for (int trial = 0; trial < 3; ++trial) {
      const Packed p = perturbed_vars(s, 700 + trial, 0.05);
      check_gradient(
          [&](const Packed& q) { return loss_smooth(q.motion, q.beta, s.body); }, p, 1e-4);
    }
  }
}

TEST_CASE("loss_contact values and gradient") {
  const BodyModel body = BodyModel::standard();

  SUBCASE("no contacts means zero loss") {
    const MiniScenario s = make_scenario(6, 800, NoiseConfig::none());
    const Eigen::MatrixXd labels = Eigen::MatrixXd::Zero(6, kContactCount);
    const LossResult r = loss_contact(s.gt.motion, Eigen::Vector2d::Zero(), body, labels);
    CHECK(r.value == 0.0);
    CHECK(r.grads.squared_norm() == 0.0);
  }

  SUBCASE("stationary feet under full contact cost nothing") {
    MotionWindow motion(5, body.local_joints);
    for (int i = 0; i < 5; ++i) motion.set_translation(i, Eigen::Vector3d(0, 0, 0.9));
    const Eigen::MatrixXd labels = Eigen::MatrixXd::Ones(5, kContactCount);
    const LossResult r = loss_contact(motion, Eigen::Vector2d::Zero(), body, labels);
    CHECK(r.value < 1e-18);
  }

  SUBCASE("moving labeled foot pays the squared displacement") {
    const int frames = 5;
    MotionWindow motion(frames, body.local_joints);
    const double d = 0.04;
    for (int i = 0; i < frames; ++i) {
      motion.set_translation(i, Eigen::Vector3d(d * i, 0, 0.9));  // whole body slides
    }
    Eigen::MatrixXd labels = Eigen::MatrixXd::Zero(frames, kContactCount);
    labels.col(0).setOnes();  // logit 0 tracks the left foot
    const double norm = (frames - 1.0) * kContactCount;
    const double expected = (frames - 1) * d * d / norm;
    const LossResult r = loss_contact(motion, Eigen::Vector2d::Zero(), body, labels);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("gradient matches finite differences") {
    const MiniScenario s = make_scenario(6, 900, NoiseConfig::none());
    Eigen::MatrixXd labels(6, kContactCount);
    Rng rng(41);
    for (int i = 0; i < labels.size(); ++i) {
      labels.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    const Packed p = perturbed_vars(s, 901, 0.05);
    check_gradient(
        [&](const Packed& q) { return loss_contact(q.motion, q.beta, s.body, labels); }, p,
        1e-4);
  }
}

TEST_CASE("loss_beta") {
  ChannelLayout layout{4, 4};
  CHECK(loss_beta(Eigen::Vector2d::Zero(), layout).value == 0.0);
  const LossResult r = loss_beta(Eigen::Vector2d(0.3, -0.4), layout);
  CHECK(r.value == doctest::Approx(0.25));
  CHECK(r.grads.beta[0] == doctest::Approx(0.6));
  CHECK(r.grads.beta[1] == doctest::Approx(-0.8));
}

TEST_CASE("loss_hsr") {
  const MiniScenario s = make_scenario(8, 1000, NoiseConfig::none());
  const CameraVars vars = CameraVars::identity(8);

  SUBCASE("correct depth order costs nothing") {
    // True geometry: every flagged point really is behind the body, so no
    // depth-order violations exist.
    const auto terms = build_hsr_assignment(s.gt.motion, Eigen::Vector2d::Zero(), s.body,
                                            s.cam, vars, s.scene, s.obs.point_occluded);
    CHECK(!terms.empty());
    const LossResult r = loss_hsr(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.cam, vars,
                                  s.scene, terms);
    CHECK(r.value == 0.0);
    CHECK(r.grads.squared_norm() == 0.0);
  }

  SUBCASE("hand-constructed single violation") {
    // One scene point 0.2 units in front of the root joint, projecting onto
    // it exactly.
    Scene one;
    one.points.resize(1, 3);
    const EffectiveCamera eff = effective_camera(s.obs.cam_est.frames[0], vars, 0);
    const Eigen::Vector3d root = s.gt.motion.translation(0);
    // Build the SLAM-frame point whose camera depth is root depth - 0.2.
    const Eigen::Vector3d root_cam = eff.to_camera(root);
    Eigen::Vector3d target_cam = root_cam * ((root_cam.z() - 0.2) / root_cam.z());
    const Eigen::Vector3d slam_point =
        eff.r_base.transpose() * (target_cam - eff.t_base);  // s = 1, no deltas
    one.points.row(0) = slam_point.transpose();

    std::vector<HsrTerm> terms{{0, 0, 0}};
    const LossResult r = loss_hsr(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.obs.cam_est,
                                  vars, one, terms);
    CHECK(r.value == doctest::Approx(0.2).epsilon(1e-9));
  }

  SUBCASE("empty assignment gives zero value and gradient") {
    const LossResult r = loss_hsr(s.gt.motion, Eigen::Vector2d::Zero(), s.body, s.obs.cam_est,
                                  vars, s.obs.scene_est, {});
    CHECK(r.value == 0.0);
    CHECK(r.grads.squared_norm() == 0.0);
  }

  SUBCASE("gradient matches finite differences with frozen assignment") {
    const Packed p = perturbed_vars(s, 1100, 0.03);
    const auto terms = build_hsr_assignment(p.motion, p.beta, s.body, s.obs.cam_est, p.cam,
                                            s.obs.scene_est, s.obs.point_occluded);
    REQUIRE(!terms.empty());
    check_gradient(
        [&](const Packed& q) {
          return loss_hsr(q.motion, q.beta, s.body, s.obs.cam_est, q.cam, s.obs.scene_est,
                          terms);
        },
        p, 2e-4);
  }

  SUBCASE("scale underestimate is pushed upward") {
    // With s < s_true the scene collapses toward the camera and occluded
    // points land in front of the body: dL/d(log s) < 0.
    NoiseConfig cfg = NoiseConfig::none();
    cfg.true_scale = 2.0;
    const ObservationSet obs =
        simulate_observations(s.gt.motion, s.gt.contacts, s.cam, s.scene, cfg, 7);
    const MotionWithContacts init = observation_to_world_motion(obs, s.body);
    CameraVars v = CameraVars::identity(8);  // s = 1 underestimates s_true = 2
    const auto terms = build_hsr_assignment(init.motion, Eigen::Vector2d::Zero(), s.body,
                                            obs.cam_est, v, obs.scene_est, obs.point_occluded);
    REQUIRE(!terms.empty());
    const LossResult r = loss_hsr(init.motion, Eigen::Vector2d::Zero(), s.body, obs.cam_est, v,
                                  obs.scene_est, terms);
    CHECK(r.value > 0.0);
    CHECK(r.grads.log_s < 0.0);
  }
}

TEST_CASE("loss breakdown total is an exact weighted sum") {
  LossBreakdown b;
  b.l_2d = 0.5;
  b.l_3d = 0.25;
  b.l_beta = 1.5;
  b.l_smooth = 0.125;
  b.l_contact = 2.0;
  b.l_hsr = 0.75;
  b.l_coin_sds = 4.0;
  b.weights = LossWeights{};
  const double expect = 20.0 * 0.5 + 5.0 * 0.25 + 0.01 * 1.5 + 0.05 * 0.125 + 0.05 * 2.0 +
                        1.0 * 0.75 + 0.1 * 4.0;
  CHECK(std::abs(b.total() - expect) < 1e-12);
}
