#pragma once

// Shared benchmark-style fixtures: a gait-window dataset, a fitted motion
// prior (cached per window length), and seeded scenarios.

#include <map>
#include <mutex>

#include "coin/gmm.hpp"
#include "coin/random.hpp"
#include "coin/rotation.hpp"
#include "coin/optimizer.hpp"
#include "coin/world.hpp"

namespace coin::fixtures {

inline GaitParams random_gait(Rng& rng) {
  GaitParams p;
  p.speed = rng.uniform(0.6, 1.6);
  p.turn_rate = rng.uniform(-0.4, 0.4);
  p.start_heading = rng.uniform(-M_PI, M_PI);
  p.start_xy = Eigen::Vector2d(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
  p.stride_frequency = rng.uniform(1.1, 1.7);
  p.step_height = rng.uniform(0.05, 0.12);
  p.root_height = rng.uniform(0.85, 0.95);
  return p;
}

inline Eigen::MatrixXd gait_dataset(int frames, int count, std::uint64_t seed) {
  Rng rng(seed);
  const ChannelLayout layout{frames, BodyModel::standard().local_joints};
  Eigen::MatrixXd data(count, layout.total_dim());
  for (int i = 0; i < count; ++i) {
    const GaitParams p = random_gait(rng);
    const MotionWithContacts m = generate_motion(p, frames, rng.raw());
    data.row(i) = m.motion.flat().transpose();
  }
  return data;
}

// Fitted prior, cached per (frames, components, dataset size).
inline const GmmPrior& test_prior(int frames, int components = 2, int count = 300) {
  static std::map<std::tuple<int, int, int>, GmmPrior> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_tuple(frames, components, count);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const Eigen::MatrixXd data = gait_dataset(frames, count, 8675309);
    GmmFitOptions options;
    options.max_iterations = 40;
    GmmFitResult fit =
        fit_gmm(data, components, 42, options,
                ChannelLayout{frames, BodyModel::standard().local_joints});
    it = cache.emplace(key, std::move(fit.prior)).first;
  }
  return it->second;
}

struct TestScenario {
  MotionWithContacts gt;
  CameraTrajectory cam;
  Scene scene;
  ObservationSet obs;
};

// Benchmark scenario/pipeline settings shared by optimizer tests and the
// acceptance suite: fast orbit for parallax, dense near-path scene for the
// human-scene constraint, per-channel SDS weighting.
inline CameraGenParams benchmark_camera_params() {
  CameraGenParams p;
  p.orbit_speed = 1.3;
  return p;
}

inline SceneGenParams benchmark_scene_params() {
  SceneGenParams p;
  p.num_points = 400;
  p.margin = 1.5;
  p.max_height = 1.8;
  return p;
}

inline SdsConfig benchmark_sds(int total_dim) {
  SdsConfig sds;
  sds.omega = [total_dim](double) { return 1.0 / total_dim; };
  return sds;
}

inline TestScenario make_test_scenario(int frames, std::uint64_t seed, const NoiseConfig& noise,
                                       CameraStyle style = CameraStyle::kOrbit) {
  TestScenario s;
  Rng rng(Rng::derive_seed(seed, 17));
  GaitParams gait = random_gait(rng);
  gait.start_xy.setZero();
  gait.start_heading = rng.uniform(-1.0, 1.0);
  s.gt = generate_motion(gait, frames, Rng::derive_seed(seed, 1));
  s.cam = generate_camera(s.gt.motion, style, benchmark_camera_params(),
                          Rng::derive_seed(seed, 2));
  s.scene = make_scene(s.gt.motion, benchmark_scene_params(), Rng::derive_seed(seed, 3));
  anchor_world_to_first_camera(s.gt.motion, s.cam, s.scene);
  s.obs = simulate_observations(s.gt.motion, s.gt.contacts, s.cam, s.scene, noise,
                                Rng::derive_seed(seed, 4));
  return s;
}

// Full three-stage benchmark pipeline configuration for one window.
inline PipelineConfig benchmark_pipeline_config(int frames, std::uint64_t seed) {
  PipelineConfig pc;
  pc.plan.window = frames;
  pc.plan.overlap = std::min(16, frames / 2);
  pc.sds = benchmark_sds(frames * ChannelLayout{frames, 4}.frame_dim());
  pc.seed = seed;
  return pc;
}

// Ground truth expressed in the SLAM frame of the scenario's true camera.
inline MotionWindow gt_in_slam_frame(const TestScenario& s) {
  const Eigen::Matrix3d r1 = s.cam.frames[0].rotation;
  const Eigen::Vector3d t1 = s.cam.frames[0].translation;
  MotionWindow out = s.gt.motion;
  for (int i = 0; i < out.frames(); ++i) {
    out.set_translation(i, r1 * s.gt.motion.translation(i) + t1);
    out.set_orientation(i, matrix_to_rotvec(r1 * rotvec_to_matrix(s.gt.motion.orientation(i))));
  }
  return out;
}

}  // namespace coin::fixtures
