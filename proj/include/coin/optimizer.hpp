#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "coin/gmm.hpp"
#include "coin/losses.hpp"
#include "coin/motion.hpp"
#include "coin/schedule.hpp"
#include "coin/sds.hpp"
#include "coin/world.hpp"

namespace coin {

// Jointly optimized state for one window.
struct OptVariables {
  MotionWindow motion;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  CameraVars cam;
};

struct StageConfig {
  int id = 1;
  int steps = 500;
  double learning_rate = 0.01;
  bool unlock_motion = false;
  bool unlock_camera_deltas = false;
  // First-frame camera parameters, scale, and shape unlock in every stage.
  // Coarse log-grid search over s on the data terms before Adam starts;
  // the scale axis is multi-basin under the one-sided scene constraint.
  bool scale_line_search = false;
  // Stage-local multiplier on the SDS weight. The final stage polishes the
  // camera against clean data; a full-strength stochastic SDS term only
  // feeds the scale random walk there.
  double sds_scale = 1.0;

  static std::array<StageConfig, 3> standard();
};

struct WindowPlan {
  int window = 128;
  int overlap = 16;
  double mask_threshold = 0.3;
};

struct AblationFlags {
  bool no_control = false;
  bool no_dynamic_control = false;
  bool no_soft_inpaint = false;
  bool no_hsr = false;
};

enum class PseudoGtKind { kCoin, kVanillaSds };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a flat parameter vector with a per-entry unlock mask; locked
// entries are untouched, moments included.
class Adam {
 public:
  Adam(int dim, double lr, const AdamParams& params = {});
  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad,
            const Eigen::ArrayXd& unlocked);

 private:
  double lr_;
  AdamParams p_;
  int t_ = 0;
  Eigen::ArrayXd m_, v_;
};

// Flat packing of OptVariables: [motion, beta, log_s, h0, r0, drot, dtrans].
Eigen::VectorXd pack_variables(const OptVariables& vars);
OptVariables unpack_variables(const Eigen::VectorXd& v, const ChannelLayout& layout);
Eigen::VectorXd pack_gradients(const VarGrads& grads, int frames);

// Confidence-threshold mask over the window channels. Pose channels are
// governed by their joint's 2D confidence, trajectory channels by the
// per-frame mean, contact logits by the paired foot joint; ties at the
// threshold count as observed.
SoftMask build_mask(const ObservationSet& obs, const WindowPlan& plan,
                    const BodyModel& body = BodyModel::standard());

// Prior restricted to the leading `frames` frames of its window (exact GMM
// marginalization). Identity when frames matches the prior window.
GmmPrior window_prior(const GmmPrior& prior, int frames);

struct InitOptions {
  bool ddpm_chain = false;  // sample via the stochastic ancestral chain
  int ddpm_steps = 100;
  ObsNoiseDefaults obs_noise;
  // Pre-fit the SLAM scale by foot-slide consistency before converting the
  // observations; without it the conversion is physically impossible at
  // wrong scales and conditioning lands the motion off the prior manifold.
  bool prefit_scale = true;
};

// Estimated slam-to-world lift: x_world = r0 * x_slam + h0 * e_z. r0 aligns
// the mean body-up direction with gravity; h0 grounds the feet.
struct WorldLift {
  Eigen::Matrix3d r0 = Eigen::Matrix3d::Identity();
  double h0 = 0.0;
};

WorldLift estimate_world_lift(const MotionWindow& slam_motion, const BodyModel& body);
MotionWindow apply_world_lift(const MotionWindow& slam_motion, const WorldLift& lift);

// Initialization: convert observations to the SLAM world frame, condition
// the prior on them, and draw the starting motion; camera variables start
// at the SLAM estimate (s = 1, h0 = 0, R0 = I).
OptVariables initialize(const ObservationSet& obs, const GmmPrior& prior,
                        const DiffusionSchedule& schedule, std::uint64_t seed,
                        const InitOptions& options = {});

struct TraceRow {
  int window = 0;
  int stage = 0;
  int iteration = 0;
  double t = 0.0;
  LossBreakdown losses;
};

// Everything a stage needs besides the variables.
struct WindowProblem {
  ObservationSet obs;  // sliced to this window
  GmmPrior prior;      // window-sized
  std::shared_ptr<const DiffusionSchedule> schedule;
  BodyModel body = BodyModel::standard();
  SoftMask soft_mask;
  Eigen::VectorXd obs_sigma;
  Eigen::VectorXd init_control;  // pinned control for the ablation
  LossWeights weights;
  SdsConfig sds;
  AblationFlags ablation;
  PseudoGtKind pseudo_gt = PseudoGtKind::kCoin;
  double hsr_margin = 0.05;
  int window_index = 0;
};

WindowProblem make_window_problem(const ObservationSet& obs, const GmmPrior& prior,
                                  std::shared_ptr<const DiffusionSchedule> schedule,
                                  const WindowPlan& plan, const LossWeights& weights,
                                  const SdsConfig& sds, const InitOptions& init_options = {});

// One optimization stage: per outer step, refresh the dynamic control,
// rebuild the pseudo ground truth with fresh (t, eps), recompute contact
// labels and HSR terms, then one Adam step on the unlocked variables.
OptVariables run_stage(const WindowProblem& problem, OptVariables vars,
                       const StageConfig& stage, Rng& rng, std::vector<TraceRow>* trace);

struct WindowSpan {
  int begin = 0;
  int length = 0;
};

// Consecutive windows share `overlap` frames; the last window is snapped to
// end exactly at the sequence end. A sequence shorter than the window size
// forms a single short window.
std::vector<WindowSpan> plan_windows(int frames, const WindowPlan& plan);

// Cross-fade merge of per-window solutions: linear on translations, poses
// and contacts, spherical on orientations. Output length equals the input
// sequence length.
MotionWindow stitch_motion(const std::vector<MotionWindow>& pieces,
                           const std::vector<WindowSpan>& spans, int frames);
CameraTrajectory stitch_camera(const std::vector<CameraTrajectory>& pieces,
                               const std::vector<WindowSpan>& spans, int frames);

// Effective camera trajectory for a full window under its variables.
CameraTrajectory effective_trajectory(const CameraTrajectory& base, const CameraVars& vars);

struct PipelineConfig {
  LossWeights weights;
  SdsConfig sds;
  WindowPlan plan;
  std::array<StageConfig, 3> stages = StageConfig::standard();
  AblationFlags ablation;
  PseudoGtKind pseudo_gt = PseudoGtKind::kCoin;
  InitOptions init;
  std::uint64_t seed = 0;
  bool parallel_windows = false;
  bool init_only = false;
};

struct PipelineResult {
  MotionWindow merged_motion;
  Eigen::MatrixXd merged_contacts;  // thresholded logistic of merged logits
  CameraTrajectory merged_camera;
  std::vector<OptVariables> window_vars;
  std::vector<TraceRow> trace;
  double mean_scale = 1.0;
};

// Full three-stage windowed optimization.
PipelineResult run_pipeline(const ObservationSet& obs, const GmmPrior& prior,
                            const PipelineConfig& config);

}  // namespace coin
