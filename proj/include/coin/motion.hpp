#pragma once

#include <Eigen/Core>

namespace coin {

constexpr int kContactCount = 4;

// Channel indexing for a T-frame window with J_local body joints. Each frame
// packs [tau(3), phi(3), theta(J_local*3), f(4)] contiguously; frames are
// concatenated in order.
struct ChannelLayout {
  int frames = 0;
  int local_joints = 0;

  int frame_dim() const { return 10 + 3 * local_joints; }
  int total_dim() const { return frames * frame_dim(); }

  int tau(int frame, int axis = 0) const { return frame * frame_dim() + axis; }
  int phi(int frame, int axis = 0) const { return frame * frame_dim() + 3 + axis; }
  int theta(int frame, int joint, int axis = 0) const {
    return frame * frame_dim() + 6 + 3 * joint + axis;
  }
  int contact(int frame, int k) const {
    return frame * frame_dim() + 6 + 3 * local_joints + k;
  }

  bool operator==(const ChannelLayout&) const = default;
};

// Flattened per-frame subject state over a window of frames: world
// translation, root orientation (rotation vector), local joint displacements
// and contact logits.
class MotionWindow {
 public:
  MotionWindow() = default;
  MotionWindow(int frames, int local_joints)
      : layout_{frames, local_joints},
        data_(Eigen::VectorXd::Zero(layout_.total_dim())) {}
  MotionWindow(const ChannelLayout& layout, Eigen::VectorXd data);

  static MotionWindow from_flat(const ChannelLayout& layout, const Eigen::VectorXd& data) {
    return MotionWindow(layout, data);
  }

  const ChannelLayout& layout() const { return layout_; }
  int frames() const { return layout_.frames; }
  int local_joints() const { return layout_.local_joints; }
  int dim() const { return layout_.total_dim(); }

  const Eigen::VectorXd& flat() const { return data_; }
  Eigen::VectorXd& flat() { return data_; }

  Eigen::Vector3d translation(int frame) const {
    return data_.segment<3>(layout_.tau(frame));
  }
  Eigen::Vector3d orientation(int frame) const {
    return data_.segment<3>(layout_.phi(frame));
  }
  Eigen::Vector3d joint_displacement(int frame, int joint) const {
    return data_.segment<3>(layout_.theta(frame, joint));
  }
  double contact_logit(int frame, int k) const {
    return data_[layout_.contact(frame, k)];
  }
  // Logistic map of the contact logit, in [0, 1].
  double contact_probability(int frame, int k) const;

  void set_translation(int frame, const Eigen::Vector3d& v) {
    data_.segment<3>(layout_.tau(frame)) = v;
  }
  void set_orientation(int frame, const Eigen::Vector3d& v) {
    data_.segment<3>(layout_.phi(frame)) = v;
  }
  void set_joint_displacement(int frame, int joint, const Eigen::Vector3d& v) {
    data_.segment<3>(layout_.theta(frame, joint)) = v;
  }
  void set_contact_logit(int frame, int k, double v) {
    data_[layout_.contact(frame, k)] = v;
  }

  // Copy of frames [begin, begin + count).
  MotionWindow slice(int begin, int count) const;

 private:
  ChannelLayout layout_;
  Eigen::VectorXd data_;
};

}  // namespace coin
