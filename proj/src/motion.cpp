#include "coin/motion.hpp"

#include <cmath>

#include "coin/errors.hpp"

namespace coin {

MotionWindow::MotionWindow(const ChannelLayout& layout, Eigen::VectorXd data)
    : layout_(layout), data_(std::move(data)) {
  if (data_.size() != layout_.total_dim()) {
    throw ConfigError("MotionWindow: flat vector size does not match layout");
  }
}

double MotionWindow::contact_probability(int frame, int k) const {
  return 1.0 / (1.0 + std::exp(-contact_logit(frame, k)));
}

MotionWindow MotionWindow::slice(int begin, int count) const {
  if (begin < 0 || count < 1 || begin + count > frames()) {
    throw ConfigError("MotionWindow::slice out of range");
  }
  MotionWindow out(count, local_joints());
  const int fd = layout_.frame_dim();
  out.data_ = data_.segment(begin * fd, count * fd);
  return out;
}

}  // namespace coin
