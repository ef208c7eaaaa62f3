#include "mipilot/robot.hpp"

#include <cmath>

namespace mipilot::robot {

Motion map_class_to_command(MiClass label, const MotionConfig& cfg) {
  switch (label) {
    case MiClass::R: return {0.0, cfg.yaw_rate};
    case MiClass::L: return {0.0, -cfg.yaw_rate};
    case MiClass::K: return {cfg.forward_speed, 0.0};
    case MiClass::N: return {};
  }
  return {};
}

RobotState robot_sim_step(RobotState s, Motion m, double dt) {
  if (!(dt > 0)) throw ArgumentError("simulation step needs dt > 0");
  s.v_forward = m.v;
  s.yaw_rate = m.yaw_rate;
  const double mid = s.yaw + 0.5 * m.yaw_rate * dt;
  s.x += m.v * std::cos(mid) * dt;
  s.y += m.v * std::sin(mid) * dt;
  s.yaw += m.yaw_rate * dt;
  return s;
}

RobotSim::RobotSim(MotionConfig motion, std::int64_t stop_timeout_ms, std::int64_t pose_period_ms)
    : motion_(motion), stop_timeout_ms_(stop_timeout_ms), pose_period_ms_(pose_period_ms) {
  if (stop_timeout_ms_ <= 0 || pose_period_ms_ <= 0)
    throw ArgumentError("timeout and pose period must be positive");
}

void RobotSim::integrate_to(std::int64_t t_ms) {
  while (now_ms_ < t_ms) {
    std::int64_t stop = t_ms;
    const std::int64_t deadline = last_command_ms_ + stop_timeout_ms_;
    if (moving_ && deadline > now_ms_ && deadline < stop) stop = deadline;
    if (moving_ && now_ms_ >= deadline) {
      state_.v_forward = 0;
      state_.yaw_rate = 0;
      moving_ = false;
    }
    if (moving_) {
      state_ = robot_sim_step(state_, {state_.v_forward, state_.yaw_rate},
                              static_cast<double>(stop - now_ms_) / 1000.0);
    }
    now_ms_ = stop;
  }
  if (moving_ && now_ms_ >= last_command_ms_ + stop_timeout_ms_) {
    state_.v_forward = 0;
    state_.yaw_rate = 0;
    moving_ = false;
  }
}

void RobotSim::advance_to(std::int64_t t_ms, const PoseSink& sink) {
  if (t_ms < now_ms_) throw ArgumentError("simulation time cannot go backwards");
  std::int64_t tick = (now_ms_ / pose_period_ms_ + 1) * pose_period_ms_;
  for (; tick <= t_ms; tick += pose_period_ms_) {
    integrate_to(tick);
    if (sink) sink(tick, state_);
  }
  integrate_to(t_ms);
}

void RobotSim::command(std::int64_t t_ms, MiClass cmd, const PoseSink& sink) {
  advance_to(t_ms, sink);
  const Motion m = map_class_to_command(cmd, motion_);
  state_.v_forward = m.v;
  state_.yaw_rate = m.yaw_rate;
  moving_ = m.v != 0 || m.yaw_rate != 0;
  last_command_ms_ = t_ms;
}

}  // namespace mipilot::robot
