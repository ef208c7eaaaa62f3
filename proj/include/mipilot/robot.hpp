#pragma once

#include <cstdint>
#include <functional>

#include "mipilot/common.hpp"

namespace mipilot::robot {

struct MotionConfig {
  double yaw_rate = 0.5;       // rad/s
  double forward_speed = 0.3;  // m/s
};

// Velocity command of the quadruped stand-in. Positive yaw rate turns left.
struct Motion {
  double v = 0;
  double yaw_rate = 0;

  bool operator==(const Motion&) const = default;
};

// R turns left, L turns right, K walks forward, N stops.
Motion map_class_to_command(MiClass label, const MotionConfig& cfg = {});

struct RobotState {
  double x = 0, y = 0, yaw = 0;
  double v_forward = 0, yaw_rate = 0;

  bool operator==(const RobotState&) const = default;
};

// Unicycle step with mid-step heading. Throws ArgumentError unless dt > 0.
RobotState robot_sim_step(RobotState state, Motion motion, double dt);

// Kinematic simulator driven by timestamped commands. Commands hold until the next one; without
// a new command for `stop_timeout_ms` the robot stops. Poses are reported every
// `pose_period_ms` of simulated time.
class RobotSim {
 public:
  using PoseSink = std::function<void(std::int64_t t_ms, const RobotState&)>;

  explicit RobotSim(MotionConfig motion = {}, std::int64_t stop_timeout_ms = 2000,
                    std::int64_t pose_period_ms = 100);

  // Integrates to t_ms, reporting every pose tick in (now, t_ms], then applies the command.
  void command(std::int64_t t_ms, MiClass cmd, const PoseSink& sink = {});
  void advance_to(std::int64_t t_ms, const PoseSink& sink = {});

  const RobotState& state() const { return state_; }
  std::int64_t now_ms() const { return now_ms_; }

 private:
  void integrate_to(std::int64_t t_ms);

  MotionConfig motion_;
  std::int64_t stop_timeout_ms_;
  std::int64_t pose_period_ms_;
  RobotState state_;
  std::int64_t now_ms_ = 0;
  std::int64_t last_command_ms_ = 0;
  bool moving_ = false;
};

}  // namespace mipilot::robot
