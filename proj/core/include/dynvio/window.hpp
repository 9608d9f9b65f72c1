#pragma once

#include <map>
#include <optional>
#include <vector>

#include "dynvio/imu_preint.hpp"
#include "dynvio/state.hpp"

namespace dynvio {

/// A body state in the sliding window plus the preintegration that links it
/// to the previous frame in the window.
struct Frame {
  long id = -1;
  BodyState state;
  bool keyframe = true;
  std::optional<Preintegration> preint;  ///< empty for the first frame
  bool operator==(const Frame&) const = default;
};

/// Linear prior left behind by marginalization:
/// cost = || r + J (x boxminus x_lin) ||^2 over the listed frames, 15 columns
/// per frame in `frame_ids` order.
struct MarginalPrior {
  std::vector<long> frame_ids;
  std::vector<BodyState> lin_states;
  MatX J;
  VecX r;

  bool empty() const { return frame_ids.empty() || J.rows() == 0; }
  int dim() const { return 15 * static_cast<int>(frame_ids.size()); }
  bool involves(long frame_id) const;
  bool operator==(const MarginalPrior& o) const;
};

/// All states jointly estimated in the sliding window.
struct WindowState {
  std::vector<Frame> frames;
  std::map<long, Feature> features;
  MarginalPrior prior;
  Vec3 g_w = default_gravity();

  int size() const { return static_cast<int>(frames.size()); }
  /// Index of a frame id in `frames`, or -1.
  int index_of(long frame_id) const;
  const Frame& newest() const { return frames.back(); }
  bool operator==(const WindowState& o) const = default;
};

/// Immutable deep copy of everything an optimization pass may mutate.
struct StateSnapshot {
  WindowState window;
};

StateSnapshot snapshot(const WindowState& w);
void restore(WindowState& w, const StateSnapshot& s);

}  // namespace dynvio
