#include "dynvio/window.hpp"

#include <algorithm>

namespace dynvio {

bool MarginalPrior::involves(long frame_id) const {
  return std::find(frame_ids.begin(), frame_ids.end(), frame_id) != frame_ids.end();
}

bool MarginalPrior::operator==(const MarginalPrior& o) const {
  if (frame_ids != o.frame_ids || lin_states != o.lin_states) return false;
  if (J.rows() != o.J.rows() || J.cols() != o.J.cols() || r.size() != o.r.size()) return false;
  return J == o.J && r == o.r;
}

int WindowState::index_of(long frame_id) const {
  for (int i = 0; i < size(); ++i)
    if (frames[i].id == frame_id) return i;
  return -1;
}

StateSnapshot snapshot(const WindowState& w) { return StateSnapshot{w}; }

void restore(WindowState& w, const StateSnapshot& s) { w = s.window; }

}  // namespace dynvio
