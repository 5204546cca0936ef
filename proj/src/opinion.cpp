#include "bcsync/opinion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bcsync {

OpinionState::OpinionState(std::vector<double> values, std::uint64_t time) : values_(std::move(values)), time_(time) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ModelError("opinion of agent " + std::to_string(i) + " must lie in [0,1], got " + std::to_string(v));
    }
  }
}

OpinionState::OpinionState(std::initializer_list<double> values) : OpinionState(std::vector<double>(values)) {}

AgentSet::AgentSet(std::size_t universe) : mask_(universe, 0) {}

AgentSet::AgentSet(std::size_t universe, std::initializer_list<AgentIndex> members)
    : AgentSet(universe, std::span<const AgentIndex>(members.begin(), members.size())) {}

AgentSet::AgentSet(std::size_t universe, std::span<const AgentIndex> members) : mask_(universe, 0) {
  members_.reserve(members.size());
  for (AgentIndex i : members) {
    if (i >= universe) {
      throw ModelError("agent index " + std::to_string(i) + " outside {0.." + std::to_string(universe) + "-1}");
    }
    if (mask_[i] != 0) throw ModelError("agent index " + std::to_string(i) + " listed twice");
    mask_[i] = 1;
    members_.push_back(i);
  }
  std::sort(members_.begin(), members_.end());
}

AgentSet AgentSet::full(std::size_t universe) {
  AgentSet s(universe);
  std::fill(s.mask_.begin(), s.mask_.end(), std::uint8_t{1});
  s.members_.resize(universe);
  for (std::size_t i = 0; i < universe; ++i) s.members_[i] = i;
  return s;
}

void AgentSet::insert(AgentIndex i) {
  if (i >= mask_.size()) throw ModelError("agent index " + std::to_string(i) + " outside the agent set universe");
  if (mask_[i] != 0) return;
  mask_[i] = 1;
  members_.insert(std::lower_bound(members_.begin(), members_.end(), i), i);
}

}  // namespace bcsync
