#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace bcsync {

using AgentIndex = std::size_t;

/// Raised when a configuration or an input violates a model constraint.
/// The message names the violated constraint.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Opinions of all agents at one time step. Every value lies in [0,1].
class OpinionState {
 public:
  OpinionState() = default;
  explicit OpinionState(std::vector<double> values, std::uint64_t time = 0);
  OpinionState(std::initializer_list<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t time() const noexcept { return time_; }
  double operator[](AgentIndex i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const OpinionState&) const = default;

 private:
  std::vector<double> values_;
  std::uint64_t time_ = 0;
};

/// A subset of the agents {0..n-1}. Members are kept sorted ascending.
class AgentSet {
 public:
  AgentSet() = default;
  explicit AgentSet(std::size_t universe);
  AgentSet(std::size_t universe, std::initializer_list<AgentIndex> members);
  AgentSet(std::size_t universe, std::span<const AgentIndex> members);

  static AgentSet full(std::size_t universe);

  std::size_t universe() const noexcept { return mask_.size(); }
  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  bool contains(AgentIndex i) const noexcept { return i < mask_.size() && mask_[i] != 0; }
  std::span<const AgentIndex> members() const noexcept { return members_; }

  void insert(AgentIndex i);

  bool operator==(const AgentSet& other) const { return members_ == other.members_ && universe() == other.universe(); }

 private:
  std::vector<std::uint8_t> mask_;
  std::vector<AgentIndex> members_;
};

}  // namespace bcsync
