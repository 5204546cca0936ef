#pragma once

// Empirical checks of the synchronization results. Each check returns a
// verdict document with "pass", the theoretical quantities it relied on
// and the empirical margin.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcsync/model.hpp"

namespace bcsync {

/// Raised when the options contradict the hypotheses a check relies on.
class InfeasibleOptions : public ModelError {
 public:
  using ModelError::ModelError;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  double z = 3.0;
  bool strict = false;
  std::size_t threads = 1;

  // im, large-noise
  std::size_t replicas = 100;
  std::size_t horizon = 1000;
  double tail_fraction = 0.25;
  double mu = 1.0;
  /// im only: grow the horizon (doubling, up to horizon_cap) until every
  /// replica has hit d_V <= this threshold before the tail window starts.
  std::optional<double> adaptive_threshold;
  std::size_t horizon_cap = 1'000'000;

  // lemma3, lemma2, as-failure, delta-bar
  double lambda = 1.0;
  std::size_t runs = 1000;
  std::optional<double> a;
  std::size_t lemma2_horizon = 10'000;

  // as-failure
  std::size_t windows = 10'000;

  // large-noise
  double p = 0.5;

  // prob-A
  std::size_t steps = 100'000;

  std::optional<std::vector<double>> initial;
};

const std::vector<std::string>& verify_subcommands();

nlohmann::json verify_im(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_as_failure(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_lemma3(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_lemma2(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_large_noise(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_prob_A(const ModelConfig& config, const VerifyOptions& options);
nlohmann::json verify_delta_bar(const ModelConfig& config, const VerifyOptions& options);

/// Dispatches on one of verify_subcommands().
nlohmann::json verify(std::string_view subcommand, const ModelConfig& config, const VerifyOptions& options);

}  // namespace bcsync
