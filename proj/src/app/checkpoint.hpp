#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hedge/hedge.hpp"
#include "market/payoff.hpp"
#include "sde/model.hpp"

namespace nsde::app {

/// A model, its hedge and both parameter stores. Hedge output j belongs to
/// instruments[j].
struct Session {
  ad::ParamStore theta;
  ad::ParamStore xi;
  std::unique_ptr<sde::NeuralSde> model;
  std::unique_ptr<hedge::HedgeNet> hedge;
  hedge::HedgeConfig hedge_config;
  std::vector<market::OptionSpec> instruments;
  int steps_per_year = 96;
  std::string config_fingerprint;

  /// Hedge output for `spec`, if it was trained for it.
  std::optional<std::size_t> hedge_output(const market::OptionSpec& spec) const;
};

std::unique_ptr<Session> make_session(const sde::ModelConfig& model, const hedge::HedgeConfig& hedge,
                                      std::vector<market::OptionSpec> instruments, int steps_per_year);

/// Key/value text; parameters are written row-major with 17 significant digits.
void save_checkpoint(const std::filesystem::path& path, const Session& s);
std::string checkpoint_text(const Session& s);
std::unique_ptr<Session> load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<Session> parse_checkpoint(const std::string& text);

/// Copies every parameter of `from` into `to`; names and shapes must agree.
void copy_parameters(const Session& from, Session& to);

}  // namespace nsde::app
