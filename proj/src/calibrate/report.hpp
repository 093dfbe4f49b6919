#pragma once

#include <filesystem>

#include "calibrate/trainer.hpp"

namespace nsde::calibrate {

/// `epoch,mse,exotic_price` per epoch.
void write_epochs(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs);
std::vector<EpochRecord> read_epochs(const std::filesystem::path& path);

/// JSON summary: final prices with standard errors and implied vols, exotic
/// price, bound direction and the multiplier trajectory. Epochs are not
/// included (see write_epochs).
void write_summary(const std::filesystem::path& path, const CalibReport& report);
CalibReport read_summary(const std::filesystem::path& path);

std::string summary_json(const CalibReport& report);
CalibReport parse_summary(const std::string& text);

}  // namespace nsde::calibrate
