#pragma once

// Optimizer settings for external trainers. Nothing here trains; the values
// are exported verbatim for a harness to consume.

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "invoval/error.hpp"

namespace invoval {

enum class TrainingTrack { Layout, Detection };

struct TrainingConfigExport {
  TrainingTrack track = TrainingTrack::Layout;
  int epochs = 0;
  int batch_size = 0;
  std::optional<std::string> optimizer;  // unnamed for the detection track
  std::optional<double> momentum;
  double weight_decay = 0;
  double learning_rate = 0;
};

inline std::optional<TrainingTrack> parse_training_track(std::string_view s) {
  if (s == "layout") return TrainingTrack::Layout;
  if (s == "detection") return TrainingTrack::Detection;
  return std::nullopt;
}

inline TrainingConfigExport training_config(TrainingTrack track) {
  if (track == TrainingTrack::Layout) return {track, 50, 4, "Adam", std::nullopt, 1e-3, 5e-5};
  return {track, 50, 8, std::nullopt, 0.9, 5e-4, 1e-3};
}

/// Unknown track names are usage errors.
inline TrainingConfigExport training_config(std::string_view track) {
  auto t = parse_training_track(track);
  if (!t) throw Error(ErrorKind::Usage, "unknown training track '" + std::string(track) + "' (expected layout or detection)");
  return training_config(*t);
}

inline nlohmann::json to_json(const TrainingConfigExport& c) {
  nlohmann::json j = {{"track", c.track == TrainingTrack::Layout ? "layout" : "detection"},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"optimizer", c.optimizer ? nlohmann::json(*c.optimizer) : nlohmann::json(nullptr)},
                      {"weight_decay", c.weight_decay},
                      {"learning_rate", c.learning_rate}};
  if (c.momentum) j["momentum"] = *c.momentum;
  return j;
}

}  // namespace invoval
