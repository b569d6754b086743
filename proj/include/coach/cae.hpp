#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "coach/gridworld.hpp"
#include "coach/network.hpp"

namespace coach {

enum class Preset : std::uint8_t { full = 0, test = 1 };

Preset parse_preset(const std::string& name);
const char* preset_name(Preset preset) noexcept;

/// Architecture and scale settings for one input resolution.
struct EncoderPreset {
  Preset preset;
  int resolution;
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  std::size_t encoding_size;
  /// Multiplier on the base policy learning rate (1 for the full preset).
  double learning_rate_scale;
};

const EncoderPreset& encoder_preset(Preset preset);
/// Preset whose render resolution matches the network input, or ConfigError.
Preset preset_for_input(const Shape& input_shape);

struct FrameDataset {
  std::vector<Observation> frames;
  TaskId task = TaskId::goal_nav;
  std::uint64_t seed = 0;
};

/// n frames from a uniform-random policy (goal_nav episodes auto-reset).
FrameDataset collect_random_frames(TaskId task, std::size_t n, std::uint64_t seed, int resolution);

/// "COACHDS1", u32 count, u16 H, u16 W, u8 C, then f32 pixels in HWC order per frame.
void save_dataset(std::ostream& out, const FrameDataset& dataset);
FrameDataset load_dataset(std::istream& in);

/// Encoder f and decoder g held as one network; layers [0, encoder_layers) are f.
struct CaeParams {
  NetworkParams autoencoder;
  std::size_t encoder_layers = 0;

  NetworkParams encoder() const;
  NetworkParams decoder() const;
};

CaeParams init_cae(Preset preset, std::uint64_t seed);

struct CaeOutput {
  Tensor encoding;
  Observation reconstruction;
};
CaeOutput cae_forward(const CaeParams& params, const Observation& x);

/// Elementwise mean squared reconstruction error over all frames and pixels.
double reconstruction_loss(const CaeParams& params, const std::vector<Observation>& frames);

struct CaeTrainOptions {
  int max_epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Stop once the relative improvement stays below `min_improvement` for
  /// `patience` consecutive epochs.
  bool early_stop = true;
  double min_improvement = 0.01;
  int patience = 3;
  /// Called after each epoch with (epoch, loss).
  std::function<void(int, double)> on_epoch;
};

struct CaeTrainResult {
  CaeParams params;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // dataset loss after each epoch
};

/// Adam on the reconstruction loss. Throws TrainingError on a non-finite loss.
CaeTrainResult cae_train(const FrameDataset& dataset, const CaeTrainOptions& options);

struct PolicyHeadSpec {
  std::size_t input_size = 100;
  std::size_t hidden_units = 30;
};

/// Policy network: the encoder as a frozen prefix followed by a freshly
/// initialized dense(hidden) → ReLU → dense(3) head.
NetworkParams encoder_freeze(const NetworkParams& encoder, const PolicyHeadSpec& head, std::uint64_t seed);
NetworkParams encoder_freeze(const CaeParams& params, const PolicyHeadSpec& head, std::uint64_t seed);

/// Encoder followed by a single dense(3) layer: the linear baseline policy.
NetworkParams linear_policy(const NetworkParams& encoder, std::uint64_t seed);

}  // namespace coach
