#include "coach/cae.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "coach/binary_io.hpp"
#include "coach/errors.hpp"
#include "coach/optimizer.hpp"
#include "coach/rng.hpp"

namespace coach {

Preset parse_preset(const std::string& name) {
  if (name == "full") return Preset::full;
  if (name == "test") return Preset::test;
  throw InputError("unknown preset '" + name + "' (expected full or test)");
}

const char* preset_name(Preset preset) noexcept { return preset == Preset::full ? "full" : "test"; }

const EncoderPreset& encoder_preset(Preset preset) {
  static const EncoderPreset full{
      Preset::full,
      84,
      {ConvSpec{32, 8, 4}, Relu{}, ConvSpec{64, 4, 2}, Relu{}, ConvSpec{64, 3, 1}, Relu{}, DenseSpec{256}, Relu{},
       DenseSpec{100}},
      {DenseSpec{256}, Relu{}, DenseSpec{64 * 7 * 7}, Relu{}, ReshapeSpec{{64, 7, 7}}, UpsampleSpec{9, 9},
       ConvSpec{64, 3, 1, 1}, Relu{}, UpsampleSpec{20, 20}, ConvSpec{32, 3, 1, 1}, Relu{}, UpsampleSpec{84, 84},
       ConvSpec{3, 3, 1, 1}, Sigmoid{}},
      100,
      1.0};
  static const EncoderPreset test{
      Preset::test,
      32,
      {ConvSpec{8, 4, 2}, Relu{}, ConvSpec{16, 3, 2}, Relu{}, DenseSpec{64}, Relu{}, DenseSpec{32}},
      {DenseSpec{64}, Relu{}, DenseSpec{16 * 7 * 7}, Relu{}, ReshapeSpec{{16, 7, 7}}, UpsampleSpec{15, 15},
       ConvSpec{8, 3, 1, 1}, Relu{}, UpsampleSpec{32, 32}, ConvSpec{3, 3, 1, 1}, Sigmoid{}},
      32,
      // Picked by sweeping oracle-driven goal_nav runs: success is flat for
      // scales 4-15 and degrades below 3.
      8.0};
  return preset == Preset::full ? full : test;
}

Preset preset_for_input(const Shape& input_shape) {
  for (Preset p : {Preset::full, Preset::test}) {
    const auto r = static_cast<std::size_t>(encoder_preset(p).resolution);
    if (input_shape == Shape{3, r, r}) return p;
  }
  throw ConfigError("no preset accepts input " + shape_string(input_shape));
}

FrameDataset collect_random_frames(TaskId task, std::size_t n, std::uint64_t seed, int resolution) {
  if (n == 0) throw InputError("frame count must be at least 1");
  if (!is_supported_resolution(resolution)) {
    throw ConfigError("unsupported render resolution " + std::to_string(resolution));
  }
  FrameDataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.frames.reserve(n);
  Rng policy(mix_seed(seed, 11));
  WorldState state = reset(task, mix_seed(seed, 12));
  for (std::size_t i = 0; i < n; ++i) {
    ds.frames.push_back(render(state, resolution));
    state = step(state, static_cast<Action>(policy.below(kActionCount))).first;
    if (state.terminal) state = reset_episode(task, mix_seed(seed, 12), state.episode + 1);
  }
  return ds;
}

void save_dataset(std::ostream& out, const FrameDataset& dataset) {
  if (dataset.frames.empty()) throw InputError("cannot save an empty dataset");
  const auto& shape = dataset.frames.front().shape();
  const std::size_t c = shape[0], h = shape[1], w = shape[2];
  io::write_magic(out, "COACHDS1");
  io::write_u32(out, static_cast<std::uint32_t>(dataset.frames.size()));
  io::write_u16(out, static_cast<std::uint16_t>(h));
  io::write_u16(out, static_cast<std::uint16_t>(w));
  io::write_u8(out, static_cast<std::uint8_t>(c));
  for (const auto& f : dataset.frames) {
    if (f.shape() != shape) throw ConfigError("dataset frames differ in shape");
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) io::write_f32(out, static_cast<float>(f[(ch * h + y) * w + x]));
      }
    }
  }
}

FrameDataset load_dataset(std::istream& in) {
  io::expect_magic(in, "COACHDS1", "frame dataset");
  const auto n = io::read_u32(in);
  const std::size_t h = io::read_u16(in), w = io::read_u16(in), c = io::read_u8(in);
  if (n == 0 || h == 0 || w == 0 || c == 0) throw FormatError("frame dataset: empty header");
  FrameDataset ds;
  ds.frames.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Observation f({c, h, w});
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) f[(ch * h + y) * w + x] = io::read_f32(in);
      }
    }
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

NetworkParams CaeParams::encoder() const { return autoencoder.slice(0, encoder_layers); }
NetworkParams CaeParams::decoder() const { return autoencoder.slice(encoder_layers, autoencoder.layer_count()); }

CaeParams init_cae(Preset preset, std::uint64_t seed) {
  const auto& p = encoder_preset(preset);
  std::vector<LayerSpec> specs = p.encoder;
  specs.insert(specs.end(), p.decoder.begin(), p.decoder.end());
  Rng rng(mix_seed(seed, 21));
  const auto r = static_cast<std::size_t>(p.resolution);
  return {build_network({3, r, r}, specs, rng), p.encoder.size()};
}

CaeOutput cae_forward(const CaeParams& params, const Observation& x) {
  const auto trace = forward_trace(params.autoencoder, x);
  return {trace.activations[params.encoder_layers], trace.output()};
}

double reconstruction_loss(const CaeParams& params, const std::vector<Observation>& frames) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& x : frames) {
    const Tensor y = forward(params.autoencoder, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = y[i] - x[i];
      total += d * d;
    }
    count += x.size();
  }
  return total / static_cast<double>(count);
}

CaeTrainResult cae_train(const FrameDataset& dataset, const CaeTrainOptions& options) {
  if (dataset.frames.empty()) throw InputError("dataset is empty");
  if (options.batch_size == 0 || options.batch_size > dataset.frames.size()) {
    throw InputError("batch size must be in [1, dataset size]");
  }
  const Preset preset = preset_for_input(dataset.frames.front().shape());
  CaeTrainResult result;
  result.params = init_cae(preset, options.seed);
  NetworkParams& net = result.params.autoencoder;
  auto opt = make_optimizer({OptimizerKind::adam, options.learning_rate}, net);
  Rng shuffle_rng(mix_seed(options.seed, 22));

  result.initial_loss = reconstruction_loss(result.params, dataset.frames);
  if (!std::isfinite(result.initial_loss)) throw TrainingError("non-finite reconstruction loss", 0);

  std::vector<std::size_t> order(dataset.frames.size());
  std::iota(order.begin(), order.end(), 0);
  double previous = result.initial_loss;
  int stalled = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      Gradient grad = Gradient::zeros_like(net);
      for (std::size_t k = start; k < end; ++k) {
        const Observation& x = dataset.frames[order[k]];
        const auto trace = forward_trace(net, x);
        const Tensor& y = trace.output();
        // Descent on the loss == ascent on its negation.
        const double scale = -2.0 / static_cast<double>(x.size() * (end - start));
        Tensor g(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = scale * (y[i] - x[i]);
        grad.add_scaled(backward(net, trace, g), 1.0);
      }
      apply_optimizer(opt, net, grad);
    }
    const double loss = reconstruction_loss(result.params, dataset.frames);
    if (!std::isfinite(loss)) throw TrainingError("non-finite reconstruction loss", epoch);
    result.epoch_losses.push_back(loss);
    if (options.on_epoch) options.on_epoch(epoch, loss);
    if (options.early_stop) {
      const double improvement = previous > 0.0 ? (previous - loss) / previous : 0.0;
      stalled = improvement < options.min_improvement ? stalled + 1 : 0;
      if (stalled >= options.patience) break;
    }
    previous = loss;
  }
  return result;
}

NetworkParams encoder_freeze(const NetworkParams& encoder, const PolicyHeadSpec& head, std::uint64_t seed) {
  const auto encoding = shape_size(encoder.output_shape());
  if (head.input_size != encoding) {
    throw ConfigError("policy head expects " + std::to_string(head.input_size) + " inputs but the encoder produces " +
                      std::to_string(encoding));
  }
  Rng rng(mix_seed(seed, 31));
  const std::vector<LayerSpec> specs{DenseSpec{head.hidden_units}, Relu{}, DenseSpec{kActionCount}};
  const auto head_net = build_network(encoder.output_shape(), specs, rng);
  return encoder.concat(head_net, encoder.layer_count());
}

NetworkParams encoder_freeze(const CaeParams& params, const PolicyHeadSpec& head, std::uint64_t seed) {
  return encoder_freeze(params.encoder(), head, seed);
}

NetworkParams linear_policy(const NetworkParams& encoder, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 32));
  const std::vector<LayerSpec> specs{DenseSpec{kActionCount}};
  return encoder.concat(build_network(encoder.output_shape(), specs, rng), encoder.layer_count());
}

}  // namespace coach
