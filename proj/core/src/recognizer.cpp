// Copyright 2026 The gpitlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gpit/recognizer.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gpit/adam.hpp"
#include "gpit/metrics.hpp"

namespace gpit {

namespace {

constexpr double kNormEpsilon = 1e-8;
constexpr double kFeatureFloor = 1e-2;

Tensor uniform_parameter(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(values));
}

std::string config_echo(const RecognizerConfig& c) {
  std::ostringstream os;
  os << "seed=" << c.seed << " K=" << c.num_symbols << " W=" << c.window << " hop=" << c.hop
     << " channels=" << c.channels << " hidden=" << c.hidden;
  return os.str();
}

std::size_t meta_size(const Checkpoint& ckpt, const std::string& key) {
  return static_cast<std::size_t>(std::stoull(ckpt.meta(key)));
}

}  // namespace

std::vector<Tensor> RecognizerParams::tensors() const {
  return {frontend_weight, frontend_bias, hidden1_weight, hidden1_bias,
          hidden2_weight,  hidden2_bias,  output_weight,  output_bias};
}

std::vector<NamedTensor> RecognizerParams::named_tensors() const {
  return {{"frontend.weight", frontend_weight}, {"frontend.bias", frontend_bias},
          {"hidden1.weight", hidden1_weight},   {"hidden1.bias", hidden1_bias},
          {"hidden2.weight", hidden2_weight},   {"hidden2.bias", hidden2_bias},
          {"output.weight", output_weight},     {"output.bias", output_bias}};
}

void RecognizerParams::set_trainable(bool trainable) {
  for (auto t : tensors()) t.set_requires_grad(trainable);
}

RecognizerParams init_recognizer(const RecognizerConfig& config) {
  if (config.window == 0 || config.hop == 0 || config.channels == 0 || config.hidden == 0) {
    throw std::invalid_argument("recognizer: dimensions must be positive");
  }
  std::mt19937_64 rng(config.seed);
  RecognizerParams p;
  p.config = config;
  const std::size_t f = config.channels, h = config.hidden, n = config.labels();
  p.frontend_weight = uniform_parameter(rng, {f, 1, config.window}, config.window);
  p.frontend_bias = Tensor::parameter({f}, std::vector<double>(f, 0.0));
  p.hidden1_weight = uniform_parameter(rng, {f, h}, f);
  p.hidden1_bias = Tensor::parameter({h}, std::vector<double>(h, 0.0));
  p.hidden2_weight = uniform_parameter(rng, {h, h}, h);
  p.hidden2_bias = Tensor::parameter({h}, std::vector<double>(h, 0.0));
  p.output_weight = uniform_parameter(rng, {h, n}, h);
  p.output_bias = Tensor::parameter({n}, std::vector<double>(n, 0.0));
  return p;
}

std::size_t frame_count(std::size_t samples, const RecognizerConfig& config) {
  if (samples < config.window) {
    throw std::invalid_argument("recognizer: input of " + std::to_string(samples) +
                                " samples is shorter than one window (" + std::to_string(config.window) + ")");
  }
  return (samples - config.window) / config.hop + 1;
}

Tensor encode(Tape& tape, const RecognizerParams& params, const Tensor& waveform) {
  const auto& c = params.config;
  const std::size_t samples = waveform.size();
  frame_count(samples, c);
  Tensor rms = tape.sqrt(tape.add_scalar(tape.mean(tape.square(waveform)), kNormEpsilon));
  Tensor x = tape.reshape(tape.div(waveform, rms), {1, samples});
  Tensor frames = tape.conv1d(x, params.frontend_weight, params.frontend_bias, c.hop);  // [F, L]
  Tensor features = tape.transpose(tape.log(tape.add_scalar(tape.square(frames), kFeatureFloor)));
  Tensor h1 = tape.tanh(tape.linear(features, params.hidden1_weight, params.hidden1_bias));
  Tensor h2 = tape.tanh(tape.linear(h1, params.hidden2_weight, params.hidden2_bias));
  return tape.linear(h2, params.output_weight, params.output_bias);
}

LogitSequence encode(const RecognizerParams& params, std::span<const double> waveform) {
  Tape tape;
  Tensor input = Tensor::vector(std::vector<double>(waveform.begin(), waveform.end()));
  Tensor logits = encode(tape, params, input);
  LogitSequence out;
  out.frames = logits.dim(0);
  out.labels = logits.dim(1);
  out.values.assign(logits.data().begin(), logits.data().end());
  return out;
}

Tensor ctc_loss(Tape& tape, const Tensor& logits, std::span<const int> target, int blank) {
  if (logits.rank() != 2) throw ShapeError("ctc_loss: logits must be [frames, labels]");
  const std::size_t frames = logits.dim(0), labels = logits.dim(1);
  if (blank < 0 || static_cast<std::size_t>(blank) >= labels) throw std::invalid_argument("ctc_loss: bad blank");
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0 || static_cast<std::size_t>(target[i]) >= labels || target[i] == blank) {
      throw std::invalid_argument("ctc_loss: target symbol " + std::to_string(target[i]) + " out of range");
    }
    if (i > 0 && target[i] == target[i - 1]) ++repeats;
  }
  if (frames < target.size() + repeats) {
    throw std::invalid_argument("ctc_loss: target of length " + std::to_string(target.size()) +
                                " is infeasible in " + std::to_string(frames) + " frames");
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const std::size_t states = 2 * target.size() + 1;
  std::vector<std::size_t> extended(states, static_cast<std::size_t>(blank));
  for (std::size_t i = 0; i < target.size(); ++i) extended[2 * i + 1] = static_cast<std::size_t>(target[i]);

  // Skipping s-2 -> s is allowed only into a non-blank that differs from s-2.
  std::vector<double> skip(states, kNegInf);
  for (std::size_t s = 2; s < states; ++s) {
    if (extended[s] != static_cast<std::size_t>(blank) && extended[s] != extended[s - 2]) skip[s] = 0.0;
  }
  std::vector<double> start(states, kNegInf);
  start[0] = 0.0;
  if (states > 1) start[1] = 0.0;
  const Tensor skip_mask = Tensor::constant({1, states}, std::move(skip));
  const Tensor start_mask = Tensor::constant({1, states}, std::move(start));

  Tensor log_probs = tape.log_softmax(logits);
  Tensor emissions = tape.gather_columns(log_probs, extended);  // [frames, states]
  Tensor alpha = tape.add(tape.slice(emissions, 0, 0, 1), start_mask);
  for (std::size_t t = 1; t < frames; ++t) {
    Tensor stay_or_advance = tape.logaddexp(alpha, tape.shift_right(alpha, 1, kNegInf));
    Tensor skipped = tape.add(tape.shift_right(alpha, 2, kNegInf), skip_mask);
    alpha = tape.add(tape.logaddexp(stay_or_advance, skipped), tape.slice(emissions, 0, t, t + 1));
  }
  Tensor log_likelihood =
      states == 1 ? tape.slice(alpha, 1, 0, 1)
                  : tape.logaddexp(tape.slice(alpha, 1, states - 1, states), tape.slice(alpha, 1, states - 2, states - 1));
  return tape.reshape(tape.scale(log_likelihood, -1.0), {1});
}

Transcript greedy_decode(const LogitSequence& logits, int blank) {
  Transcript out;
  int previous = -1;
  for (std::size_t t = 0; t < logits.frames; ++t) {
    int best = 0;
    for (std::size_t n = 1; n < logits.labels; ++n) {
      if (logits.at(t, n) > logits.at(t, static_cast<std::size_t>(best))) best = static_cast<int>(n);
    }
    if (best != previous && best != blank) out.push_back(best);
    previous = best;
  }
  return out;
}

Transcript recognize(const RecognizerParams& params, std::span<const double> waveform) {
  return greedy_decode(encode(params, waveform), params.config.blank());
}

Checkpoint recognizer_checkpoint(const RecognizerParams& params, std::map<std::string, std::string> metadata) {
  Checkpoint ckpt;
  for (auto& [name, t] : params.named_tensors()) ckpt.tensors.push_back({name, t.detach()});
  ckpt.metadata = std::move(metadata);
  const auto& c = params.config;
  ckpt.metadata["kind"] = "recognizer";
  ckpt.metadata["K"] = std::to_string(c.num_symbols);
  ckpt.metadata["N"] = std::to_string(c.labels());
  ckpt.metadata["W"] = std::to_string(c.window);
  ckpt.metadata["hop"] = std::to_string(c.hop);
  ckpt.metadata["channels"] = std::to_string(c.channels);
  ckpt.metadata["hidden"] = std::to_string(c.hidden);
  ckpt.metadata["seed"] = std::to_string(c.seed);
  return ckpt;
}

RecognizerParams recognizer_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta("kind") != "recognizer") throw CheckpointError("checkpoint is not a recognizer");
  RecognizerConfig c;
  c.num_symbols = meta_size(ckpt, "K");
  c.window = meta_size(ckpt, "W");
  c.hop = meta_size(ckpt, "hop");
  c.channels = meta_size(ckpt, "channels");
  c.hidden = meta_size(ckpt, "hidden");
  c.seed = std::stoull(ckpt.meta("seed"));
  RecognizerParams p = init_recognizer(c);
  for (auto& [name, t] : p.named_tensors()) {
    const Tensor& stored = ckpt.get(name);
    if (stored.shape() != t.shape()) throw CheckpointError("checkpoint: shape mismatch for " + name);
    auto dst = t.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
  p.set_trainable(false);
  return p;
}

double clean_wer(const RecognizerParams& params, const VoicePool& voices, const DatasetSpec& spec) {
  std::size_t errors = 0, words = 0;
  for (std::size_t i = 0; i < spec.items; ++i) {
    auto item = make_clean_utterance(spec, voices, i);
    auto hyp = recognize(params, item.waveform);
    errors += word_edit_distance(item.symbols, hyp).errors;
    words += item.symbols.size();
  }
  if (words == 0) throw std::invalid_argument("clean_wer: empty evaluation set");
  return static_cast<double>(errors) / static_cast<double>(words);
}

namespace {

constexpr std::uint64_t kAugmentStream = 0x617567;  // "aug"

void add_training_noise(Waveform& waveform, const RecognizerTrainOptions& options, std::size_t index,
                        std::size_t epoch) {
  std::mt19937_64 rng(item_seed(options.train_spec, index, epoch, kAugmentStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= options.augment_probability) return;
  std::uniform_real_distribution<double> snr(options.augment_min_snr_db, options.augment_max_snr_db);
  const double noise_power = signal_power(waveform) / std::pow(10.0, snr(rng) / 10.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_power));
  for (double& v : waveform) v += noise(rng);
}

}  // namespace

RecognizerTrainResult train_recognizer(const RecognizerConfig& config, const VoicePool& voices,
                                       const RecognizerTrainOptions& options, const ProgressFn& progress) {
  RecognizerTrainResult result;
  result.params = init_recognizer(config);
  result.params.set_trainable(true);
  Adam adam(result.params.tensors(), AdamOptions{.learning_rate = options.learning_rate});
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t in_batch = 0;
    adam.zero_grad();
    for (std::size_t i = 0; i < options.train_spec.items; ++i) {
      auto item = make_clean_utterance(options.train_spec, voices, i, epoch);
      if (options.augment_probability > 0.0) add_training_noise(item.waveform, options, i, epoch);
      Tape tape;
      Tensor logits = encode(tape, result.params, Tensor::vector(item.waveform));
      Tensor loss = ctc_loss(tape, logits, item.symbols, config.blank());
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("train_recognizer: non-finite loss at epoch " + std::to_string(epoch) +
                                 " item " + std::to_string(i) + " (" + config_echo(config) + ")");
      }
      epoch_loss += value;
      tape.backward(tape.scale(loss, 1.0 / static_cast<double>(batch)));
      if (++in_batch == batch || i + 1 == options.train_spec.items) {
        adam.step();
        adam.zero_grad();
        in_batch = 0;
      }
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(options.train_spec.items, 1));
    result.epoch_losses.push_back(epoch_loss);
    if (progress) {
      std::ostringstream os;
      os << "recognizer seed " << config.seed << " epoch " << epoch + 1 << "/" << options.epochs
         << " ctc " << epoch_loss;
      progress(os.str());
    }
  }
  result.params.set_trainable(false);
  result.clean_wer = clean_wer(result.params, voices, options.test_spec);
  return result;
}

}  // namespace gpit
