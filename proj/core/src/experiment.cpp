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

#include "gpit/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gpit/adam.hpp"
#include "gpit/metrics.hpp"

namespace gpit {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kValidSeedOffset = 1000003;
constexpr std::uint64_t kTestSeedOffset = 2000003;
constexpr std::uint64_t kRecognizerSeedOffset = 3000017;

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::string tag(double value) { return format_real(value); }

std::vector<Tensor> to_tensors(const std::vector<Waveform>& signals) {
  std::vector<Tensor> out;
  for (const auto& s : signals) out.push_back(Tensor::vector(s));
  return out;
}

// Mean SI-SDR over speakers at the SI-SDR-optimal pairing.
double best_sisdr(const std::vector<Waveform>& refs, const std::vector<Waveform>& ests,
                  std::vector<std::size_t>* permutation = nullptr) {
  const std::size_t c = refs.size();
  std::vector<double> matrix(c * c);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t e = 0; e < c; ++e) matrix[r * c + e] = -sisdr(refs[r], ests[e]);
  }
  auto solved = solve_permutation(matrix, c, 1.0 / static_cast<double>(c));
  if (permutation) *permutation = solved.permutation;
  return -solved.total;
}

double percent(const EditCounts& counts, std::size_t words) {
  return 100.0 * static_cast<double>(counts.errors) / static_cast<double>(words);
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw std::invalid_argument("csv: row width differs from header");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  for (const auto& c : comments_) out += "# " + c + "\n";
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quote(fields[i]);
    }
    out += "\r\n";
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvTable::write(const fs::path& path) const {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          fields.back() += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.emplace_back();
      } else {
        fields.back() += c;
      }
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Arms and tables

std::string Arm::name() const {
  switch (kind) {
    case Kind::kSisdr: return "sisdr";
    case Kind::kAe: return "ae";
    case Kind::kJoint: return "joint_a" + tag(alpha);
  }
  return "unknown";
}

Arm parse_arm(std::string_view text, double default_alpha) {
  if (text == "sisdr") return {Arm::Kind::kSisdr, 1.0};
  if (text == "ae") return {Arm::Kind::kAe, 0.0};
  double alpha = default_alpha;
  if (text.rfind("joint:", 0) == 0) {
    std::string value(text.substr(6));
    std::size_t used = 0;
    alpha = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("bad arm alpha '" + value + "'");
  } else if (text != "joint") {
    throw std::invalid_argument("arm must be sisdr, ae, joint or joint:<alpha>, got '" + std::string(text) + "'");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("arm alpha must lie in [0, 1]");
  return {Arm::Kind::kJoint, alpha};
}

const MetricsRow& MetricsTable::row(std::string_view system) const {
  for (const auto& r : rows) {
    if (r.system == system) return r;
  }
  throw std::out_of_range("metrics table has no row '" + std::string(system) + "'");
}

double MetricsTable::delta_cp(std::string_view system) const {
  return row("mixture").cp_wer - row(system).cp_wer;
}

double MetricsTable::delta_orc(std::string_view system) const {
  return row("mixture").orc_wer - row(system).orc_wer;
}

CsvTable MetricsTable::to_csv() const {
  CsvTable t({"system", "cp_wer", "delta_cp_wer", "orc_wer", "delta_orc_wer", "sisdr_db"});
  for (const auto& r : rows) {
    t.add_row({r.system, format_real(r.cp_wer), format_real(delta_cp(r.system)), format_real(r.orc_wer),
               format_real(delta_orc(r.system)), opt_real(r.sisdr_db)});
  }
  return t;
}

MetricsTable median_table(const std::vector<MetricsTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("median_table: no tables");
  MetricsTable out;
  for (const auto& proto : tables.front().rows) {
    MetricsRow r;
    r.system = proto.system;
    std::vector<double> cp, orc, sdr;
    for (const auto& t : tables) {
      const auto& x = t.row(proto.system);
      cp.push_back(x.cp_wer);
      orc.push_back(x.orc_wer);
      if (x.sisdr_db) sdr.push_back(*x.sisdr_db);
    }
    r.cp_wer = median(cp);
    r.orc_wer = median(orc);
    if (!sdr.empty()) r.sisdr_db = median(sdr);
    out.rows.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

VoiceConfig voice_config(const ExperimentConfig& c) {
  VoiceConfig v;
  v.sample_rate = c.sample_rate;
  v.symbol_samples = c.symbol_samples;
  v.num_symbols = c.num_symbols;
  return v;
}

DatasetSpec base_spec(const ExperimentConfig& c) {
  DatasetSpec s;
  s.min_symbols = c.min_symbols;
  s.max_symbols = c.max_symbols;
  s.min_mixing_snr_db = c.min_mixing_snr_db;
  s.max_mixing_snr_db = c.max_mixing_snr_db;
  s.min_noise_snr_db = c.min_noise_snr_db;
  s.max_noise_snr_db = c.max_noise_snr_db;
  s.rir.reflections = c.rir_reflections;
  s.rir.sample_rate = c.sample_rate;
  return s;
}

// Test items are labelled; they are only ever requested by evaluation.
struct TestItem {
  LabeledMixture mixture;
  std::vector<Tokens> ref_tokens;
  std::vector<RefUtterance> ref_utterances;
};

TestItem make_test_item(const DatasetSpec& spec, const VoicePool& voices, std::size_t index) {
  TestItem t;
  t.mixture = make_labeled_mixture(spec, voices, index);
  t.ref_tokens = t.mixture.transcripts;
  const auto& onsets = t.mixture.example.onsets;
  std::vector<std::size_t> order(onsets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return onsets[a] < onsets[b]; });
  t.ref_utterances.resize(onsets.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t c = order[rank];
    t.ref_utterances[c] = {static_cast<int>(c), rank, t.ref_tokens[c]};
  }
  return t;
}

struct RowAccumulator {
  EditCounts cp, orc;
  std::size_t words = 0;
  double sisdr_sum = 0.0;
  std::size_t items = 0;

  void add(const TestItem& item, const std::vector<Tokens>& hyps, std::optional<double> sdr) {
    auto c = cp_wer_counts(item.ref_tokens, hyps);
    auto o = orc_wer_counts(item.ref_utterances, hyps);
    cp += c.counts;
    orc += o.counts;
    words += c.words;
    if (sdr) sisdr_sum += *sdr;
    ++items;
  }

  MetricsRow row(std::string name, bool with_sisdr) const {
    MetricsRow r;
    r.system = std::move(name);
    r.cp_wer = percent(cp, words);
    r.orc_wer = percent(orc, words);
    if (with_sisdr) r.sisdr_db = sisdr_sum / static_cast<double>(items);
    return r;
  }
};

}  // namespace

Experiment::Experiment(ExperimentConfig config, ProgressFn progress)
    : config_(std::move(config)),
      progress_(std::move(progress)),
      voices_(voice_config(config_)),
      root_(config_.output_dir),
      hash_(config_hash(config_)) {
  validate(config_);
}

void Experiment::log(const std::string& message) const {
  if (progress_) progress_(message);
}

DatasetSpec Experiment::train_spec(std::size_t seed_index, std::optional<double> tsl_seconds) const {
  DatasetSpec s = base_spec(config_);
  s.split = Split::kTrain;
  s.items = config_.train_items;
  s.master_seed = run_seed(seed_index);
  if (tsl_seconds && *tsl_seconds > 0) s.tsl_seconds = *tsl_seconds;
  return s;
}

DatasetSpec Experiment::valid_spec() const {
  DatasetSpec s = base_spec(config_);
  s.split = Split::kValid;
  s.items = config_.valid_items;
  s.master_seed = config_.seed + kValidSeedOffset;
  return s;
}

DatasetSpec Experiment::test_spec() const {
  DatasetSpec s = base_spec(config_);
  s.split = Split::kTest;
  s.items = config_.test_items;
  s.master_seed = config_.seed + kTestSeedOffset;
  return s;
}

DatasetSpec Experiment::recognizer_train_spec() const {
  DatasetSpec s = base_spec(config_);
  s.split = Split::kTrain;
  s.items = config_.rec_train_items;
  s.master_seed = config_.seed + kRecognizerSeedOffset;
  return s;
}

DatasetSpec Experiment::recognizer_test_spec() const {
  DatasetSpec s = recognizer_train_spec();
  s.split = Split::kTest;
  s.items = config_.rec_test_items;
  return s;
}

SeparatorConfig Experiment::separator_config() const {
  SeparatorConfig s;
  s.speakers = 2;
  s.kernel = config_.sep_kernel;
  s.stride = config_.sep_stride;
  s.channels = config_.sep_channels;
  s.hidden = config_.sep_hidden;
  s.mask_layers = config_.sep_layers;
  return s;
}

RecognizerConfig Experiment::recognizer_config(char which) const {
  RecognizerConfig r;
  r.num_symbols = config_.num_symbols;
  r.window = config_.rec_window;
  r.hop = config_.rec_hop;
  r.channels = config_.rec_channels;
  if (which == 'A') {
    r.hidden = config_.rec_hidden_a;
    r.seed = config_.rec_seed_a;
  } else if (which == 'B') {
    r.hidden = config_.rec_hidden_b;
    r.seed = config_.rec_seed_b;
  } else {
    throw std::invalid_argument(std::string("recognizer must be A or B, got '") + which + "'");
  }
  return r;
}

fs::path Experiment::seed_dir(std::size_t seed_index) const { return root_ / ("seed" + std::to_string(seed_index)); }

fs::path Experiment::recognizer_path(char which) const {
  return root_ / "recognizers" / (which == 'A' ? "rec_a.ckpt" : "rec_b.ckpt");
}

fs::path Experiment::pretrain_path(std::size_t seed_index) const { return seed_dir(seed_index) / "pretrain.ckpt"; }

fs::path Experiment::arm_dir(std::size_t seed_index, const std::string& directory) const {
  return seed_dir(seed_index) / directory;
}

fs::path Experiment::ate_path(std::size_t seed_index, const std::string& directory, std::size_t ate) const {
  char name[32];
  std::snprintf(name, sizeof name, "ate%02zu.ckpt", ate);
  return arm_dir(seed_index, directory) / name;
}

void Experiment::stamp(CsvTable& table, std::optional<std::size_t> seed_index) const {
  std::string head = "gpitlab config_hash=" + hash_;
  head += " seed=" + (seed_index ? std::to_string(run_seed(*seed_index)) : std::to_string(config_.seed));
  table.add_comment(head);
  std::istringstream lines(to_text(config_));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("output_dir", 0) == 0) continue;
    table.add_comment(line);
  }
}

std::map<std::string, std::string> Experiment::checkpoint_metadata(std::optional<std::size_t> seed_index) const {
  ExperimentConfig echo = config_;
  echo.output_dir.clear();
  std::map<std::string, std::string> meta;
  meta["config_hash"] = hash_;
  meta["config"] = to_text(echo);
  if (seed_index) meta["run_seed"] = std::to_string(run_seed(*seed_index));
  return meta;
}

Checkpoint Experiment::load_artifact(const fs::path& path, std::string_view hint) const {
  if (!fs::exists(path)) {
    throw std::runtime_error("missing artifact " + path.string() + "; run `gpitlab " + std::string(hint) + "` first");
  }
  Checkpoint ckpt = load_checkpoint(path);
  auto it = ckpt.metadata.find("config_hash");
  if (it != ckpt.metadata.end() && it->second != hash_) {
    log("warning: " + path.string() + " was produced by config " + it->second + ", current config is " + hash_);
  }
  return ckpt;
}

GenDataResult Experiment::gen_data(std::size_t wav_items) {
  GenDataResult result;
  const fs::path dir = root_ / "manifests";
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, DatasetSpec>> splits = {
      {"train", train_spec(0, config_.train_tsl)}, {"valid", valid_spec()}, {"test", test_spec()}};
  for (const auto& [name, spec] : splits) {
    // Item 0 fingerprint lets a reader confirm regeneration is bit-exact.
    MixtureExample first = make_mixture(spec, voices_, 0, 0);
    std::string bytes(reinterpret_cast<const char*>(first.mixture.data()), first.mixture.size() * sizeof(double));
    std::ostringstream m;
    m << "config_hash = " << hash_ << "\n"
      << "split = " << name << "\n"
      << "items = " << spec.items << "\n"
      << "master_seed = " << spec.master_seed << "\n"
      << "speakers = " << spec.speakers << "\n"
      << "tsl_seconds = " << (spec.tsl_seconds ? format_real(*spec.tsl_seconds) : std::string("none")) << "\n"
      << "regenerated_per_epoch = " << (spec.split == Split::kTrain ? "yes" : "no") << "\n"
      << "item0_epoch0_fnv = " << hex64(fnv1a64(bytes)) << "\n";
    const fs::path path = dir / (name + ".manifest");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << m.str();
    result.manifests.push_back(path);
    result.manifest_hashes.push_back(hex64(fnv1a64(m.str())));
  }
  if (wav_items > 0) {
    const fs::path wav = root_ / "wav";
    fs::create_directories(wav);
    const DatasetSpec spec = test_spec();
    for (std::size_t i = 0; i < std::min(wav_items, spec.items); ++i) {
      MixtureExample ex = make_mixture(spec, voices_, i);
      const std::string stem = "test" + std::to_string(i);
      write_wav(wav / (stem + "_mixture.wav"), ex.mixture, ex.sample_rate);
      for (std::size_t c = 0; c < ex.refs.size(); ++c) {
        write_wav(wav / (stem + "_ref" + std::to_string(c) + ".wav"), ex.refs[c], ex.sample_rate);
      }
    }
  }
  return result;
}

RecognizerSet Experiment::train_recognizers() {
  RecognizerSet set;
  RecognizerTrainOptions options;
  options.train_spec = recognizer_train_spec();
  options.test_spec = recognizer_test_spec();
  options.epochs = config_.rec_epochs;
  options.batch_size = config_.rec_batch;
  options.learning_rate = config_.rec_lr;
  options.augment_probability = config_.rec_aug_prob;
  options.augment_min_snr_db = config_.rec_aug_snr_min;
  options.augment_max_snr_db = config_.rec_aug_snr_max;

  CsvTable table({"recognizer", "seed", "hidden", "clean_wer", "param_hash"});
  stamp(table, std::nullopt);
  for (char which : {'A', 'B'}) {
    auto trained = train_recognizer(recognizer_config(which), voices_, options, progress_);
    auto meta = checkpoint_metadata(std::nullopt);
    meta["recognizer"] = std::string(1, which);
    meta["clean_wer"] = format_real(trained.clean_wer);
    Checkpoint ckpt = recognizer_checkpoint(trained.params, meta);
    fs::create_directories(recognizer_path(which).parent_path());
    save_checkpoint(recognizer_path(which), ckpt);
    const auto named = trained.params.named_tensors();
    table.add_row({std::string(1, which), std::to_string(trained.params.config.seed),
                   std::to_string(trained.params.config.hidden), format_real(trained.clean_wer),
                   hex64(parameter_hash(named))});
    log(std::string("recognizer ") + which + " clean WER " + format_real(trained.clean_wer));
    if (which == 'A') {
      set.a = trained.params;
      set.clean_wer_a = trained.clean_wer;
    } else {
      set.b = trained.params;
      set.clean_wer_b = trained.clean_wer;
    }
  }
  table.write(root_ / "recognizers" / "recognizers.csv");
  return set;
}

bool Experiment::has_recognizers() const {
  return fs::exists(recognizer_path('A')) && fs::exists(recognizer_path('B'));
}

RecognizerParams Experiment::load_recognizer(char which) const {
  recognizer_config(which);
  return recognizer_from_checkpoint(load_artifact(recognizer_path(which), "train-recognizers"));
}

SeparatorParams Experiment::load_separator(const fs::path& path) const {
  return separator_from_checkpoint(load_artifact(path, "pretrain"));
}

namespace {

using LossFn = std::function<Tensor(Tape&, const std::vector<Tensor>& refs, const std::vector<Tensor>& ests)>;

// One pass over `items` dynamically mixed items; returns per-batch mean losses.
std::vector<double> run_epoch(SeparatorParams& params, Adam& adam, const VoicePool& voices, const DatasetSpec& spec,
                              std::size_t epoch, std::size_t batch, const LossFn& loss_fn,
                              const std::string& context) {
  std::vector<double> batch_losses;
  for (std::size_t start = 0; start < spec.items; start += batch) {
    const std::size_t n = std::min(batch, spec.items - start);
    adam.zero_grad();
    double total = 0.0;
    for (std::size_t i = start; i < start + n; ++i) {
      MixtureExample ex = make_mixture(spec, voices, i, epoch);
      std::vector<Tensor> refs = to_tensors(ex.refs);
      Tape tape;
      std::vector<Tensor> ests = separate(tape, params, ex.mixture);
      Tensor loss = loss_fn(tape, refs, ests);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                 " item " + std::to_string(i) + "; " + context);
      }
      total += value;
      tape.backward(n == 1 ? loss : tape.scale(loss, 1.0 / static_cast<double>(n)));
    }
    adam.step();
    batch_losses.push_back(total / static_cast<double>(n));
  }
  return batch_losses;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

PretrainResult Experiment::pretrain(std::size_t seed_index) {
  PretrainResult result;
  result.params = init_separator(run_seed(seed_index), separator_config());
  Adam adam(result.params.tensors(), AdamOptions{.learning_rate = config_.lr_pretrain});
  const DatasetSpec spec = train_spec(seed_index, config_.train_tsl);
  const DatasetSpec valid = valid_spec();
  const std::string context = "seed " + std::to_string(run_seed(seed_index)) + ", config " + hash_;

  // Validation mixtures and their unprocessed SI-SDR are fixed.
  std::vector<MixtureExample> valid_items;
  double mixture_sisdr = 0.0;
  for (std::size_t i = 0; i < valid.items; ++i) {
    valid_items.push_back(make_mixture(valid, voices_, i));
    const auto& ex = valid_items.back();
    mixture_sisdr += best_sisdr(ex.refs, std::vector<Waveform>(ex.refs.size(), ex.mixture));
  }
  mixture_sisdr /= static_cast<double>(valid.items);

  CsvTable table({"epoch", "learning_rate", "train_loss", "valid_sisdr", "valid_sisdri"});
  stamp(table, seed_index);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const LossFn loss_fn = [](Tape& tape, const std::vector<Tensor>& refs, const std::vector<Tensor>& ests) {
    return pit_loss(tape, ests, sisdr_criterion(refs));
  };
  for (std::size_t epoch = 0; epoch < config_.pretrain_epochs; ++epoch) {
    PretrainEpoch e;
    e.epoch = epoch + 1;
    e.learning_rate = adam.learning_rate();
    e.train_loss = mean(run_epoch(result.params, adam, voices_, spec, epoch, config_.batch_size, loss_fn, context));
    double sdr = 0.0;
    for (const auto& ex : valid_items) sdr += best_sisdr(ex.refs, separate(result.params, ex.mixture).estimates);
    e.valid_sisdr = sdr / static_cast<double>(valid_items.size());
    e.valid_sisdri = e.valid_sisdr - mixture_sisdr;
    table.add_row({std::to_string(e.epoch), format_real(e.learning_rate), format_real(e.train_loss),
                   format_real(e.valid_sisdr), format_real(e.valid_sisdri)});
    log("pretrain seed " + std::to_string(seed_index) + " epoch " + std::to_string(e.epoch) + " loss " +
        format_real(e.train_loss) + " valid SI-SDRi " + format_real(e.valid_sisdri));
    result.epochs.push_back(e);

    // Halve the learning rate after `plateau_patience` epochs without a new best.
    if (e.valid_sisdr > best) {
      best = e.valid_sisdr;
      since_best = 0;
    } else if (++since_best >= config_.plateau_patience && e.epoch > config_.plateau_warmup) {
      adam.set_learning_rate(adam.learning_rate() / 2);
      since_best = 0;
    }
  }
  auto meta = checkpoint_metadata(seed_index);
  meta["stage"] = "pretrain";
  meta["epochs"] = std::to_string(config_.pretrain_epochs);
  fs::create_directories(seed_dir(seed_index));
  save_checkpoint(pretrain_path(seed_index), separator_checkpoint(result.params, meta));
  table.write(seed_dir(seed_index) / "pretrain.csv");
  return result;
}

FinetuneResult Experiment::finetune(std::size_t seed_index, const Arm& arm, const FinetuneOptions& options) {
  FinetuneResult result;
  result.params = load_separator(pretrain_path(seed_index));
  const RecognizerParams recognizer = load_recognizer('A');
  const std::string directory = options.directory.empty() ? arm.name() : options.directory;
  const std::size_t ates = options.ates.value_or(config_.ates);
  const double tsl = options.tsl_seconds.value_or(config_.train_tsl);
  DatasetSpec spec = train_spec(seed_index, tsl);
  spec.items = config_.finetune_items;
  const AeInput ae_input = parse_ae_input(config_.ae_on);
  const std::string context = "seed " + std::to_string(run_seed(seed_index)) + ", arm " + arm.name() + ", config " +
                              hash_;

  LossFn loss_fn;
  switch (arm.kind) {
    case Arm::Kind::kSisdr:
      loss_fn = [](Tape& tape, const std::vector<Tensor>& refs, const std::vector<Tensor>& ests) {
        return pit_loss(tape, ests, sisdr_criterion(refs));
      };
      break;
    case Arm::Kind::kAe:
      loss_fn = [&recognizer, ae_input](Tape& tape, const std::vector<Tensor>& refs,
                                        const std::vector<Tensor>& ests) {
        return gpit_loss(tape, ests, sisdr_criterion(refs), ae_criterion(refs, recognizer, ae_input));
      };
      break;
    case Arm::Kind::kJoint:
      loss_fn = [&recognizer, ae_input, alpha = arm.alpha](Tape& tape, const std::vector<Tensor>& refs,
                                                           const std::vector<Tensor>& ests) {
        return joint_loss(tape, refs, ests, recognizer, JointLossConfig{alpha, ae_input});
      };
      break;
  }

  Adam adam(result.params.tensors(), AdamOptions{.learning_rate = config_.lr_finetune});
  const auto recognizer_hash = [&recognizer] {
    const auto named = recognizer.named_tensors();
    return hex64(parameter_hash(named));
  };
  result.recognizer_hashes.push_back(recognizer_hash());

  CsvTable steps({"ate", "step", "loss"});
  CsvTable summary({"ate", "mean_loss", "recognizer_a_hash", "transcript_inputs"});
  CsvTable timing({"ate", "seconds"});
  stamp(steps, seed_index);
  stamp(summary, seed_index);
  stamp(timing, seed_index);
  fs::create_directories(arm_dir(seed_index, directory));
  const std::uint64_t transcripts_before = transcript_requests();

  for (std::size_t ate = 1; ate <= ates; ++ate) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t before = transcript_requests();
    // Fine-tuning continues the dynamic-mixing stream after pretraining.
    auto losses = run_epoch(result.params, adam, voices_, spec, config_.pretrain_epochs + ate - 1,
                            config_.batch_size, loss_fn, context);
    const std::uint64_t used = transcript_requests() - before;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::string hash_after = recognizer_hash();
    if (hash_after != result.recognizer_hashes.front()) {
      throw std::logic_error("recognizer A parameters changed during fine-tuning (" + context + ")");
    }
    result.recognizer_hashes.push_back(hash_after);
    for (std::size_t s = 0; s < losses.size(); ++s) {
      steps.add_row({std::to_string(ate), std::to_string(s + 1), format_real(losses[s])});
      result.step_losses.push_back(losses[s]);
    }
    result.ate_losses.push_back(mean(losses));
    result.ate_seconds.push_back(seconds);
    summary.add_row({std::to_string(ate), format_real(result.ate_losses.back()), hash_after, std::to_string(used)});
    timing.add_row({std::to_string(ate), format_real(seconds)});

    auto meta = checkpoint_metadata(seed_index);
    meta["stage"] = "finetune";
    meta["arm"] = arm.name();
    meta["ate"] = std::to_string(ate);
    meta["tsl_seconds"] = format_real(tsl);
    const fs::path path = ate_path(seed_index, directory, ate);
    save_checkpoint(path, separator_checkpoint(result.params, meta));
    result.checkpoints.push_back(path);
    log("finetune seed " + std::to_string(seed_index) + " " + directory + " ATE " + std::to_string(ate) + " loss " +
        format_real(result.ate_losses.back()));
  }
  result.transcript_inputs = transcript_requests() - transcripts_before;
  steps.write(arm_dir(seed_index, directory) / "trace.csv");
  summary.write(arm_dir(seed_index, directory) / "ates.csv");
  // Wall clock varies between runs; kept apart from the deterministic outputs.
  timing.write(arm_dir(seed_index, directory) / "timing.csv");
  return result;
}

MetricsRow Experiment::evaluate_separator(const SeparatorParams& params, const RecognizerParams& recognizer,
                                          const std::string& name) {
  const DatasetSpec spec = test_spec();
  RowAccumulator acc;
  for (std::size_t i = 0; i < spec.items; ++i) {
    TestItem item = make_test_item(spec, voices_, i);
    auto ests = separate(params, item.mixture.example.mixture).estimates;
    std::vector<Tokens> hyps;
    for (const auto& e : ests) hyps.push_back(recognize(recognizer, e));
    acc.add(item, hyps, best_sisdr(item.mixture.example.refs, ests));
  }
  return acc.row(name, true);
}

MetricsTable Experiment::evaluate(std::size_t seed_index, char which) {
  const RecognizerParams recognizer = load_recognizer(which);
  struct System {
    std::string name;
    SeparatorParams params;
  };
  std::vector<System> systems;
  systems.push_back({"baseline", load_separator(pretrain_path(seed_index))});
  systems.push_back({"sisdr_ates", load_separator(ate_path(seed_index, "sisdr", config_.ates))});
  systems.push_back({"ae_ates", load_separator(ate_path(seed_index, "ae", config_.ates))});

  const DatasetSpec spec = test_spec();
  RowAccumulator oracle, mixture;
  std::vector<RowAccumulator> rows(systems.size());
  for (std::size_t i = 0; i < spec.items; ++i) {
    TestItem item = make_test_item(spec, voices_, i);
    const auto& ex = item.mixture.example;
    std::vector<Tokens> oracle_hyps;
    for (const auto& r : ex.refs) oracle_hyps.push_back(recognize(recognizer, r));
    oracle.add(item, oracle_hyps, std::nullopt);
    // The raw mixture is decoded once and duplicated to every channel.
    const Tokens mixed = recognize(recognizer, ex.mixture);
    mixture.add(item, std::vector<Tokens>(ex.refs.size(), mixed),
                best_sisdr(ex.refs, std::vector<Waveform>(ex.refs.size(), ex.mixture)));
    for (std::size_t s = 0; s < systems.size(); ++s) {
      auto ests = separate(systems[s].params, ex.mixture).estimates;
      std::vector<Tokens> hyps;
      for (const auto& e : ests) hyps.push_back(recognize(recognizer, e));
      rows[s].add(item, hyps, best_sisdr(ex.refs, ests));
    }
  }
  MetricsTable table;
  table.rows.push_back(oracle.row("oracle", false));
  table.rows.push_back(mixture.row("mixture", true));
  for (std::size_t s = 0; s < systems.size(); ++s) table.rows.push_back(rows[s].row(systems[s].name, true));

  CsvTable csv = table.to_csv();
  stamp(csv, seed_index);
  csv.add_comment(std::string("recognizer=") + which);
  csv.write(seed_dir(seed_index) / (std::string("eval_") + static_cast<char>(std::tolower(which)) + ".csv"));
  return table;
}

void Experiment::ensure_seed(std::size_t seed_index) {
  if (!has_recognizers()) train_recognizers();
  if (!fs::exists(pretrain_path(seed_index))) pretrain(seed_index);
  for (const Arm& arm : {Arm{Arm::Kind::kSisdr, 1.0}, Arm{Arm::Kind::kAe, 0.0}}) {
    if (!fs::exists(ate_path(seed_index, arm.name(), config_.ates))) finetune(seed_index, arm);
  }
}

MetricsTable Experiment::evaluate_all(char which, std::vector<MetricsTable>* per_seed) {
  std::vector<MetricsTable> tables;
  for (std::size_t s = 0; s < config_.num_seeds; ++s) tables.push_back(evaluate(s, which));
  MetricsTable med = median_table(tables);
  CsvTable csv = med.to_csv();
  stamp(csv, std::nullopt);
  csv.add_comment(std::string("recognizer=") + which + " median over " + std::to_string(tables.size()) + " seeds");
  csv.write(root_ / (std::string("eval_") + static_cast<char>(std::tolower(which)) + "_median.csv"));
  if (per_seed) *per_seed = std::move(tables);
  return med;
}

std::vector<AlphaPoint> Experiment::sweep_alpha() {
  const RecognizerParams recognizer = load_recognizer('A');
  std::vector<AlphaPoint> points;
  CsvTable csv({"seed_index", "alpha", "cp_wer", "orc_wer", "sisdr_db"});
  stamp(csv, std::nullopt);
  for (std::size_t s = 0; s < config_.alpha_seeds; ++s) {
    if (!fs::exists(pretrain_path(s))) {
      throw std::runtime_error("missing artifact " + pretrain_path(s).string() + "; run `gpitlab pretrain` first");
    }
    for (double alpha : config_.alphas) {
      Arm arm = alpha == 1.0 ? Arm{Arm::Kind::kSisdr, 1.0}
                : alpha == 0.0 ? Arm{Arm::Kind::kAe, 0.0}
                               : Arm{Arm::Kind::kJoint, alpha};
      const fs::path final_ckpt = ate_path(s, arm.name(), config_.ates);
      if (!fs::exists(final_ckpt)) finetune(s, arm);
      MetricsRow row = evaluate_separator(load_separator(final_ckpt), recognizer, arm.name());
      points.push_back({s, alpha, row.cp_wer, row.orc_wer, row.sisdr_db.value_or(0.0)});
      csv.add_row({std::to_string(s), format_real(alpha), format_real(row.cp_wer), format_real(row.orc_wer),
                   format_real(row.sisdr_db.value_or(0.0))});
      log("alpha " + format_real(alpha) + " seed " + std::to_string(s) + " CP-WER " + format_real(row.cp_wer));
    }
  }
  csv.write(root_ / "sweep_alpha.csv");

  CsvTable med({"alpha", "median_cp_wer", "median_orc_wer", "median_sisdr_db"});
  stamp(med, std::nullopt);
  for (double alpha : config_.alphas) {
    std::vector<double> cp, orc, sdr;
    for (const auto& p : points) {
      if (p.alpha != alpha) continue;
      cp.push_back(p.cp_wer);
      orc.push_back(p.orc_wer);
      sdr.push_back(p.sisdr_db);
    }
    med.add_row({format_real(alpha), format_real(median(cp)), format_real(median(orc)), format_real(median(sdr))});
  }
  med.write(root_ / "sweep_alpha_median.csv");
  return points;
}

std::vector<TslPoint> Experiment::sweep_tsl() {
  const RecognizerParams recognizer = load_recognizer('A');
  std::vector<TslPoint> points;
  CsvTable csv({"seed_index", "tsl_seconds", "cp_wer", "orc_wer", "sisdr_db", "transcript_inputs"});
  CsvTable timing({"seed_index", "tsl_seconds", "seconds_per_ate"});
  stamp(csv, std::nullopt);
  stamp(timing, std::nullopt);
  for (std::size_t s = 0; s < config_.tsl_seeds; ++s) {
    for (double limit : config_.tsl_limits) {
      FinetuneOptions options;
      options.tsl_seconds = limit;
      options.ates = config_.tsl_ates;
      options.directory = "ae_tsl" + tag(limit);
      FinetuneResult run = finetune(s, Arm{Arm::Kind::kAe, 0.0}, options);
      MetricsRow row = evaluate_separator(run.params, recognizer, options.directory);
      TslPoint p{s, limit, row.cp_wer, row.orc_wer, row.sisdr_db.value_or(0.0), run.transcript_inputs,
                 mean(run.ate_seconds)};
      points.push_back(p);
      csv.add_row({std::to_string(s), format_real(limit), format_real(p.cp_wer), format_real(p.orc_wer),
                   format_real(p.sisdr_db), std::to_string(p.transcript_inputs)});
      timing.add_row({std::to_string(s), format_real(limit), format_real(p.seconds_per_ate)});
    }
  }
  csv.write(root_ / "sweep_tsl.csv");
  timing.write(root_ / "sweep_tsl_timing.csv");
  return points;
}

LogitDump Experiment::dump_logits(std::size_t seed_index, char which, std::size_t item, bool write_files) {
  const RecognizerParams recognizer = load_recognizer(which);
  const DatasetSpec spec = test_spec();
  if (item >= spec.items) throw std::out_of_range("dump-logits: item index beyond the test split");
  const MixtureExample ex = make_mixture(spec, voices_, item);
  const AeInput ae_input = parse_ae_input(config_.ae_on);

  LogitDump dump;
  for (const auto& r : ex.refs) dump.references.push_back(encode(recognizer, r));
  std::vector<std::pair<std::string, fs::path>> systems = {
      {"baseline", pretrain_path(seed_index)},
      {"sisdr_ates", ate_path(seed_index, "sisdr", config_.ates)},
      {"ae_ates", ate_path(seed_index, "ae", config_.ates)}};
  std::vector<std::pair<std::string, std::vector<Waveform>>> aligned;
  for (const auto& [name, path] : systems) {
    auto ests = separate(load_separator(path), ex.mixture).estimates;
    std::vector<std::size_t> perm;
    best_sisdr(ex.refs, ests, &perm);
    std::vector<Waveform> ordered;
    std::vector<LogitSequence> logits;
    for (std::size_t c = 0; c < perm.size(); ++c) {
      ordered.push_back(ests[perm[c]]);
      logits.push_back(encode(recognizer, ordered.back()));
    }
    Tape tape;
    const auto refs = to_tensors(ex.refs);
    const auto est_t = to_tensors(ordered);
    dump.ae_distance.push_back({name, loss_ae(tape, refs, est_t, recognizer, ae_input).item()});
    dump.estimates.push_back({name, std::move(logits)});
    aligned.push_back({name, std::move(ordered)});
  }
  if (!write_files) return dump;

  const fs::path dir = root_ / "logits" /
                       ("seed" + std::to_string(seed_index) + "_item" + std::to_string(item) + "_" +
                        static_cast<char>(std::tolower(which)));
  fs::create_directories(dir);
  auto write_matrix = [&](const LogitSequence& l, const std::string& file) {
    std::vector<std::string> header{"frame"};
    for (std::size_t n = 0; n < l.labels; ++n) header.push_back("label" + std::to_string(n));
    CsvTable t(header);
    stamp(t, seed_index);
    for (std::size_t f = 0; f < l.frames; ++f) {
      std::vector<std::string> row{std::to_string(f)};
      for (std::size_t n = 0; n < l.labels; ++n) row.push_back(format_real(l.at(f, n)));
      t.add_row(std::move(row));
    }
    t.write(dir / file);
    dump.files.push_back(dir / file);
  };
  for (std::size_t c = 0; c < dump.references.size(); ++c) {
    write_matrix(dump.references[c], "reference_spk" + std::to_string(c) + ".csv");
    write_wav(dir / ("reference_spk" + std::to_string(c) + ".wav"), ex.refs[c], ex.sample_rate);
  }
  write_wav(dir / "mixture.wav", ex.mixture, ex.sample_rate);
  for (std::size_t s = 0; s < dump.estimates.size(); ++s) {
    const auto& [name, logits] = dump.estimates[s];
    for (std::size_t c = 0; c < logits.size(); ++c) {
      write_matrix(logits[c], name + "_spk" + std::to_string(c) + ".csv");
      write_wav(dir / (name + "_spk" + std::to_string(c) + ".wav"), aligned[s].second[c], ex.sample_rate);
    }
  }
  // Transcripts in the interchange format; hypotheses are speaker-aligned like the logits.
  const TestItem labeled = make_test_item(spec, voices_, item);
  write_references(dir / "reference.ref", labeled.ref_utterances);
  dump.files.push_back(dir / "reference.ref");
  for (const auto& [name, ests] : aligned) {
    std::vector<Tokens> hyps;
    for (const auto& e : ests) hyps.push_back(recognize(recognizer, e));
    write_hypotheses(dir / (name + ".hyp"), hyps);
    dump.files.push_back(dir / (name + ".hyp"));
  }
  CsvTable dist({"system", "ae_distance"});
  stamp(dist, seed_index);
  for (const auto& [name, d] : dump.ae_distance) dist.add_row({name, format_real(d)});
  dist.write(dir / "ae_distance.csv");
  dump.files.push_back(dir / "ae_distance.csv");
  return dump;
}

}  // namespace gpit
