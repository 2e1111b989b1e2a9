#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/features.hpp"

namespace provoc {

using json = nlohmann::ordered_json;

struct ModelConfig {
  int n_blocks = 2;       // encoder and decoder each
  int n_heads = 2;
  int layer_width = 128;
  int ff_mult = 4;
  int mel_dim = 80;
  int speaker_dim = 512;
  int prosody_dim = 128;
  int prenet_width = 128;
  double prenet_dropout = 0.5;  // stays active at inference
  double dropout = 0.1;
  int max_positions = 2048;
  int postnet_layers = 5;
  int postnet_kernel = 5;
  int postnet_channels = 128;
  std::vector<int> refenc_filters = {32, 32, 64, 64, 128, 128};
  int refenc_gru = 128;
  int classifier_hidden = 512;
  int classifier_layers = 3;
  int n_speakers = 4;
  double stop_threshold = 0.5;

  int ff_width() const { return layer_width * ff_mult; }

  void validate() const {
    check(n_blocks > 0 && n_heads > 0 && layer_width > 0, "model dims must be positive");
    check(layer_width % n_heads == 0, "layer_width ", layer_width, " not divisible by n_heads ",
          n_heads);
    check(mel_dim > 0 && speaker_dim > 0 && prosody_dim > 0 && prenet_width > 0,
          "model dims must be positive");
    check(ff_mult > 0 && max_positions > 0, "model dims must be positive");
    check(prenet_dropout >= 0 && prenet_dropout < 1 && dropout >= 0 && dropout < 1,
          "dropout rates must lie in [0,1)");
    check(postnet_layers >= 1 && postnet_channels > 0, "postnet dims must be positive");
    check(postnet_kernel >= 1 && postnet_kernel % 2 == 1, "postnet kernel must be odd");
    check(refenc_filters.size() == 6, "reference encoder expects 6 conv layers");
    for (int f : refenc_filters) check(f > 0, "reference encoder filters must be positive");
    check(refenc_gru > 0, "reference encoder GRU width must be positive");
    check(classifier_hidden > 0 && classifier_layers > 0, "classifier dims must be positive");
    check(n_speakers >= 1, "n_speakers must be >= 1");
    check(stop_threshold > 0 && stop_threshold < 1, "stop threshold must lie in (0,1)");
  }
};

struct TrainingConfig {
  std::string stage = "pretrain";  // pretrain | finetune
  int batch_size = 8;
  int finetune_batch_size = 16;
  int warmup_steps = 200;
  double lr_scale = 1.0;
  int max_steps = 500;
  double w_mel_before = 1.0;
  double w_mel_after = 1.0;
  double w_stop = 1.0;
  double w_adversarial = 0.1;
  double grl_lambda = 1.0;
  bool grl_ramp = false;  // linear ramp over first 10% of pretraining
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 1.0;
  double stop_pos_weight = 5.0;
  std::string mel_loss = "l1";  // l1 | l2
  uint64_t seed = 1234;
  int log_every = 10;
  int checkpoint_every = 500;

  void validate() const {
    check(stage == "pretrain" || stage == "finetune", "stage must be pretrain or finetune, got ",
          stage);
    check(batch_size >= 1 && finetune_batch_size >= 1, "batch sizes must be >= 1");
    check(warmup_steps >= 1, "warmup_steps must be >= 1");
    check(lr_scale > 0, "lr_scale must be positive");
    check(max_steps >= 0, "max_steps must be >= 0");
    check(w_mel_before >= 0 && w_mel_after >= 0 && w_stop >= 0 && w_adversarial >= 0,
          "loss weights must be nonnegative");
    check(grl_lambda >= 0, "grl_lambda must be nonnegative");
    check(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "Adam betas must lie in [0,1)");
    check(adam_eps > 0, "Adam epsilon must be positive");
    check(clip_norm > 0, "clip_norm must be positive");
    check(stop_pos_weight > 0, "stop_pos_weight must be positive");
    check(mel_loss == "l1" || mel_loss == "l2", "mel_loss must be l1 or l2, got ", mel_loss);
    check(log_every >= 1 && checkpoint_every >= 1, "logging intervals must be >= 1");
  }
};

struct PipelineConfig {
  std::string prosody_mode = "transfer";  // off | transfer
  double prosody_scale = 1.5;
  int griffin_lim_iters = 60;
  int max_decode_frames = 1000;
  double wav_peak = 0.95;
  bool normalize_wav = true;

  void validate() const {
    check(prosody_mode == "off" || prosody_mode == "transfer",
          "prosody_mode must be off or transfer, got ", prosody_mode);
    check(std::isfinite(prosody_scale), "prosody_scale must be finite");
    check(griffin_lim_iters >= 1, "griffin_lim_iters must be >= 1");
    check(max_decode_frames >= 1, "max_decode_frames must be >= 1");
    check(wav_peak > 0 && wav_peak <= 1, "wav_peak must lie in (0,1]");
  }
};

struct Config {
  FeatureConfig features;
  ModelConfig model;
  TrainingConfig training;
  PipelineConfig pipeline;

  void validate() const {
    features.validate();
    model.validate();
    training.validate();
    pipeline.validate();
    check(features.n_mels == model.mel_dim, "features.n_mels ", features.n_mels,
          " must match model.mel_dim ", model.mel_dim);
  }
};

namespace cfg_detail {

class Reader {
public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    check(j_.is_object(), "config section ", where_, " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail("config key ", where_, ".", key, ": ", e.what());
    }
  }

  // Flags any key that no get() call claimed; catches typos early.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      bool ok = false;
      for (const auto& k : known_)
        if (key == k) ok = true;
      check(ok, "unknown config key ", where_, ".", key);
    }
  }

private:
  const json& j_;
  std::string where_;
  std::vector<std::string> known_;
};

}  // namespace cfg_detail

inline json to_json(const FeatureConfig& c) {
  return json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},
              {"win_length", c.win_length},   {"hop_length", c.hop_length},
              {"n_mels", c.n_mels},           {"fmin", c.fmin},
              {"fmax", c.fmax},               {"log_floor", c.log_floor}};
}

inline void from_json(const json& j, FeatureConfig& c) {
  cfg_detail::Reader r(j, "features");
  r.get("sample_rate", c.sample_rate);
  r.get("n_fft", c.n_fft);
  r.get("win_length", c.win_length);
  r.get("hop_length", c.hop_length);
  r.get("n_mels", c.n_mels);
  r.get("fmin", c.fmin);
  r.get("fmax", c.fmax);
  r.get("log_floor", c.log_floor);
  r.finish();
}

inline json to_json(const ModelConfig& c) {
  return json{{"n_blocks", c.n_blocks},
              {"n_heads", c.n_heads},
              {"layer_width", c.layer_width},
              {"ff_mult", c.ff_mult},
              {"mel_dim", c.mel_dim},
              {"speaker_dim", c.speaker_dim},
              {"prosody_dim", c.prosody_dim},
              {"prenet_width", c.prenet_width},
              {"prenet_dropout", c.prenet_dropout},
              {"dropout", c.dropout},
              {"max_positions", c.max_positions},
              {"postnet_layers", c.postnet_layers},
              {"postnet_kernel", c.postnet_kernel},
              {"postnet_channels", c.postnet_channels},
              {"refenc_filters", c.refenc_filters},
              {"refenc_gru", c.refenc_gru},
              {"classifier_hidden", c.classifier_hidden},
              {"classifier_layers", c.classifier_layers},
              {"n_speakers", c.n_speakers},
              {"stop_threshold", c.stop_threshold}};
}

inline void from_json(const json& j, ModelConfig& c) {
  cfg_detail::Reader r(j, "model");
  r.get("n_blocks", c.n_blocks);
  r.get("n_heads", c.n_heads);
  r.get("layer_width", c.layer_width);
  r.get("ff_mult", c.ff_mult);
  r.get("mel_dim", c.mel_dim);
  r.get("speaker_dim", c.speaker_dim);
  r.get("prosody_dim", c.prosody_dim);
  r.get("prenet_width", c.prenet_width);
  r.get("prenet_dropout", c.prenet_dropout);
  r.get("dropout", c.dropout);
  r.get("max_positions", c.max_positions);
  r.get("postnet_layers", c.postnet_layers);
  r.get("postnet_kernel", c.postnet_kernel);
  r.get("postnet_channels", c.postnet_channels);
  r.get("refenc_filters", c.refenc_filters);
  r.get("refenc_gru", c.refenc_gru);
  r.get("classifier_hidden", c.classifier_hidden);
  r.get("classifier_layers", c.classifier_layers);
  r.get("n_speakers", c.n_speakers);
  r.get("stop_threshold", c.stop_threshold);
  r.finish();
}

inline json to_json(const TrainingConfig& c) {
  return json{{"stage", c.stage},
              {"batch_size", c.batch_size},
              {"finetune_batch_size", c.finetune_batch_size},
              {"warmup_steps", c.warmup_steps},
              {"lr_scale", c.lr_scale},
              {"max_steps", c.max_steps},
              {"w_mel_before", c.w_mel_before},
              {"w_mel_after", c.w_mel_after},
              {"w_stop", c.w_stop},
              {"w_adversarial", c.w_adversarial},
              {"grl_lambda", c.grl_lambda},
              {"grl_ramp", c.grl_ramp},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"clip_norm", c.clip_norm},
              {"stop_pos_weight", c.stop_pos_weight},
              {"mel_loss", c.mel_loss},
              {"seed", c.seed},
              {"log_every", c.log_every},
              {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const json& j, TrainingConfig& c) {
  cfg_detail::Reader r(j, "training");
  r.get("stage", c.stage);
  r.get("batch_size", c.batch_size);
  r.get("finetune_batch_size", c.finetune_batch_size);
  r.get("warmup_steps", c.warmup_steps);
  r.get("lr_scale", c.lr_scale);
  r.get("max_steps", c.max_steps);
  r.get("w_mel_before", c.w_mel_before);
  r.get("w_mel_after", c.w_mel_after);
  r.get("w_stop", c.w_stop);
  r.get("w_adversarial", c.w_adversarial);
  r.get("grl_lambda", c.grl_lambda);
  r.get("grl_ramp", c.grl_ramp);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("clip_norm", c.clip_norm);
  r.get("stop_pos_weight", c.stop_pos_weight);
  r.get("mel_loss", c.mel_loss);
  r.get("seed", c.seed);
  r.get("log_every", c.log_every);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
}

inline json to_json(const PipelineConfig& c) {
  return json{{"prosody_mode", c.prosody_mode},
              {"prosody_scale", c.prosody_scale},
              {"griffin_lim_iters", c.griffin_lim_iters},
              {"max_decode_frames", c.max_decode_frames},
              {"wav_peak", c.wav_peak},
              {"normalize_wav", c.normalize_wav}};
}

inline void from_json(const json& j, PipelineConfig& c) {
  cfg_detail::Reader r(j, "pipeline");
  r.get("prosody_mode", c.prosody_mode);
  r.get("prosody_scale", c.prosody_scale);
  r.get("griffin_lim_iters", c.griffin_lim_iters);
  r.get("max_decode_frames", c.max_decode_frames);
  r.get("wav_peak", c.wav_peak);
  r.get("normalize_wav", c.normalize_wav);
  r.finish();
}

inline json to_json(const Config& c) {
  return json{{"features", to_json(c.features)},
              {"model", to_json(c.model)},
              {"training", to_json(c.training)},
              {"pipeline", to_json(c.pipeline)}};
}

// Desk-scale default: 2 blocks, width 128, 2 heads, short warmup.
inline Config desk_config() { return Config{}; }

// Full paper-scale dimensions; constructs and runs a forward step on this
// machine but is far too large to train here.
inline Config paper_config() {
  Config c;
  c.model.n_blocks = 6;
  c.model.n_heads = 4;
  c.model.layer_width = 1536;
  c.model.prenet_width = 256;
  c.model.postnet_channels = 512;
  c.training.batch_size = 120;
  c.training.finetune_batch_size = 16;
  c.training.warmup_steps = 4000;
  return c;
}

// Miniature config for gradient checks and smoke training.
inline Config mini_config() {
  Config c;
  c.features.n_mels = 8;
  c.model.n_blocks = 2;
  c.model.n_heads = 1;
  c.model.layer_width = 32;
  c.model.mel_dim = 8;
  c.model.speaker_dim = 16;
  c.model.prosody_dim = 8;
  c.model.prenet_width = 16;
  c.model.postnet_channels = 16;
  c.model.max_positions = 512;
  c.model.refenc_filters = {4, 4, 8, 8, 16, 16};
  c.model.refenc_gru = 16;
  c.model.classifier_hidden = 32;
  c.model.n_speakers = 2;
  c.model.prenet_dropout = 0.2;  // the full-scale rate drowns smoke-size prenets
  c.training.batch_size = 2;
  c.training.warmup_steps = 50;
  c.training.max_steps = 2000;
  c.pipeline.max_decode_frames = 120;
  return c;
}

inline Config preset_config(const std::string& name) {
  if (name == "desk") return desk_config();
  if (name == "paper") return paper_config();
  if (name == "mini") return mini_config();
  fail("unknown preset: ", name, " (expected desk, paper or mini)");
}

// Parse a config tree: optional "preset" selects the base, remaining sections
// overlay it field by field.
inline Config config_from_json(const json& j) {
  check(j.is_object(), "config root must be an object");
  Config c;
  if (j.contains("preset")) c = preset_config(j.at("preset").get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (key == "features")
      from_json(value, c.features);
    else if (key == "model")
      from_json(value, c.model);
    else if (key == "training")
      from_json(value, c.training);
    else if (key == "pipeline")
      from_json(value, c.pipeline);
    else
      fail("unknown config section: ", key);
  }
  c.validate();
  return c;
}

inline Config load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail("failed to parse config ", path, ": ", e.what());
  }
  return config_from_json(j);
}

inline std::string dump_config(const Config& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace provoc
