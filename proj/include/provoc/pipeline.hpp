#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "provoc/audio.hpp"
#include "provoc/common.hpp"
#include "provoc/config.hpp"
#include "provoc/features.hpp"
#include "provoc/prosody.hpp"
#include "provoc/text.hpp"
#include "provoc/training.hpp"

namespace provoc {

inline std::vector<double> scale_code(std::vector<double> code, double scale) {
  for (double& v : code) v *= scale;
  return code;
}

struct GriffinLimResult {
  Waveform audio;
  double raw_peak = 0.0;  // peak magnitude before normalization
};

// Phase reconstruction from a natural-log mel spectrogram: mel energies are
// inverted to a linear power spectrum through the filterbank pseudo-inverse
// (clamped at zero), then iterative STFT/ISTFT projections refine an initial
// zero-phase estimate.
inline GriffinLimResult griffin_lim(const MelSpectrogram& mel, const FeatureConfig& cfg,
                                    int iters, double target_peak = 0.95, bool normalize = true) {
  cfg.validate();
  check(iters >= 0, "griffin_lim: iteration count must be >= 0");
  check(mel.n_mels == cfg.n_mels, "griffin_lim: mel has ", mel.n_mels, " bands, config expects ",
        cfg.n_mels);
  const int min_frames = 1 + (cfg.win_length + cfg.hop_length - 1) / cfg.hop_length;
  check(mel.frames >= min_frames, "griffin_lim: need at least ", min_frames, " frames, got ",
        mel.frames);

  const MelFilterbank fb(cfg);
  const int M = cfg.n_mels, bins = fb.bins(), T = mel.frames;

  Eigen::MatrixXd W(M, bins);
  for (int m = 0; m < M; ++m)
    for (int b = 0; b < bins; ++b) W(m, b) = fb.weight(m, b);
  Eigen::MatrixXd G = W * W.transpose();
  G.diagonal().array() += 1e-10;
  Eigen::LDLT<Eigen::MatrixXd> solver(G);

  // magnitude targets per frame
  std::vector<std::vector<double>> mag(T, std::vector<double>(bins));
  Eigen::VectorXd e(M);
  for (int t = 0; t < T; ++t) {
    for (int m = 0; m < M; ++m) e(m) = std::exp(mel.at(t, m));
    Eigen::VectorXd p = W.transpose() * solver.solve(e);
    for (int b = 0; b < bins; ++b) mag[t][b] = std::sqrt(std::max(0.0, p(b)));
  }

  // zero-phase initialization
  std::vector<std::vector<cplx>> S(T, std::vector<cplx>(bins));
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < bins; ++b) S[t][b] = cplx(mag[t][b], 0.0);

  for (int it = 0; it < iters; ++it) {
    Waveform x = istft(S, cfg);
    auto S2 = stft(x, cfg);
    check(static_cast<int>(S2.size()) >= T, "griffin_lim: frame count shrank during projection");
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < bins; ++b) {
        const double a = std::abs(S2[t][b]);
        S[t][b] = a > 1e-12 ? cplx(mag[t][b]) * (S2[t][b] / a) : cplx(mag[t][b], 0.0);
      }
    }
  }

  GriffinLimResult res;
  res.audio = istft(S, cfg);
  for (double v : res.audio.samples) res.raw_peak = std::max(res.raw_peak, std::abs(v));
  if (normalize && res.raw_peak > 0.0) {
    const double g = target_peak / res.raw_peak;
    for (double& v : res.audio.samples) v *= g;
  } else {
    for (double& v : res.audio.samples) v = std::clamp(v, -1.0, 1.0);
  }
  return res;
}

// The recognition front end stays behind this seam; anything that can map an
// utterance to text plugs in here.
class TranscriptProvider {
public:
  virtual ~TranscriptProvider() = default;
  virtual std::string transcript(const std::string& utterance_id, const std::string& audio_path) = 0;
};

// CSV-backed lookup keyed by utterance id. Accepts either a two-column
// "id,transcript" table or a full dataset manifest.
class FileTranscriptProvider : public TranscriptProvider {
public:
  explicit FileTranscriptProvider(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(cur);
    check(!lines.empty(), "transcript file ", path, " is empty");
    const auto header = csv_split(lines[0]);
    int id_col = -1, text_col = -1;
    if (header.size() == 2 && header[0] == "id" && header[1] == "transcript") {
      id_col = 0;
      text_col = 1;
    } else if (header.size() == 4 && header[0] == "id" && header[2] == "transcript") {
      id_col = 0;
      text_col = 2;
    } else {
      fail("transcript file ", path, " must start with 'id,transcript' or a manifest header");
    }
    for (size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto f = csv_split(lines[i]);
      check(f.size() == header.size(), "transcript file ", path, " line ", i + 1,
            " has ", f.size(), " fields");
      map_[f[id_col]] = f[text_col];
    }
  }

  std::string transcript(const std::string& utterance_id, const std::string&) override {
    auto it = map_.find(utterance_id);
    check(it != map_.end(), "no transcript for utterance ", utterance_id);
    return it->second;
  }

private:
  std::map<std::string, std::string> map_;
};

// Shells out to an external recognizer: the command gets the audio path as its
// last argument and must print the transcript on stdout.
class CommandTranscriptProvider : public TranscriptProvider {
public:
  explicit CommandTranscriptProvider(std::string command) : command_(std::move(command)) {}

  std::string transcript(const std::string&, const std::string& audio_path) override {
    std::string quoted = "'";
    for (char c : audio_path) {
      if (c == '\'') quoted += "'\\''";
      else quoted.push_back(c);
    }
    quoted += "'";
    const std::string full = command_ + " " + quoted;
    FILE* pipe = ::popen(full.c_str(), "r");
    check(pipe != nullptr, "cannot run transcript command: ", command_);
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
    const int rc = ::pclose(pipe);
    check(rc == 0, "transcript command failed (exit ", rc, "): ", command_);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r' || out.back() == ' '))
      out.pop_back();
    check(!out.empty(), "transcript command produced no output for ", audio_path);
    return out;
  }

private:
  std::string command_;
};

struct ConversionRequest {
  std::string source_audio;
  std::string utterance_id;
  std::string target_speaker;
  const std::string* transcript_override = nullptr;  // wins over the provider
  TranscriptProvider* provider = nullptr;
  uint64_t seed = 0;
};

struct ConversionResult {
  Waveform audio;
  MelSpectrogram mel;
  std::string transcript;
  std::vector<double> code;  // post-scaling; empty when prosody is off
  double code_norm = 0.0;
  int frames = 0;
  bool truncated = false;
  double raw_peak = 0.0;

  json metadata(const std::string& target_speaker, const PipelineConfig& pc) const {
    return json{{"transcript", transcript}, {"target_speaker", target_speaker},
                {"prosody_mode", pc.prosody_mode}, {"prosody_scale", pc.prosody_scale},
                {"code_norm", code_norm}, {"frames", frames}, {"truncated", truncated},
                {"raw_peak", raw_peak}};
  }
};

// Recognition-synthesis conversion over a loaded checkpoint. The checkpoint is
// copied in; nothing here writes back to it.
class Converter {
public:
  explicit Converter(const Checkpoint& ck)
      : trainer_(ck), pipeline_(trainer_.config().pipeline) {}

  const Config& config() const { return trainer_.config(); }
  Trainer& trainer() { return trainer_; }
  PipelineConfig& pipeline() { return pipeline_; }
  const PipelineConfig& pipeline() const { return pipeline_; }

  // Synthesis half: tokenize, encode, condition, autoregressive decode.
  ConversionResult synthesize(const std::string& transcript, const std::string& target_speaker,
                              const std::vector<double>* code, uint64_t seed) {
    const Config& cfg = trainer_.config();
    ag::NoGradGuard no_grad;
    ConversionResult res;
    res.transcript = normalize_text(transcript);
    const auto seq = tokenize(res.transcript);
    trainer_.model().set_dropout_state(seed, false);
    auto enc = trainer_.model().encode(seq.tokens);
    const int row = trainer_.speaker_row(target_speaker);
    ag::Tensor code_t;
    if (code) {
      res.code = *code;
      for (double v : *code) res.code_norm += v * v;
      res.code_norm = std::sqrt(res.code_norm);
      code_t = ag::Tensor::leaf({1, cfg.model.prosody_dim}, *code, false);
    }
    auto cond = trainer_.model().condition(enc, trainer_.model().speaker_vector(row),
                                           code ? &code_t : nullptr);
    auto inf = trainer_.model().infer(cond, pipeline_.max_decode_frames, seed);
    res.frames = inf.frames;
    res.truncated = inf.truncated;
    res.mel.data = std::move(inf.mel);
    res.mel.frames = inf.frames;
    res.mel.n_mels = cfg.model.mel_dim;
    res.mel.hop_length = cfg.features.hop_length;
    res.mel.win_length = cfg.features.win_length;
    res.mel.sample_rate = cfg.features.sample_rate;
    return res;
  }

  // Prosody code of a source recording under the current pipeline settings.
  std::vector<double> extract_code(const std::string& audio_path) {
    const Config& cfg = trainer_.config();
    Waveform w = load_waveform(audio_path, cfg.features.sample_rate);
    MelSpectrogram mel = mel_spectrogram(w, cfg.features);
    return encode_prosody_values(trainer_.reference_encoder(), mel.data, mel.frames, mel.n_mels);
  }

  ConversionResult convert(const ConversionRequest& req) {
    const Config& cfg = trainer_.config();
    const auto& pc = pipeline_;
    check(pc.prosody_mode == "transfer" || pc.prosody_mode == "off",
          "prosody_mode must be transfer or off, got ", pc.prosody_mode);

    std::string transcript;
    if (req.transcript_override) {
      transcript = *req.transcript_override;  // provider deliberately not consulted
    } else {
      check(req.provider != nullptr, "conversion needs a transcript override or a provider");
      transcript = req.provider->transcript(req.utterance_id, req.source_audio);
    }
    check(!transcript.empty(), "empty transcript for ", req.source_audio);

    std::vector<double> code;
    const bool use_prosody = pc.prosody_mode == "transfer";
    if (use_prosody) code = scale_code(extract_code(req.source_audio), pc.prosody_scale);

    ConversionResult res =
        synthesize(transcript, req.target_speaker, use_prosody ? &code : nullptr, req.seed);
    auto gl = griffin_lim(res.mel, cfg.features, pc.griffin_lim_iters, pc.wav_peak,
                          pc.normalize_wav);
    res.audio = std::move(gl.audio);
    res.raw_peak = gl.raw_peak;
    return res;
  }

private:
  Trainer trainer_;
  PipelineConfig pipeline_;
};

}  // namespace provoc
