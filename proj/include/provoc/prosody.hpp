#pragma once

#include <memory>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/config.hpp"
#include "provoc/nn.hpp"
#include "provoc/tensor.hpp"

namespace provoc {

inline int halved_six_times(int n) {
  for (int i = 0; i < 6; ++i) n = (n + 1) / 2;
  return n;
}

// GST-style reference encoder: 6 stride-2 3x3 convs (ReLU, no batch norm),
// a GRU over the remaining time axis, and a linear projection to the code.
class ReferenceEncoder {
public:
  ReferenceEncoder() = default;
  ReferenceEncoder(const ModelConfig& cfg, nn::ParameterStore& store, Rng& rng)
      : mel_dim_(cfg.mel_dim), code_dim_(cfg.prosody_dim) {
    int c_in = 1;
    for (size_t i = 0; i < cfg.refenc_filters.size(); ++i) {
      convs_.emplace_back(store, "pros.conv." + std::to_string(i), c_in, cfg.refenc_filters[i],
                          rng);
      c_in = cfg.refenc_filters[i];
    }
    freq_out_ = halved_six_times(cfg.mel_dim);
    gru_ = nn::GRU(store, "pros.gru", c_in * freq_out_, cfg.refenc_gru, rng);
    proj_ = nn::Linear(store, "pros.proj", cfg.refenc_gru, cfg.prosody_dim, rng);
  }

  // mel: T x mel_dim -> code [1, prosody_dim]
  ag::Tensor encode(const ag::Tensor& mel) const {
    check(mel.rows() >= 1, "encode_prosody: empty mel");
    check(mel.cols() == mel_dim_, "encode_prosody: mel width ", mel.cols(), " != ", mel_dim_);
    auto x = ag::reshape(mel, {1, mel.rows(), mel.cols()});
    for (const auto& conv : convs_) x = ag::relu(conv.forward(x));
    return proj_.forward(gru_.run(ag::conv_map_to_seq(x)));
  }

  int code_dim() const { return code_dim_; }

  static size_t expected_param_count(const ModelConfig& cfg) {
    size_t n = 0;
    int c_in = 1;
    for (int f : cfg.refenc_filters) {
      n += nn::Conv2d::param_count(c_in, f);
      c_in = f;
    }
    n += nn::GRU::param_count(c_in * halved_six_times(cfg.mel_dim), cfg.refenc_gru);
    n += nn::Linear::param_count(cfg.refenc_gru, cfg.prosody_dim);
    return n;
  }

private:
  int mel_dim_ = 0, code_dim_ = 0, freq_out_ = 0;
  std::vector<nn::Conv2d> convs_;
  nn::GRU gru_;
  nn::Linear proj_;
};

// Convenience wrapper for callers that hold a plain mel matrix and want a
// value-only code (eval mode).
inline std::vector<double> encode_prosody_values(const ReferenceEncoder& enc,
                                                 const std::vector<double>& mel, int frames,
                                                 int mel_dim) {
  ag::NoGradGuard no_grad;
  auto m = ag::Tensor::leaf({frames, mel_dim}, mel, false);
  return enc.encode(m).data();
}

// MLP speaker classifier (3 x 512 by default) with ReLU hidden activations.
class SpeakerClassifier {
public:
  SpeakerClassifier() = default;
  SpeakerClassifier(const ModelConfig& cfg, nn::ParameterStore& store, Rng& rng)
      : n_speakers_(cfg.n_speakers) {
    int in = cfg.prosody_dim;
    for (int i = 0; i < cfg.classifier_layers; ++i) {
      hidden_.emplace_back(store, "cls.hidden." + std::to_string(i), in, cfg.classifier_hidden,
                           rng);
      in = cfg.classifier_hidden;
    }
    out_ = nn::Linear(store, "cls.out", in, cfg.n_speakers, rng);
  }

  ag::Tensor logits(const ag::Tensor& codes) const {
    auto x = codes;
    for (const auto& layer : hidden_) x = ag::relu(layer.forward(x));
    return out_.forward(x);
  }

  // softmax probabilities, rows summing to 1
  ag::Tensor probabilities(const ag::Tensor& codes) const {
    auto l = logits(codes);
    auto allowed = std::make_shared<std::vector<uint8_t>>(l.size(), 1);
    return ag::masked_softmax_rows(l, allowed);
  }

  int n_speakers() const { return n_speakers_; }

  static size_t expected_param_count(const ModelConfig& cfg) {
    size_t n = 0;
    int in = cfg.prosody_dim;
    for (int i = 0; i < cfg.classifier_layers; ++i) {
      n += nn::Linear::param_count(in, cfg.classifier_hidden);
      in = cfg.classifier_hidden;
    }
    n += nn::Linear::param_count(in, cfg.n_speakers);
    return n;
  }

private:
  int n_speakers_ = 0;
  std::vector<nn::Linear> hidden_;
  nn::Linear out_;
};

// The classifier updates on every adversarial call; the prosody encoder only
// on every 4th ("updated four times for each update").
class AdversarialSchedule {
public:
  explicit AdversarialSchedule(int period = 4) : period_(period) {
    check(period >= 1, "adversarial period must be >= 1");
  }

  // advances the counter; true when this call also updates the encoder
  bool tick() {
    ++calls_;
    ++classifier_updates_;
    if (calls_ % period_ == 0) {
      ++encoder_updates_;
      return true;
    }
    return false;
  }

  long calls() const { return calls_; }
  long classifier_updates() const { return classifier_updates_; }
  long encoder_updates() const { return encoder_updates_; }
  int period() const { return period_; }

private:
  int period_ = 4;
  long calls_ = 0, classifier_updates_ = 0, encoder_updates_ = 0;
};

struct AdversarialResult {
  ag::Tensor loss;         // classifier cross-entropy (graph-connected)
  double accuracy = 0.0;   // batch top-1 accuracy
  bool encoder_update = false;
};

// Builds the adversarial branch: codes pass the GRL (lambda folded with the
// adversarial loss weight) into the classifier; the returned CE term carries
// full gradient to the classifier and -lambda*w_adv times it to the encoder.
inline AdversarialResult adversarial_branch(const SpeakerClassifier& cls, const ag::Tensor& codes,
                                            const std::vector<int>& labels, double lambda,
                                            double w_adv) {
  check(codes.rows() == static_cast<int>(labels.size()),
        "adversarial batch size mismatch: ", codes.rows(), " codes vs ", labels.size(),
        " labels");
  auto logits = cls.logits(ag::gradient_reverse(codes, lambda * w_adv));
  AdversarialResult res;
  res.loss = ag::cross_entropy(logits, labels);
  int correct = 0;
  const int B = logits.rows(), S = logits.cols();
  for (int b = 0; b < B; ++b) {
    int best = 0;
    for (int s = 1; s < S; ++s)
      if (logits.at(b, s) > logits.at(b, best)) best = s;
    if (best == labels[b]) ++correct;
  }
  res.accuracy = B > 0 ? static_cast<double>(correct) / B : 0.0;
  return res;
}

}  // namespace provoc
