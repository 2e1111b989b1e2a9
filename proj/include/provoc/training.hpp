#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/config.hpp"
#include "provoc/dataset.hpp"
#include "provoc/model.hpp"
#include "provoc/nn.hpp"
#include "provoc/prosody.hpp"
#include "provoc/tensor.hpp"
#include "provoc/text.hpp"

namespace provoc {

// lr = scale * model_dim^(-0.5) * min(step^(-0.5), step * warmup^(-1.5))
inline double noam_lr(long step, int model_dim, int warmup, double scale) {
  check(step >= 1, "noam_lr: step must be >= 1, got ", step);
  check(model_dim >= 1 && warmup >= 1, "noam_lr: model_dim and warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return scale * std::pow(static_cast<double>(model_dim), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

class Adam {
public:
  struct ParamState {
    long t = 0;
    std::vector<double> m, v;
  };

  Adam() = default;
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Skipped parameters keep their moments and step counters untouched.
  void step(nn::ParameterStore& store, double lr,
            const std::function<bool(const std::string&)>& include) {
    for (const auto& [name, tensor] : store.all()) {
      if (store.is_frozen(name) || !include(name)) continue;
      auto& ps = states_[name];
      auto& value = tensor.node()->value;
      auto& grad = tensor.node()->grad;
      if (grad.size() != value.size()) tensor.node()->ensure_grad();
      if (ps.m.empty()) {
        ps.m.assign(value.size(), 0.0);
        ps.v.assign(value.size(), 0.0);
      }
      check(ps.m.size() == value.size(), "Adam state size mismatch for ", name);
      ++ps.t;
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(ps.t));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(ps.t));
      for (size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        ps.m[i] = beta1_ * ps.m[i] + (1.0 - beta1_) * g;
        ps.v[i] = beta2_ * ps.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = ps.m[i] / bc1;
        const double vhat = ps.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::map<std::string, ParamState>& states() { return states_; }
  const std::map<std::string, ParamState>& states() const { return states_; }

private:
  double beta1_ = 0.9, beta2_ = 0.98, eps_ = 1e-9;
  std::map<std::string, ParamState> states_;
};

// Scales the gradients of the included parameters so their global norm does
// not exceed max_norm; returns the pre-clip norm.
inline double clip_gradients(nn::ParameterStore& store, double max_norm,
                             const std::function<bool(const std::string&)>& include) {
  double sq = 0.0;
  for (const auto& [name, tensor] : store.all()) {
    if (store.is_frozen(name) || !include(name)) continue;
    for (double g : tensor.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double coef = max_norm / norm;
    for (const auto& [name, tensor] : store.all()) {
      if (store.is_frozen(name) || !include(name)) continue;
      for (double& g : tensor.node()->grad) g *= coef;
    }
  }
  return norm;
}

struct SynthesisLoss {
  ag::Tensor total;  // weighted sum, graph-connected
  double mel_before = 0.0, mel_after = 0.0, stop = 0.0;  // unweighted component values
};

// Weighted sum of the two mel reconstruction terms and the stop-token BCE.
// Output rows beyond t_true (padding) are sliced away before any term.
inline SynthesisLoss synthesis_loss(const DecoderOutput& out, const std::vector<double>& target,
                                    int t_true, const TrainingConfig& tc) {
  check(t_true >= 1, "loss: need at least one target frame");
  const int T = out.mel_before.rows();
  check(T >= t_true, "loss: decoder emitted ", T, " frames for ", t_true, " targets");
  check(static_cast<size_t>(t_true) * out.mel_before.cols() == target.size(),
        "loss: target size mismatch");
  auto before = T == t_true ? out.mel_before : ag::row_slice(out.mel_before, 0, t_true);
  auto after = T == t_true ? out.mel_after : ag::row_slice(out.mel_after, 0, t_true);
  auto stop = T == t_true ? out.stop_logits : ag::row_slice(out.stop_logits, 0, t_true);

  const bool l2 = tc.mel_loss == "l2";
  auto mel_b = l2 ? ag::l2_loss(before, target) : ag::l1_loss(before, target);
  auto mel_a = l2 ? ag::l2_loss(after, target) : ag::l1_loss(after, target);

  std::vector<double> stop_targets(t_true, 0.0), stop_weights(t_true, 1.0);
  stop_targets[t_true - 1] = 1.0;
  stop_weights[t_true - 1] = tc.stop_pos_weight;
  auto stop_l = ag::bce_with_logits(stop, stop_targets, stop_weights);

  SynthesisLoss sl;
  sl.mel_before = mel_b.scalar();
  sl.mel_after = mel_a.scalar();
  sl.stop = stop_l.scalar();
  sl.total = ag::add(ag::add(ag::scale(mel_b, tc.w_mel_before), ag::scale(mel_a, tc.w_mel_after)),
                     ag::scale(stop_l, tc.w_stop));
  return sl;
}

// ---- checkpoint container ----

struct TensorData {
  std::vector<int> shape;
  std::vector<double> data;
};

struct Checkpoint {
  Config config;
  std::string stage = "pretrain";
  long step = 0;
  std::vector<std::string> speakers;  // row order of the speaker table
  std::map<std::string, TensorData> params;
  std::map<std::string, Adam::ParamState> adam;
};

inline constexpr char kCheckpointMagic[9] = "PROVOCCK";
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  check(ck.stage == "pretrain" || ck.stage == "finetune", "checkpoint stage must be pretrain or ",
        "finetune, got ", ck.stage);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    check(out.good(), "cannot open ", tmp, " for writing");
    out.write(kCheckpointMagic, 8);
    write_pod(out, kCheckpointVersion);
    write_string(out, dump_config(ck.config));
    write_string(out, ck.stage);
    write_pod(out, static_cast<int64_t>(ck.step));
    write_pod(out, static_cast<uint32_t>(ck.speakers.size()));
    for (const auto& s : ck.speakers) write_string(out, s);
    write_pod(out, static_cast<uint32_t>(ck.params.size()));
    for (const auto& [name, td] : ck.params) {
      write_string(out, name);
      write_pod(out, static_cast<uint32_t>(td.shape.size()));
      for (int d : td.shape) write_pod(out, static_cast<int32_t>(d));
      write_pod(out, static_cast<uint64_t>(td.data.size()));
      out.write(reinterpret_cast<const char*>(td.data.data()),
                static_cast<std::streamsize>(td.data.size() * sizeof(double)));
    }
    write_pod(out, static_cast<uint32_t>(ck.adam.size()));
    for (const auto& [name, st] : ck.adam) {
      write_string(out, name);
      write_pod(out, static_cast<int64_t>(st.t));
      write_pod(out, static_cast<uint64_t>(st.m.size()));
      out.write(reinterpret_cast<const char*>(st.m.data()),
                static_cast<std::streamsize>(st.m.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(st.v.data()),
                static_cast<std::streamsize>(st.v.size() * sizeof(double)));
    }
    check(out.good(), "write failed for ", tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint ", path);
  char magic[8];
  in.read(magic, 8);
  check(in.good() && std::string(magic, 8) == std::string(kCheckpointMagic, 8),
        "not a checkpoint file: ", path);
  const auto version = read_pod<uint32_t>(in);
  check(version == kCheckpointVersion, "unsupported checkpoint version ", version, " in ", path);
  Checkpoint ck;
  ck.config = config_from_json(json::parse(read_string(in)));
  ck.stage = read_string(in);
  check(ck.stage == "pretrain" || ck.stage == "finetune", "checkpoint ", path,
        " has invalid stage ", ck.stage);
  ck.step = static_cast<long>(read_pod<int64_t>(in));
  const auto n_speakers = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_speakers; ++i) ck.speakers.push_back(read_string(in));
  const auto n_params = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(in);
    TensorData td;
    const auto ndim = read_pod<uint32_t>(in);
    size_t count = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      td.shape.push_back(static_cast<int>(read_pod<int32_t>(in)));
      count *= static_cast<size_t>(td.shape.back());
    }
    const auto n = read_pod<uint64_t>(in);
    check(n == count, "checkpoint ", path, ": corrupt tensor ", name);
    td.data.resize(n);
    in.read(reinterpret_cast<char*>(td.data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    ck.params.emplace(name, std::move(td));
  }
  const auto n_adam = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_adam; ++i) {
    const std::string name = read_string(in);
    Adam::ParamState st;
    st.t = static_cast<long>(read_pod<int64_t>(in));
    const auto n = read_pod<uint64_t>(in);
    st.m.resize(n);
    st.v.resize(n);
    in.read(reinterpret_cast<char*>(st.m.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(st.v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    ck.adam.emplace(name, std::move(st));
  }
  check(in.good(), "checkpoint ", path, " is truncated");
  return ck;
}

// Stage transition: the only legal one is pretrain -> finetune. Registers the
// target speaker if new (fresh embedding from the provided vector, else the
// mean of existing rows) and flips the stage tag; parameters are untouched for
// known targets.
inline Checkpoint begin_finetune(Checkpoint ck, const std::string& target_speaker,
                                 const std::vector<double>* init_vector = nullptr) {
  check(ck.stage == "pretrain",
        "finetuning requires a pretrain-stage checkpoint; got stage ", ck.stage);
  bool known = false;
  for (const auto& s : ck.speakers)
    if (s == target_speaker) known = true;
  if (!known) {
    const int sd = ck.config.model.speaker_dim;
    const int S = ck.config.model.n_speakers;
    auto& table = ck.params.at("tts.speaker_table");
    check(table.shape == std::vector<int>{S, sd}, "speaker table shape mismatch");
    std::vector<double> row(sd, 0.0);
    if (init_vector) {
      check(static_cast<int>(init_vector->size()) == sd, "speaker init vector must have dim ", sd);
      row = *init_vector;
    } else {
      for (int s = 0; s < S; ++s)
        for (int d = 0; d < sd; ++d) row[d] += table.data[static_cast<size_t>(s) * sd + d] / S;
    }
    table.data.insert(table.data.end(), row.begin(), row.end());
    table.shape[0] = S + 1;
    if (auto it = ck.adam.find("tts.speaker_table"); it != ck.adam.end()) {
      it->second.m.insert(it->second.m.end(), sd, 0.0);
      it->second.v.insert(it->second.v.end(), sd, 0.0);
    }
    // widen the classifier head so shapes stay consistent with n_speakers
    auto& w = ck.params.at("cls.out.weight");
    const int H = w.shape[0];
    check(w.shape == std::vector<int>{H, S}, "classifier head shape mismatch");
    TensorData w2{{H, S + 1}, std::vector<double>(static_cast<size_t>(H) * (S + 1), 0.0)};
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s)
        w2.data[static_cast<size_t>(h) * (S + 1) + s] = w.data[static_cast<size_t>(h) * S + s];
    w = std::move(w2);
    auto& b = ck.params.at("cls.out.bias");
    b.shape = {S + 1};
    b.data.push_back(0.0);
    for (const char* name : {"cls.out.weight", "cls.out.bias"}) {
      if (auto it = ck.adam.find(name); it != ck.adam.end()) {
        const auto& p = ck.params.at(name);
        Adam::ParamState st;
        st.t = it->second.t;
        st.m.assign(p.data.size(), 0.0);
        st.v.assign(p.data.size(), 0.0);
        it->second = std::move(st);
      }
    }
    ck.speakers.push_back(target_speaker);
    ck.config.model.n_speakers = S + 1;
  }
  ck.stage = "finetune";
  ck.config.training.stage = "finetune";
  return ck;
}

// ---- trainer ----

struct StepMetrics {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;  // weighted synthesis terms + w_adv * adversarial CE
  double mel_before = 0.0, mel_after = 0.0, stop = 0.0, adversarial = 0.0;
  double accuracy = 0.0;
  bool encoder_updated = false;
};

struct BatchLoss {
  ag::Tensor total;  // backward target: weighted synthesis + unweighted adversarial CE
  double synth_weighted = 0.0;
  double mel_before = 0.0, mel_after = 0.0, stop = 0.0;
  double adversarial = 0.0;  // CE value
  double accuracy = 0.0;
  bool has_adv = false;
};

class Trainer {
public:
  Trainer(Config cfg, const std::vector<std::string>& speakers) : cfg_(std::move(cfg)) {
    check(!speakers.empty(), "trainer needs at least one speaker");
    cfg_.model.n_speakers = static_cast<int>(speakers.size());
    cfg_.validate();
    speakers_ = speakers;
    stage_ = "pretrain";
    cfg_.training.stage = stage_;
    Rng rng(cfg_.training.seed);
    build_modules(rng);
    adam_ = Adam(cfg_.training.adam_beta1, cfg_.training.adam_beta2, cfg_.training.adam_eps);
  }

  explicit Trainer(const Checkpoint& ck) : cfg_(ck.config) {
    cfg_.validate();
    check(static_cast<int>(ck.speakers.size()) == cfg_.model.n_speakers,
          "checkpoint speaker list does not match n_speakers");
    speakers_ = ck.speakers;
    stage_ = ck.stage;
    step_ = ck.step;
    Rng rng(cfg_.training.seed);
    build_modules(rng);
    // overwrite initialized values with the stored tensors
    check(ck.params.size() == store_.all().size(), "checkpoint holds ", ck.params.size(),
          " tensors but the model defines ", store_.all().size());
    for (const auto& [name, tensor] : store_.all()) {
      auto it = ck.params.find(name);
      check(it != ck.params.end(), "checkpoint is missing parameter ", name);
      check(it->second.shape == tensor.shape(), "checkpoint shape mismatch for ", name);
      tensor.node()->value = it->second.data;
    }
    adam_ = Adam(cfg_.training.adam_beta1, cfg_.training.adam_beta2, cfg_.training.adam_eps);
    for (const auto& [name, st] : ck.adam) {
      check(store_.has(name), "optimizer state for unknown parameter ", name);
      check(st.m.size() == store_.get(name).size(), "optimizer state size mismatch for ", name);
      adam_.states()[name] = st;
    }
    if (stage_ == "finetune") store_.freeze_prefix("pros.");
    // every pretrain step ticked the schedule once; replay so the encoder
    // update cadence continues where the run left off
    if (stage_ == "pretrain" && cfg_.training.w_adversarial > 0.0)
      for (long i = 0; i < step_; ++i) sched_.tick();
  }

  const Config& config() const { return cfg_; }
  const std::string& stage() const { return stage_; }
  long step() const { return step_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  TransformerTTS& model() { return *model_; }
  const ReferenceEncoder& reference_encoder() const { return *refenc_; }
  const SpeakerClassifier& classifier() const { return *cls_; }
  AdversarialSchedule& schedule() { return sched_; }
  const std::vector<std::string>& speakers() const { return speakers_; }

  int speaker_row(const std::string& name) const {
    for (size_t i = 0; i < speakers_.size(); ++i)
      if (speakers_[i] == name) return static_cast<int>(i);
    fail("unknown speaker: ", name);
  }

  double effective_lambda() const {
    double l = cfg_.training.grl_lambda;
    if (cfg_.training.grl_ramp && cfg_.training.max_steps > 0) {
      const double ramp_steps = 0.1 * cfg_.training.max_steps;
      l *= std::min(1.0, static_cast<double>(step_ + 1) / std::max(1.0, ramp_steps));
    }
    return l;
  }

  BatchLoss compute_batch_loss(const std::vector<const Utterance*>& batch, double lambda_eff,
                               bool with_adversarial, uint64_t base_seed, bool train_mode) {
    check(!batch.empty(), "empty batch");
    const auto& tc = cfg_.training;
    BatchLoss bl;
    ag::Tensor synth_sum;
    std::vector<ag::Tensor> codes;
    std::vector<int> labels;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Utterance* u = batch[i];
      check(u->frames >= 1, "utterance ", u->id, " has no frames");
      const uint64_t seed_u = mix64(base_seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
      model_->set_dropout_state(seed_u, train_mode);
      auto enc = model_->encode(u->tokens);
      auto mel_t = ag::Tensor::leaf({u->frames, cfg_.model.mel_dim}, u->mel, false);
      auto code = refenc_->encode(mel_t);
      const int row = speaker_row(u->speaker);
      auto cond = model_->condition(enc, model_->speaker_vector(row), &code);
      auto out = model_->forward_teacher_forced(cond, mel_t, seed_u);
      auto sl = synthesis_loss(out, u->mel, u->frames, tc);
      synth_sum = synth_sum.defined() ? ag::add(synth_sum, sl.total) : sl.total;
      bl.mel_before += sl.mel_before;
      bl.mel_after += sl.mel_after;
      bl.stop += sl.stop;
      if (with_adversarial) {
        codes.push_back(code);
        labels.push_back(row);
      }
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    auto synth = ag::scale(synth_sum, inv_b);
    bl.mel_before *= inv_b;
    bl.mel_after *= inv_b;
    bl.stop *= inv_b;
    bl.synth_weighted = synth.scalar();
    if (with_adversarial) {
      auto codes_mat = codes.size() == 1 ? codes[0] : ag::row_concat(codes);
      auto adv = adversarial_branch(*cls_, codes_mat, labels, lambda_eff, tc.w_adversarial);
      bl.adversarial = adv.loss.scalar();
      bl.accuracy = adv.accuracy;
      bl.has_adv = true;
      bl.total = ag::add(synth, adv.loss);
    } else {
      bl.total = synth;
    }
    return bl;
  }

  StepMetrics train_step(const std::vector<const Utterance*>& batch) {
    const auto& tc = cfg_.training;
    const bool pretrain = stage_ == "pretrain";
    const bool with_adv = pretrain && tc.w_adversarial > 0.0;
    store_.zero_grads();
    const uint64_t base_seed = mix64(tc.seed ^ static_cast<uint64_t>(step_ + 1));
    auto bl = compute_batch_loss(batch, effective_lambda(), with_adv, base_seed, true);
    ag::backward(bl.total);

    bool enc_due = pretrain;
    if (with_adv) enc_due = sched_.tick();
    auto include = [&](const std::string& name) {
      if (!pretrain && name.rfind("cls.", 0) == 0) return false;  // adversarial disabled
      if (name.rfind("pros.", 0) == 0) return enc_due;
      return true;
    };
    clip_gradients(store_, tc.clip_norm, include);
    const double lr = noam_lr(step_ + 1, cfg_.model.layer_width, tc.warmup_steps, tc.lr_scale);
    adam_.step(store_, lr, include);
    ++step_;

    StepMetrics m;
    m.step = step_;
    m.lr = lr;
    m.mel_before = bl.mel_before;
    m.mel_after = bl.mel_after;
    m.stop = bl.stop;
    m.adversarial = bl.adversarial;
    m.accuracy = bl.accuracy;
    m.encoder_updated = enc_due && !store_.is_frozen("pros.proj.bias");
    m.loss = bl.synth_weighted + tc.w_adversarial * bl.adversarial;
    return m;
  }

  // Deterministic batch selection and the step loop; n_steps == 0 is a no-op.
  void run(const std::vector<Utterance>& data, int n_steps, std::ostream* log = nullptr,
           const std::string& checkpoint_path = {}) {
    check(!data.empty(), "empty dataset");
    const auto& tc = cfg_.training;
    const bool pretrain = stage_ == "pretrain";
    for (const auto& u : data) speaker_row(u.speaker);  // validate labels up front
    if (pretrain && tc.w_adversarial > 0.0)
      check(dataset_speakers(data).size() >= 2,
            "pretraining with adversarial loss requires at least 2 speakers");
    if (!pretrain)
      check(dataset_speakers(data).size() == 1, "finetuning expects a single-speaker dataset");

    const int batch_size = pretrain ? tc.batch_size : tc.finetune_batch_size;
    for (int i = 0; i < n_steps; ++i) {
      auto batch = pick_batch(data, batch_size);
      auto m = train_step(batch);
      if (log && (m.step % tc.log_every == 0 || i + 1 == n_steps)) {
        json rec{{"step", m.step},
                 {"stage", stage_},
                 {"lr", m.lr},
                 {"loss", m.loss},
                 {"mel_before", m.mel_before},
                 {"mel_after", m.mel_after},
                 {"stop", m.stop},
                 {"adversarial", m.adversarial},
                 {"accuracy", m.accuracy}};
        (*log) << rec.dump() << "\n";
      }
      if (!checkpoint_path.empty() && m.step % tc.checkpoint_every == 0)
        save_checkpoint(checkpoint(), checkpoint_path);
    }
  }

  // Teacher-forced loss over a dataset with fixed seeds; no parameter updates.
  double evaluate(const std::vector<Utterance>& data) {
    check(!data.empty(), "empty dataset");
    double acc = 0.0;
    for (const auto& u : data) {
      std::vector<const Utterance*> one{&u};
      auto bl = compute_batch_loss(one, 0.0, false, mix64(cfg_.training.seed ^ 0xE7A1ull), false);
      acc += bl.synth_weighted;
    }
    return acc / static_cast<double>(data.size());
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.config = cfg_;
    ck.config.training.stage = stage_;
    ck.stage = stage_;
    ck.step = step_;
    ck.speakers = speakers_;
    for (const auto& [name, tensor] : store_.all())
      ck.params.emplace(name, TensorData{tensor.shape(), tensor.data()});
    ck.adam = adam_.states();
    return ck;
  }

private:
  void build_modules(Rng& rng) {
    model_ = std::make_unique<TransformerTTS>(cfg_.model, vocabulary().size(), store_, rng);
    refenc_ = std::make_unique<ReferenceEncoder>(cfg_.model, store_, rng);
    cls_ = std::make_unique<SpeakerClassifier>(cfg_.model, store_, rng);
  }

  std::vector<const Utterance*> pick_batch(const std::vector<Utterance>& data, int batch_size) {
    const size_t n = data.size();
    const size_t take = std::min<size_t>(batch_size, n);
    Rng rng(mix64(cfg_.training.seed ^ 0xBA7C4ull ^ static_cast<uint64_t>(step_ + 1)));
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < take; ++i) {
      const size_t j = i + rng.below(n - i);
      std::swap(idx[i], idx[j]);
    }
    std::vector<const Utterance*> batch;
    for (size_t i = 0; i < take; ++i) batch.push_back(&data[idx[i]]);
    return batch;
  }

  Config cfg_;
  std::vector<std::string> speakers_;
  std::string stage_ = "pretrain";
  long step_ = 0;
  nn::ParameterStore store_;
  std::unique_ptr<TransformerTTS> model_;
  std::unique_ptr<ReferenceEncoder> refenc_;
  std::unique_ptr<SpeakerClassifier> cls_;
  Adam adam_;
  AdversarialSchedule sched_;
};

}  // namespace provoc
