#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/config.hpp"
#include "provoc/nn.hpp"
#include "provoc/tensor.hpp"

namespace provoc {

// entry (pos, 2i) = sin(pos / 10000^(2i/dim)), entry (pos, 2i+1) = cos(same)
inline double positional_encoding_entry(int pos, int col, int dim) {
  const int pair = col / 2;
  const double angle = pos / std::pow(10000.0, (2.0 * pair) / dim);
  return col % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

inline std::vector<double> positional_encoding_values(int length, int dim) {
  check(length > 0 && dim > 0, "positional encoding dims must be positive");
  check(dim % 2 == 0, "positional encoding dim must be even, got ", dim);
  std::vector<double> v(static_cast<size_t>(length) * dim);
  for (int p = 0; p < length; ++p)
    for (int c = 0; c < dim; ++c)
      v[static_cast<size_t>(p) * dim + c] = positional_encoding_entry(p, c, dim);
  return v;
}

inline ag::Tensor positional_encoding(int length, int dim) {
  return ag::Tensor::leaf({length, dim}, positional_encoding_values(length, dim), false);
}

struct EncoderOutput {
  ag::Tensor states;  // L x layer_width
  int valid_length = 0;
};

struct DecoderOutput {
  ag::Tensor mel_before;   // T x mel_dim
  ag::Tensor mel_after;    // T x mel_dim
  ag::Tensor stop_logits;  // T x 1
  std::vector<ag::Tensor> attention_maps;  // layer-major, head-minor
};

namespace detail {

// Dropout whose mask is derived per row from (seed, tag, row); masks for a row
// are independent of the total sequence length, keeping truncation exact.
inline ag::Tensor row_dropout(const ag::Tensor& x, double rate, uint64_t seed, uint64_t tag,
                              bool active) {
  if (!active || rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  const int m = x.rows(), n = x.cols();
  std::vector<double> mask(x.size());
  for (int i = 0; i < m; ++i) {
    Rng rng(mix64(mix64(seed ^ (tag * 0x9E3779B97F4A7C15ull)) ^ static_cast<uint64_t>(i)));
    for (int j = 0; j < n; ++j)
      mask[static_cast<size_t>(i) * n + j] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return ag::mul(x, ag::Tensor::leaf(x.shape(), std::move(mask), false));
}

}  // namespace detail

class MultiHeadAttention {
public:
  MultiHeadAttention() = default;
  MultiHeadAttention(nn::ParameterStore& store, const std::string& prefix, int width, int heads,
                     Rng& rng)
      : width_(width), heads_(heads), head_dim_(width / heads) {
    check(width % heads == 0, "attention width not divisible by heads");
    wq_ = nn::Linear(store, prefix + ".wq", width, width, rng);
    wk_ = nn::Linear(store, prefix + ".wk", width, width, rng);
    wv_ = nn::Linear(store, prefix + ".wv", width, width, rng);
    wo_ = nn::Linear(store, prefix + ".wo", width, width, rng);
  }

  // allowed: Tq x Tk mask; attn_out collects one attention matrix per head
  ag::Tensor forward(const ag::Tensor& q_in, const ag::Tensor& kv_in,
                     std::shared_ptr<const std::vector<uint8_t>> allowed,
                     std::vector<ag::Tensor>* attn_out) const {
    auto q = wq_.forward(q_in);
    auto k = wk_.forward(kv_in);
    auto v = wv_.forward(kv_in);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    std::vector<ag::Tensor> heads;
    for (int h = 0; h < heads_; ++h) {
      auto qh = ag::col_slice(q, h * head_dim_, (h + 1) * head_dim_);
      auto kh = ag::col_slice(k, h * head_dim_, (h + 1) * head_dim_);
      auto vh = ag::col_slice(v, h * head_dim_, (h + 1) * head_dim_);
      auto scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_scale);
      auto attn = ag::masked_softmax_rows(scores, allowed);
      if (attn_out) attn_out->push_back(attn);
      heads.push_back(ag::matmul(attn, vh));
    }
    return wo_.forward(heads_ == 1 ? heads[0] : ag::col_concat(heads));
  }

  static size_t param_count(int width) { return 4 * nn::Linear::param_count(width, width); }

private:
  int width_ = 0, heads_ = 0, head_dim_ = 0;
  nn::Linear wq_, wk_, wv_, wo_;
};

// One post-LN transformer block: each sub-layer is residual then layer norm.
struct TransformerBlock {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;  // decoder only
  nn::LayerNorm ln_self, ln_cross, ln_ff;
  nn::Linear ff1, ff2;
  bool has_cross = false;
};

class TransformerTTS {
public:
  TransformerTTS(const ModelConfig& cfg, int vocab_size, nn::ParameterStore& store, Rng& rng)
      : cfg_(cfg), vocab_size_(vocab_size) {
    cfg.validate();
    const int w = cfg.layer_width;
    embed_ = store.create_uniform("tts.embed", {vocab_size, w}, w, rng);
    speaker_table_ = store.create_uniform("tts.speaker_table", {cfg.n_speakers, cfg.speaker_dim},
                                          cfg.speaker_dim, rng);
    alpha_enc_ = store.create_constant("tts.alpha_enc", {1}, 1.0);
    alpha_dec_ = store.create_constant("tts.alpha_dec", {1}, 1.0);
    spk_proj_ = nn::Linear(store, "tts.spk_proj", cfg.speaker_dim, w, rng, /*bias=*/false);
    pros_proj_ = nn::Linear(store, "tts.pros_proj", cfg.prosody_dim, w, rng, /*bias=*/false);

    for (int b = 0; b < cfg.n_blocks; ++b) {
      const std::string p = "tts.enc." + std::to_string(b);
      TransformerBlock blk;
      blk.self_attn = MultiHeadAttention(store, p + ".attn", w, cfg.n_heads, rng);
      blk.ln_self = nn::LayerNorm(store, p + ".ln1", w);
      blk.ff1 = nn::Linear(store, p + ".ff1", w, cfg.ff_width(), rng);
      blk.ff2 = nn::Linear(store, p + ".ff2", cfg.ff_width(), w, rng);
      blk.ln_ff = nn::LayerNorm(store, p + ".ln2", w);
      encoder_.push_back(std::move(blk));
    }
    for (int b = 0; b < cfg.n_blocks; ++b) {
      const std::string p = "tts.dec." + std::to_string(b);
      TransformerBlock blk;
      blk.has_cross = true;
      blk.self_attn = MultiHeadAttention(store, p + ".attn", w, cfg.n_heads, rng);
      blk.ln_self = nn::LayerNorm(store, p + ".ln1", w);
      blk.cross_attn = MultiHeadAttention(store, p + ".cross", w, cfg.n_heads, rng);
      blk.ln_cross = nn::LayerNorm(store, p + ".ln2", w);
      blk.ff1 = nn::Linear(store, p + ".ff1", w, cfg.ff_width(), rng);
      blk.ff2 = nn::Linear(store, p + ".ff2", cfg.ff_width(), w, rng);
      blk.ln_ff = nn::LayerNorm(store, p + ".ln3", w);
      decoder_.push_back(std::move(blk));
    }

    prenet1_ = nn::Linear(store, "tts.prenet1", cfg.mel_dim, cfg.prenet_width, rng);
    prenet2_ = nn::Linear(store, "tts.prenet2", cfg.prenet_width, cfg.prenet_width, rng);
    prenet_proj_ = nn::Linear(store, "tts.prenet_proj", cfg.prenet_width, w, rng);
    mel_head_ = nn::Linear(store, "tts.mel_head", w, cfg.mel_dim, rng);
    stop_head_ = nn::Linear(store, "tts.stop_head", w, 1, rng);

    // causal postnet: kernel reaches left only, so mel_after stays causal
    for (int i = 0; i < cfg.postnet_layers; ++i) {
      const int c_in = i == 0 ? cfg.mel_dim : cfg.postnet_channels;
      const int c_out = i == cfg.postnet_layers - 1 ? cfg.mel_dim : cfg.postnet_channels;
      postnet_.emplace_back(store, "tts.postnet." + std::to_string(i), c_in, c_out,
                            cfg.postnet_kernel, cfg.postnet_kernel - 1, 0, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }

  ag::Tensor speaker_vector(int row) const {
    check(row >= 0 && row < cfg_.n_speakers, "speaker row ", row, " out of range [0,",
          cfg_.n_speakers, ")");
    return ag::row_slice(speaker_table_, row, row + 1);
  }

  EncoderOutput encode(const std::vector<int>& tokens, int valid_length = -1) const {
    const int L = static_cast<int>(tokens.size());
    check(L > 0, "encode: empty token sequence");
    check(L <= cfg_.max_positions, "sequence length ", L, " exceeds max positions ",
          cfg_.max_positions);
    if (valid_length < 0) valid_length = L;
    check(valid_length >= 1 && valid_length <= L, "invalid valid_length");

    auto x = ag::add(ag::embedding(embed_, tokens),
                     ag::scale_by_param(positional_encoding(L, cfg_.layer_width), alpha_enc_));
    auto allowed = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(L) * L, 0);
    for (int i = 0; i < L; ++i) {
      if (i < valid_length)
        for (int j = 0; j < valid_length; ++j) (*allowed)[static_cast<size_t>(i) * L + j] = 1;
      else
        (*allowed)[static_cast<size_t>(i) * L + i] = 1;  // padding rows attend to themselves
    }
    for (size_t b = 0; b < encoder_.size(); ++b) {
      const auto& blk = encoder_[b];
      auto a = blk.self_attn.forward(x, x, allowed, nullptr);
      a = detail::row_dropout(a, cfg_.dropout, dropout_seed_, 100 + b * 2, dropout_active_);
      x = blk.ln_self.forward(ag::add(x, a));
      auto f = blk.ff2.forward(ag::relu(blk.ff1.forward(x)));
      f = detail::row_dropout(f, cfg_.dropout, dropout_seed_, 101 + b * 2, dropout_active_);
      x = blk.ln_ff.forward(ag::add(x, f));
    }
    return EncoderOutput{x, valid_length};
  }

  // Projects speaker (and optional prosody) vectors and adds the combined
  // offset identically to every frame.
  EncoderOutput condition(const EncoderOutput& enc, const ag::Tensor& speaker,
                          const ag::Tensor* prosody) const {
    check(static_cast<int>(speaker.size()) == cfg_.speaker_dim,
          "speaker vector dimension mismatch: ", speaker.size(), " vs ", cfg_.speaker_dim);
    auto offset = spk_proj_.forward(speaker);
    if (prosody) {
      check(static_cast<int>(prosody->size()) == cfg_.prosody_dim,
            "prosody code dimension mismatch: ", prosody->size(), " vs ", cfg_.prosody_dim);
      offset = ag::add(offset, pros_proj_.forward(*prosody));
    }
    return EncoderOutput{ag::add_rowvec(enc.states, offset), enc.valid_length};
  }

  // prev_frames: T x mel_dim shifted history (row 0 is the zero go-frame).
  DecoderOutput decode(const EncoderOutput& enc, const ag::Tensor& prev_frames, uint64_t seed,
                       bool with_postnet = true) const {
    check(enc.states.defined() && enc.states.rows() > 0, "decode: empty encoder output");
    const int T = prev_frames.rows(), L = enc.states.rows();
    check(T > 0, "decode: empty history");
    check(prev_frames.cols() == cfg_.mel_dim, "decode: history width mismatch");
    check(T <= cfg_.max_positions, "decode length ", T, " exceeds max positions ",
          cfg_.max_positions);

    // prenet with dropout active in training and inference alike
    auto h = ag::relu(prenet1_.forward(prev_frames));
    h = detail::row_dropout(h, cfg_.prenet_dropout, seed, 1, true);
    h = ag::relu(prenet2_.forward(h));
    h = detail::row_dropout(h, cfg_.prenet_dropout, seed, 2, true);
    auto x = ag::add(prenet_proj_.forward(h),
                     ag::scale_by_param(positional_encoding(T, cfg_.layer_width), alpha_dec_));

    auto causal = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(T) * T, 0);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j <= i; ++j) (*causal)[static_cast<size_t>(i) * T + j] = 1;
    auto cross = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(T) * L, 0);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < enc.valid_length; ++j) (*cross)[static_cast<size_t>(i) * L + j] = 1;

    DecoderOutput out;
    for (size_t b = 0; b < decoder_.size(); ++b) {
      const auto& blk = decoder_[b];
      auto a = blk.self_attn.forward(x, x, causal, &out.attention_maps);
      a = detail::row_dropout(a, cfg_.dropout, seed, 200 + b * 3, dropout_active_);
      x = blk.ln_self.forward(ag::add(x, a));
      auto c = blk.cross_attn.forward(x, enc.states, cross, &out.attention_maps);
      c = detail::row_dropout(c, cfg_.dropout, seed, 201 + b * 3, dropout_active_);
      x = blk.ln_cross.forward(ag::add(x, c));
      auto f = blk.ff2.forward(ag::relu(blk.ff1.forward(x)));
      f = detail::row_dropout(f, cfg_.dropout, seed, 202 + b * 3, dropout_active_);
      x = blk.ln_ff.forward(ag::add(x, f));
    }

    out.mel_before = mel_head_.forward(x);
    out.stop_logits = stop_head_.forward(x);
    if (with_postnet) {
      auto r = out.mel_before;
      for (size_t i = 0; i < postnet_.size(); ++i) {
        r = postnet_[i].forward(r);
        if (i + 1 < postnet_.size()) r = ag::tanh_op(r);
      }
      out.mel_after = ag::add(out.mel_before, r);
    } else {
      out.mel_after = out.mel_before;
    }
    return out;
  }

  // Teacher forcing: history is the zero go-frame followed by target frames
  // shifted one step right.
  DecoderOutput forward_teacher_forced(const EncoderOutput& enc, const ag::Tensor& target_mels,
                                       uint64_t seed) const {
    const int T = target_mels.rows();
    check(T > 0, "teacher forcing requires nonempty targets");
    std::vector<double> prev(static_cast<size_t>(T) * cfg_.mel_dim, 0.0);
    if (T > 1)
      std::copy(target_mels.data().begin(),
                target_mels.data().begin() + static_cast<size_t>(T - 1) * cfg_.mel_dim,
                prev.begin() + cfg_.mel_dim);
    auto prev_t = ag::Tensor::leaf({T, cfg_.mel_dim}, std::move(prev), false);
    return decode(enc, prev_t, seed);
  }

  struct InferResult {
    std::vector<double> mel;  // frames x mel_dim, post-postnet
    int frames = 0;
    bool truncated = false;
  };

  // Greedy autoregressive loop feeding pre-postnet frames; the postnet is
  // applied once over the finished sequence.
  InferResult infer(const EncoderOutput& enc, int max_frames, uint64_t seed) const {
    check(max_frames >= 1, "infer: max_frames must be >= 1");
    ag::NoGradGuard no_grad;
    std::vector<double> history(cfg_.mel_dim, 0.0);  // go frame
    int frames = 0;
    bool stopped = false;
    while (frames < max_frames) {
      const int T = frames + 1;
      auto prev = ag::Tensor::leaf({T, cfg_.mel_dim}, history, false);
      auto out = decode(enc, prev, seed, /*with_postnet=*/false);
      const double* last = out.mel_before.data().data() + static_cast<size_t>(frames) * cfg_.mel_dim;
      history.insert(history.end(), last, last + cfg_.mel_dim);
      ++frames;
      const double logit = out.stop_logits.data()[static_cast<size_t>(frames - 1)];
      const double p = 1.0 / (1.0 + std::exp(-logit));
      if (p > cfg_.stop_threshold) {
        stopped = true;
        break;
      }
    }
    // final pass with postnet over the full predicted sequence
    auto prev = ag::Tensor::leaf({frames + 1, cfg_.mel_dim}, history, false);
    auto out = decode(enc, ag::row_slice(prev, 0, frames), seed);
    InferResult res;
    res.mel = out.mel_after.data();
    res.frames = frames;
    res.truncated = !stopped;
    return res;
  }

  void set_dropout_state(uint64_t seed, bool active) {
    dropout_seed_ = seed;
    dropout_active_ = active;
  }

  // Closed-form parameter count for the TTS network (speaker table included).
  static size_t expected_param_count(const ModelConfig& cfg, int vocab_size) {
    const size_t w = cfg.layer_width, f = cfg.ff_width();
    const size_t mha = 4 * (w * w + w);
    const size_t ln = 2 * w;
    const size_t ffn = w * f + f + f * w + w;
    const size_t enc_block = mha + 2 * ln + ffn;
    const size_t dec_block = 2 * mha + 3 * ln + ffn;
    size_t n = 0;
    n += static_cast<size_t>(vocab_size) * w;                       // embed
    n += static_cast<size_t>(cfg.n_speakers) * cfg.speaker_dim;     // speaker table
    n += 2;                                                         // positional gains
    n += static_cast<size_t>(cfg.speaker_dim) * w;                  // spk projection (no bias)
    n += static_cast<size_t>(cfg.prosody_dim) * w;                  // prosody projection (no bias)
    n += cfg.n_blocks * (enc_block + dec_block);
    n += static_cast<size_t>(cfg.mel_dim) * cfg.prenet_width + cfg.prenet_width;       // prenet1
    n += static_cast<size_t>(cfg.prenet_width) * cfg.prenet_width + cfg.prenet_width;  // prenet2
    n += static_cast<size_t>(cfg.prenet_width) * w + w;                                // prenet proj
    n += w * static_cast<size_t>(cfg.mel_dim) + cfg.mel_dim;                           // mel head
    n += w + 1;                                                                        // stop head
    for (int i = 0; i < cfg.postnet_layers; ++i) {
      const size_t c_in = i == 0 ? cfg.mel_dim : cfg.postnet_channels;
      const size_t c_out = i == cfg.postnet_layers - 1 ? cfg.mel_dim : cfg.postnet_channels;
      n += c_out * c_in * cfg.postnet_kernel + c_out;
    }
    return n;
  }

private:
  ModelConfig cfg_;
  int vocab_size_ = 0;
  ag::Tensor embed_, speaker_table_, alpha_enc_, alpha_dec_;
  nn::Linear spk_proj_, pros_proj_;
  std::vector<TransformerBlock> encoder_, decoder_;
  nn::Linear prenet1_, prenet2_, prenet_proj_, mel_head_, stop_head_;
  std::vector<nn::Conv1d> postnet_;
  uint64_t dropout_seed_ = 0;
  bool dropout_active_ = false;  // block/encoder dropout: training only
};

}  // namespace provoc
