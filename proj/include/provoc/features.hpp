#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "provoc/audio.hpp"
#include "provoc/common.hpp"
#include "provoc/fft.hpp"

namespace provoc {

struct FeatureConfig {
  int sample_rate = 24000;
  int n_fft = 2048;
  int win_length = 1200;  // 50 ms at 24 kHz
  int hop_length = 300;   // 12.5 ms at 24 kHz
  int n_mels = 80;
  double fmin = 80.0;
  double fmax = 7600.0;
  double log_floor = 1e-5;

  void validate() const {
    check(sample_rate > 0, "sample_rate must be positive");
    check(is_power_of_two(static_cast<size_t>(n_fft)), "n_fft must be a power of two, got ", n_fft);
    check(win_length > 0 && win_length <= n_fft, "win_length must be in (0, n_fft], got ",
          win_length, " with n_fft ", n_fft);
    check(hop_length > 0, "hop_length must be positive");
    check(n_mels > 0, "n_mels must be positive");
    check(fmin >= 0 && fmax > fmin && fmax <= sample_rate / 2.0,
          "mel band edges must satisfy 0 <= fmin < fmax <= nyquist");
    check(log_floor > 0, "log_floor must be positive");
  }
};

struct MelSpectrogram {
  std::vector<double> data;  // row-major, frames x n_mels
  int frames = 0;
  int n_mels = 0;
  int hop_length = 0;
  int win_length = 0;
  int sample_rate = 0;

  double& at(int t, int m) { return data[static_cast<size_t>(t) * n_mels + m]; }
  double at(int t, int m) const { return data[static_cast<size_t>(t) * n_mels + m]; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with unit peak, spaced evenly on the mel scale.
class MelFilterbank {
public:
  MelFilterbank(const FeatureConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    edges_.resize(cfg.n_mels + 2);
    for (int k = 0; k < cfg.n_mels + 2; ++k)
      edges_[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * k / (cfg.n_mels + 1));
    weights_.assign(static_cast<size_t>(cfg.n_mels) * bins, 0.0);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double lo = edges_[m], center = edges_[m + 1], hi = edges_[m + 2];
      for (int b = 0; b < bins; ++b) {
        const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
        double w = 0.0;
        if (f > lo && f < center) w = (f - lo) / (center - lo);
        else if (f == center) w = 1.0;
        else if (f > center && f < hi) w = (hi - f) / (hi - center);
        weights_[static_cast<size_t>(m) * bins + b] = w;
      }
    }
  }

  int bins() const { return cfg_.n_fft / 2 + 1; }
  int n_mels() const { return cfg_.n_mels; }
  double center_frequency(int m) const { return edges_[m + 1]; }
  double weight(int m, int bin) const { return weights_[static_cast<size_t>(m) * bins() + bin]; }

  // mel energies for one power-spectrum frame
  void apply(const std::vector<double>& power, std::vector<double>& mel_out) const {
    const int nb = bins();
    mel_out.assign(cfg_.n_mels, 0.0);
    for (int m = 0; m < cfg_.n_mels; ++m) {
      double acc = 0.0;
      const double* w = &weights_[static_cast<size_t>(m) * nb];
      for (int b = 0; b < nb; ++b) acc += w[b] * power[b];
      mel_out[m] = acc;
    }
  }

  const std::vector<double>& weights() const { return weights_; }

private:
  FeatureConfig cfg_;
  std::vector<double> edges_;     // n_mels + 2 band edge frequencies in Hz
  std::vector<double> weights_;   // n_mels x bins
};

inline std::vector<double> hann_window(int length) {
  // periodic Hann
  const double pi = 3.14159265358979323846;
  std::vector<double> w(length);
  for (int i = 0; i < length; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * i / length));
  return w;
}

// Frame count under the center zero-padding convention: n_fft/2 zeros on each
// side, frames every hop_length samples, so T = 1 + floor(len / hop).
inline int stft_frame_count(size_t samples, const FeatureConfig& cfg) {
  return 1 + static_cast<int>(samples / static_cast<size_t>(cfg.hop_length));
}

// Complex STFT. The win_length window sits centered inside the n_fft buffer.
inline std::vector<std::vector<cplx>> stft(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  check(w.samples.size() >= static_cast<size_t>(cfg.win_length),
        "waveform too short for analysis: ", w.samples.size(), " samples, minimum is one window (",
        cfg.win_length, ")");
  const int T = stft_frame_count(w.samples.size(), cfg);
  const int pad = cfg.n_fft / 2;
  const int offset = (cfg.n_fft - cfg.win_length) / 2;
  const std::vector<double> window = hann_window(cfg.win_length);

  std::vector<double> padded(w.samples.size() + 2 * pad, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + pad);

  std::vector<std::vector<cplx>> frames(T);
  std::vector<double> buf(cfg.n_fft);
  for (int t = 0; t < T; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const size_t start = static_cast<size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) {
      const size_t src = start + offset + i;
      if (src < padded.size()) buf[offset + i] = padded[src] * window[i];
    }
    frames[t] = rfft(buf, cfg.n_fft);
  }
  return frames;
}

// Inverse STFT with overlap-add and squared-window normalization. Returns
// (T - 1) * hop samples, the center-trimmed reconstruction span.
inline Waveform istft(const std::vector<std::vector<cplx>>& frames, const FeatureConfig& cfg) {
  cfg.validate();
  check(!frames.empty(), "istft needs at least one frame");
  const int T = static_cast<int>(frames.size());
  const int pad = cfg.n_fft / 2;
  const int offset = (cfg.n_fft - cfg.win_length) / 2;
  const std::vector<double> window = hann_window(cfg.win_length);

  const size_t buf_len = static_cast<size_t>(T - 1) * cfg.hop_length + cfg.n_fft;
  std::vector<double> acc(buf_len, 0.0), norm(buf_len, 0.0);
  for (int t = 0; t < T; ++t) {
    std::vector<double> x = irfft(frames[t], cfg.n_fft);
    const size_t start = static_cast<size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) {
      acc[start + offset + i] += x[offset + i] * window[i];
      norm[start + offset + i] += window[i] * window[i];
    }
  }
  const size_t out_len = static_cast<size_t>(T - 1) * cfg.hop_length;
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    const double n = norm[i + pad];
    out.samples[i] = n > 1e-9 ? acc[i + pad] / n : 0.0;
  }
  return out;
}

// 80-band log-mel features: natural log of floored mel energies over the
// power spectrum.
inline MelSpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg) {
  const MelFilterbank fb(cfg);
  const auto frames = stft(w, cfg);
  const int T = static_cast<int>(frames.size());
  const int bins = cfg.n_fft / 2 + 1;

  MelSpectrogram mel;
  mel.frames = T;
  mel.n_mels = cfg.n_mels;
  mel.hop_length = cfg.hop_length;
  mel.win_length = cfg.win_length;
  mel.sample_rate = cfg.sample_rate;
  mel.data.resize(static_cast<size_t>(T) * cfg.n_mels);

  std::vector<double> power(bins), energies;
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < bins; ++b) power[b] = std::norm(frames[t][b]);
    fb.apply(power, energies);
    for (int m = 0; m < cfg.n_mels; ++m)
      mel.at(t, m) = std::log(std::max(cfg.log_floor, energies[m]));
  }
  return mel;
}

// ---- binary mel container (see docs/FORMATS.md) ----
// magic "PROVOCML", u32 version, u32 frames, u32 n_mels, u32 sample_rate,
// u32 hop_length, u32 win_length, then frames*n_mels little-endian f32.

inline void save_mel(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write mel file: ", path);
  os.write("PROVOCML", 8);
  write_pod<uint32_t>(os, 1);
  write_pod<uint32_t>(os, static_cast<uint32_t>(mel.frames));
  write_pod<uint32_t>(os, static_cast<uint32_t>(mel.n_mels));
  write_pod<uint32_t>(os, static_cast<uint32_t>(mel.sample_rate));
  write_pod<uint32_t>(os, static_cast<uint32_t>(mel.hop_length));
  write_pod<uint32_t>(os, static_cast<uint32_t>(mel.win_length));
  for (double v : mel.data) write_pod<float>(os, static_cast<float>(v));
}

inline MelSpectrogram load_mel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read mel file: ", path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "PROVOCML", 8) != 0) fail("not a mel container: ", path);
  const auto version = read_pod<uint32_t>(is);
  check(version == 1, "unsupported mel container version ", version, " in ", path);
  MelSpectrogram mel;
  mel.frames = static_cast<int>(read_pod<uint32_t>(is));
  mel.n_mels = static_cast<int>(read_pod<uint32_t>(is));
  mel.sample_rate = static_cast<int>(read_pod<uint32_t>(is));
  mel.hop_length = static_cast<int>(read_pod<uint32_t>(is));
  mel.win_length = static_cast<int>(read_pod<uint32_t>(is));
  check(mel.frames >= 1 && mel.n_mels >= 1, "corrupt mel header in ", path);
  mel.data.resize(static_cast<size_t>(mel.frames) * mel.n_mels);
  for (auto& v : mel.data) v = static_cast<double>(read_pod<float>(is));
  return mel;
}

}  // namespace provoc
